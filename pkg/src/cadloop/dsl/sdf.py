"""Signed distance evaluation of programs (negative inside).

Sketch primitives use exact 2D distances; extrusion takes
``max(d2d, |w - mid| - height/2)``; booleans are min / max(a, -b) / max.
The combined field is a distance bound rather than an exact distance.
"""

from __future__ import annotations

import numpy as np

from .ast import Circle, Extrude, Polygon, Program, Rect

# (u, v, w) axes of each sketch plane; w is the extrusion direction.
PLANE_AXES = {"XY": (0, 1, 2), "XZ": (0, 2, 1), "YZ": (1, 2, 0)}


def rect_sdf(u: np.ndarray, v: np.ndarray, r: Rect) -> np.ndarray:
    qx = np.abs(u - r.cx) - 0.5 * r.w
    qy = np.abs(v - r.cy) - 0.5 * r.h
    outside = np.hypot(np.maximum(qx, 0.0), np.maximum(qy, 0.0))
    return outside + np.minimum(np.maximum(qx, qy), 0.0)


def circle_sdf(u: np.ndarray, v: np.ndarray, c: Circle) -> np.ndarray:
    return np.hypot(u - c.cx, v - c.cy) - c.r


def polygon_sdf(u: np.ndarray, v: np.ndarray, poly: Polygon) -> np.ndarray:
    pts = np.asarray(poly.points, dtype=np.float64)
    d2 = np.full(np.broadcast(u, v).shape, np.inf)
    inside = np.zeros(d2.shape, dtype=bool)
    n = len(pts)
    for i in range(n):
        ax, ay = pts[i]
        bx, by = pts[(i + 1) % n]
        ex, ey = bx - ax, by - ay
        wx, wy = u - ax, v - ay
        ee = ex * ex + ey * ey
        t = np.clip((wx * ex + wy * ey) / ee, 0.0, 1.0) if ee > 0 else 0.0
        dx, dy = wx - ex * t, wy - ey * t
        d2 = np.minimum(d2, dx * dx + dy * dy)
        # even-odd crossing test for the sign
        cond = (ay > v) != (by > v)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = ax + (v - ay) * ex / ey
        inside ^= cond & (u < xint)
    d = np.sqrt(d2)
    return np.where(inside, -d, d)


def primitive_sdf(u, v, p) -> np.ndarray:
    if isinstance(p, Rect):
        return rect_sdf(u, v, p)
    if isinstance(p, Circle):
        return circle_sdf(u, v, p)
    if isinstance(p, Polygon):
        return polygon_sdf(u, v, p)
    raise TypeError(f"not a primitive: {p!r}")


def sketch_sdf(u, v, sketch) -> np.ndarray:
    acc = np.full(np.broadcast(u, v).shape, np.inf)
    for p in sketch:
        d = primitive_sdf(u, v, p)
        acc = np.minimum(acc, d) if p.mode == "add" else np.maximum(acc, -d)
    return acc


def slab_sdf(w, step: Extrude) -> np.ndarray:
    return np.abs(w - (step.offset + 0.5 * step.height)) - 0.5 * step.height


def combine(acc: np.ndarray | None, d: np.ndarray, op: str) -> np.ndarray:
    if acc is None or op == "new":
        return d
    if op == "union":
        return np.minimum(acc, d)
    if op == "cut":
        return np.maximum(acc, -d)
    if op == "intersect":
        return np.maximum(acc, d)
    raise ValueError(f"unknown combine {op!r}")


def evaluate_sdf_points(program: Program, points) -> np.ndarray:
    """Field values at an (n, 3) array of points."""
    p = np.atleast_2d(np.asarray(points, dtype=np.float64))
    acc = None
    for step in program.steps:
        a, b, c = PLANE_AXES[step.plane]
        d = np.maximum(sketch_sdf(p[:, a], p[:, b], step.sketch), slab_sdf(p[:, c], step))
        acc = combine(acc, d, step.combine)
    return acc


def evaluate_sdf(program: Program, point) -> float:
    return float(evaluate_sdf_points(program, np.asarray(point, dtype=np.float64).reshape(1, 3))[0])


def evaluate_sdf_grid(program: Program, axis_coords: np.ndarray) -> np.ndarray:
    """Field on the tensor grid ``axis_coords``^3, indexed [ix, iy, iz].

    Each step's sketch field is computed once on its 2D plane and broadcast
    against the 1D slab term.
    """
    g = np.asarray(axis_coords, dtype=np.float64)
    n = len(g)
    acc = None
    for step in program.steps:
        a, b, c = PLANE_AXES[step.plane]
        d2 = sketch_sdf(g[:, None], g[None, :], step.sketch)  # [ia, ib]
        slab = slab_sdf(g, step)  # [ic]
        shape_2d = [1, 1, 1]
        shape_2d[a], shape_2d[b] = n, n
        # d2 is indexed (a, b); place it on those axes
        d2_full = d2 if a < b else d2.T
        d2_full = d2_full.reshape(shape_2d)
        shape_1d = [1, 1, 1]
        shape_1d[c] = n
        d = np.maximum(d2_full, slab.reshape(shape_1d))
        acc = combine(acc, d, step.combine)
    return np.broadcast_to(acc, (n, n, n))
