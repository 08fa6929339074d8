"""Exact nearest-point-on-surface queries.

Triangles are indexed by centroid in a KD-tree together with their bounding
radius around the centroid. A query first takes an upper bound from the few
closest centroids, then examines every triangle whose centroid ball can still
beat that bound, so the answer equals the exhaustive minimum.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from .mesh import TriangleMesh


def closest_points_on_triangles(p: np.ndarray, a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Closest point on triangle (a, b, c) to p, row-wise over (n, 3) arrays.

    Region-based evaluation (vertex, edge, face Voronoi regions).
    """
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = p - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = p - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)

    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    out = np.empty_like(p)
    done = np.zeros(len(p), dtype=bool)

    def assign(mask, value):
        m = mask & ~done
        if np.any(m):
            out[m] = value(m)
            done[m] = True

    assign((d1 <= 0) & (d2 <= 0), lambda m: a[m])
    assign((d3 >= 0) & (d4 <= d3), lambda m: b[m])
    assign((d6 >= 0) & (d5 <= d6), lambda m: c[m])
    with np.errstate(divide="ignore", invalid="ignore"):
        assign(
            (vc <= 0) & (d1 >= 0) & (d3 <= 0),
            lambda m: a[m] + (d1[m] / (d1[m] - d3[m]))[:, None] * ab[m],
        )
        assign(
            (vb <= 0) & (d2 >= 0) & (d6 <= 0),
            lambda m: a[m] + (d2[m] / (d2[m] - d6[m]))[:, None] * ac[m],
        )
        assign(
            (va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0),
            lambda m: b[m]
            + ((d4[m] - d3[m]) / ((d4[m] - d3[m]) + (d5[m] - d6[m])))[:, None] * (c[m] - b[m]),
        )

        def interior(m):
            denom = 1.0 / (va[m] + vb[m] + vc[m])
            v = vb[m] * denom
            w = vc[m] * denom
            return a[m] + ab[m] * v[:, None] + ac[m] * w[:, None]

        assign(np.ones(len(p), dtype=bool), interior)
    return out


def brute_force_nearest(mesh: TriangleMesh, q) -> tuple[np.ndarray, float]:
    """Exhaustive minimum over all triangles; the reference the index must match."""
    q = np.asarray(q, dtype=np.float64).reshape(3)
    c = mesh.corners
    qq = np.broadcast_to(q, (len(c), 3))
    pts = closest_points_on_triangles(qq, c[:, 0], c[:, 1], c[:, 2])
    d = np.linalg.norm(pts - qq, axis=1)
    i = int(np.argmin(d))
    return pts[i], float(d[i])


class SurfaceIndex:
    """Acceleration structure for nearest-surface queries on one mesh."""

    def __init__(self, mesh: TriangleMesh, seed_k: int = 8) -> None:
        self.mesh = mesh
        corners = mesh.corners
        self._a = np.ascontiguousarray(corners[:, 0])
        self._b = np.ascontiguousarray(corners[:, 1])
        self._c = np.ascontiguousarray(corners[:, 2])
        self.centroids = corners.mean(axis=1)
        self.radii = np.linalg.norm(corners - self.centroids[:, None, :], axis=2).max(axis=1)
        self.max_radius = float(self.radii.max())
        self.tree = cKDTree(self.centroids)
        self.seed_k = min(seed_k, len(self.centroids))

    def _pair_closest(self, q: np.ndarray, tri: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        pts = closest_points_on_triangles(q, self._a[tri], self._b[tri], self._c[tri])
        diff = pts - q
        return pts, np.sqrt(np.einsum("ij,ij->i", diff, diff))

    def query(self, queries, chunk: int = 4096) -> tuple[np.ndarray, np.ndarray]:
        """Nearest surface points and distances for an (n, 3) array of queries."""
        queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
        n = len(queries)
        points = np.empty((n, 3))
        dists = np.empty(n)
        for s in range(0, n, chunk):
            q = queries[s : s + chunk]
            points[s : s + len(q)], dists[s : s + len(q)] = self._query_chunk(q)
        return points, dists

    def _query_chunk(self, q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        m = len(q)
        k = self.seed_k
        _, seeds = self.tree.query(q, k=k)
        seeds = np.asarray(seeds).reshape(m, k)
        rep_q = np.repeat(q, k, axis=0)
        _, d_seed = self._pair_closest(rep_q, seeds.ravel())
        upper = d_seed.reshape(m, k).min(axis=1)

        # Only triangles whose centroid is within upper + max_radius can be closer.
        balls = self.tree.query_ball_point(q, upper + self.max_radius * (1 + 1e-12) + 1e-12)
        counts = np.fromiter((len(b) for b in balls), dtype=np.int64, count=m)
        cand = np.fromiter((i for b in balls for i in b), dtype=np.int64, count=int(counts.sum()))
        owner = np.repeat(np.arange(m), counts)
        # Finer per-triangle pruning with each triangle's own radius.
        cq = q[owner]
        dc = np.linalg.norm(self.centroids[cand] - cq, axis=1)
        keep = dc - self.radii[cand] <= upper[owner] * (1 + 1e-12) + 1e-12
        cand, owner, cq = cand[keep], owner[keep], cq[keep]

        pts, d = self._pair_closest(cq, cand)
        # Per-query argmin, ties resolved by lowest triangle index.
        order = np.lexsort((cand, d, owner))
        first = np.ones(len(order), dtype=bool)
        first[1:] = owner[order][1:] != owner[order][:-1]
        best = order[first]
        out_p = np.empty((m, 3))
        out_d = np.empty(m)
        out_p[owner[best]] = pts[best]
        out_d[owner[best]] = d[best]
        return out_p, out_d


def nearest_point_on_surface(mesh: TriangleMesh, q) -> tuple[np.ndarray, float]:
    pts, d = mesh.surface_index.query(np.asarray(q, dtype=np.float64).reshape(1, 3))
    return pts[0], float(d[0])
