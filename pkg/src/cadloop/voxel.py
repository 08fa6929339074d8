"""Inside/outside occupancy grids by ray-crossing parity."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import NonFiniteGeometry, TriangleMesh


@dataclass(frozen=True)
class OccupancyGrid:
    resolution: int
    origin: np.ndarray
    cell_size: float
    cells: np.ndarray  # bool, indexed [ix, iy, iz]

    @property
    def cell_volume(self) -> float:
        return self.cell_size**3

    @property
    def inside_count(self) -> int:
        return int(np.count_nonzero(self.cells))

    @property
    def volume(self) -> float:
        return self.inside_count * self.cell_volume

    def centers(self, axis: int) -> np.ndarray:
        return self.origin[axis] + (np.arange(self.resolution) + 0.5) * self.cell_size


def _owns_boundary(dx: np.ndarray, dy: np.ndarray) -> np.ndarray:
    # For a directed edge d exactly one of d, -d owns points lying on it.
    return (dy > 0) | ((dy == 0) & (dx < 0))


def _axis_parity(mesh: TriangleMesh, axis: int, res: int, origin: np.ndarray, h: float) -> np.ndarray:
    """Parity occupancy from rays cast along +axis through every cell-center column."""
    b, c = [k for k in range(3) if k != axis]
    corners = mesh.corners
    # lattice units: cell centers sit at integer coordinates 0..res-1
    u = (corners[:, :, b] - origin[b]) / h - 0.5
    v = (corners[:, :, c] - origin[c]) / h - 0.5
    depth = corners[:, :, axis]

    area2 = (u[:, 1] - u[:, 0]) * (v[:, 2] - v[:, 0]) - (v[:, 1] - v[:, 0]) * (u[:, 2] - u[:, 0])
    keep = area2 != 0
    u, v, depth, area2 = u[keep], v[keep], depth[keep], area2[keep]
    flip = area2 < 0  # reorder to counter-clockwise
    u[flip] = u[flip][:, [0, 2, 1]]
    v[flip] = v[flip][:, [0, 2, 1]]
    depth[flip] = depth[flip][:, [0, 2, 1]]
    area2 = np.abs(area2)

    i0 = np.clip(np.ceil(u.min(axis=1)), 0, res).astype(np.int64)
    i1 = np.clip(np.floor(u.max(axis=1)), -1, res - 1).astype(np.int64)
    j0 = np.clip(np.ceil(v.min(axis=1)), 0, res).astype(np.int64)
    j1 = np.clip(np.floor(v.max(axis=1)), -1, res - 1).astype(np.int64)
    ni = np.maximum(i1 - i0 + 1, 0)
    nj = np.maximum(j1 - j0 + 1, 0)
    counts = ni * nj
    total = int(counts.sum())
    hits = np.zeros((res, res, res + 1), dtype=np.int32)
    if total:
        tri = np.repeat(np.arange(len(counts)), counts)
        local = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
        pi = i0[tri] + local // nj[tri]
        pj = j0[tri] + local % nj[tri]
        x = pi.astype(np.float64)
        y = pj.astype(np.float64)
        tu, tv, td = u[tri], v[tri], depth[tri]
        inside = np.ones(total, dtype=bool)
        weights = []
        for e0, e1 in ((1, 2), (2, 0), (0, 1)):
            dx = tu[:, e1] - tu[:, e0]
            dy = tv[:, e1] - tv[:, e0]
            edge = dx * (y - tv[:, e0]) - dy * (x - tu[:, e0])
            inside &= (edge > 0) | ((edge == 0) & _owns_boundary(dx, dy))
            weights.append(edge)
        w = np.stack(weights, axis=1) / area2[tri][:, None]
        z = np.einsum("nk,nk->n", w, td)
        z, pi, pj = z[inside], pi[inside], pj[inside]
        # first cell whose center lies beyond the crossing
        first = np.floor((z - origin[axis]) / h - 0.5).astype(np.int64) + 1
        first = np.clip(first, 0, res)
        flat = (pi * res + pj) * (res + 1) + first
        hits = np.bincount(flat, minlength=res * res * (res + 1)).reshape(res, res, res + 1)
    parity = (np.cumsum(hits[:, :, :res], axis=2) & 1).astype(bool)
    # parity is indexed [b, c, axis]; bring back to [x, y, z]
    order = [0, 0, 0]
    order[b], order[c], order[axis] = 0, 1, 2
    return np.transpose(parity, order)


def voxelize_occupancy(
    mesh: TriangleMesh,
    resolution: int,
    origin=(0.0, 0.0, 0.0),
    size: float = 1.0,
) -> OccupancyGrid:
    """Occupancy of the cube [origin, origin + size]^3 at ``resolution``^3 cells.

    A cell is inside when at least two of the three axis-aligned ray families
    report odd crossing parity at its center.
    """
    if not 8 <= resolution <= 256:
        raise ValueError("resolution must be in [8, 256]")
    if not np.all(np.isfinite(mesh.vertices)):
        raise NonFiniteGeometry("mesh has non-finite vertices")
    origin = np.asarray(origin, dtype=np.float64)
    h = float(size) / resolution
    votes = sum(_axis_parity(mesh, a, resolution, origin, h).astype(np.int8) for a in range(3))
    return OccupancyGrid(resolution, origin, h, votes >= 2)
