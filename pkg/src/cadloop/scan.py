"""Virtual scanner: oriented sampling, orbiting cameras, hidden-point removal,
implicit reconstruction and marker holes.

The reconstruction blends signed offsets along nearby sample normals into a
scalar field and meshes its zero level set. It rounds sharp edges and leaves
unobserved regions to be bridged by extrapolation, which are the artifacts a
real scan shows. An external reconstructor can replace it through
``ScanConfig.external_command``.
"""

from __future__ import annotations

import dataclasses
import shlex
import subprocess
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
from scipy.spatial import ConvexHull, QhullError, cKDTree

from .mesh import Aabb, MeshError, TriangleMesh, mesh_from_field, sample_surface_arrays

MIN_RECON_POINTS = 100


class ScanError(RuntimeError):
    pass


class DegenerateHull(ScanError):
    pass


class ReconstructionFailed(ScanError):
    pass


class ExternalToolError(ScanError):
    pass


class EmptyAfterHoles(ScanError):
    pass


def _pair(value) -> tuple:
    if isinstance(value, str):
        parts = [p for p in value.replace(",", " ").split() if p]
        value = [float(p) for p in parts]
    if np.isscalar(value):
        value = (value, value)
    lo, hi = value
    return lo, hi


@dataclass(frozen=True)
class ScanConfig:
    n_points: int = 100_000
    n_views: int = 5
    radius_factor: float = 2.5
    elevation_deg: float = 30.0
    hole_count: tuple[int, int] = (1, 3)
    hole_radius: tuple[float, float] = (0.02, 0.05)  # fractions of the bbox diagonal
    recon_resolution: int = 64
    hpr_radius_factor: float = 100.0
    seed: int = 0
    external_command: str | None = None
    external_timeout: float = 600.0

    def __post_init__(self) -> None:
        hc = tuple(int(x) for x in _pair(self.hole_count))
        hr = tuple(float(x) for x in _pair(self.hole_radius))
        object.__setattr__(self, "hole_count", hc)
        object.__setattr__(self, "hole_radius", hr)
        if self.n_points < 1 or self.n_views < 1:
            raise ValueError("n_points and n_views must be at least 1")
        if self.radius_factor <= 1:
            raise ValueError("radius_factor must exceed 1")
        if hc[0] < 0 or hc[1] < hc[0]:
            raise ValueError("hole_count must be a non-negative range")
        if not (0 < hr[0] <= hr[1] <= 0.2):
            raise ValueError("hole_radius fractions must lie in (0, 0.2]")
        if self.recon_resolution < 8:
            raise ValueError("recon_resolution must be at least 8")
        if self.hpr_radius_factor <= 1:
            raise ValueError("hpr_radius_factor must exceed 1")

    @classmethod
    def from_mapping(cls, values: Mapping[str, object]) -> "ScanConfig":
        """Build from flat config keys, with or without a ``scan.`` prefix."""
        names = {f.name: f for f in dataclasses.fields(cls)}
        kwargs: dict[str, object] = {}
        for key, raw in values.items():
            name = key[5:] if key.startswith("scan.") else key
            if name not in names:
                continue
            if name in ("hole_count", "hole_radius"):
                kwargs[name] = raw
            elif name == "external_command":
                kwargs[name] = None if raw in (None, "", "none") else str(raw)
            elif name in ("n_points", "n_views", "recon_resolution", "seed"):
                kwargs[name] = int(raw)  # type: ignore[arg-type]
            else:
                kwargs[name] = float(raw)  # type: ignore[arg-type]
        return cls(**kwargs)  # type: ignore[arg-type]


@dataclass(frozen=True)
class VirtualCamera:
    position: np.ndarray
    look_at: np.ndarray


@dataclass(frozen=True, eq=False)
class ScanResult:
    merged_positions: np.ndarray = field(repr=False)
    merged_normals: np.ndarray = field(repr=False)
    scan_mesh: TriangleMesh
    per_view_counts: list[int]
    cameras: list[VirtualCamera] = field(repr=False)

    @property
    def merged_count(self) -> int:
        return len(self.merged_positions)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ScanResult):
            return NotImplemented
        return (
            np.array_equal(self.merged_positions, other.merged_positions)
            and np.array_equal(self.merged_normals, other.merged_normals)
            and self.scan_mesh == other.scan_mesh
            and self.per_view_counts == other.per_view_counts
        )

    __hash__ = None  # type: ignore[assignment]


def camera_trajectory(aabb: Aabb, cfg: ScanConfig) -> list[VirtualCamera]:
    """Cameras on a sphere around the box, equally spaced in azimuth with
    elevations alternating between +elev and -elev; the azimuth phase is seeded."""
    center = aabb.center
    radius = cfg.radius_factor * 0.5 * aabb.diagonal
    if radius == 0:
        radius = cfg.radius_factor
    phase = np.random.default_rng([cfg.seed, 11]).uniform(0.0, 2 * np.pi)
    elev = np.radians(cfg.elevation_deg)
    cams = []
    for i in range(cfg.n_views):
        az = phase + 2 * np.pi * i / cfg.n_views
        el = elev if i % 2 == 0 else -elev
        d = np.array([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)])
        cams.append(VirtualCamera(center + radius * d, center.copy()))
    return cams


def visible_points(positions: np.ndarray, normals: np.ndarray | None, cam: VirtualCamera, radius_factor: float = 100.0) -> np.ndarray:
    """Indices of samples seen from ``cam`` (hidden-point removal plus back-face test)."""
    p = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    if len(p) == 0:
        raise DegenerateHull("no samples")
    rel = p - cam.position
    dist = np.linalg.norm(rel, axis=1)
    radius = radius_factor * dist.max()
    safe = np.where(dist > 0, dist, 1.0)
    flipped = rel + 2.0 * (radius - dist)[:, None] * rel / safe[:, None]
    pts = np.vstack([flipped, np.zeros((1, 3))])
    try:
        hull = ConvexHull(pts)
    except (QhullError, ValueError) as exc:
        raise DegenerateHull(str(exc)) from exc
    on_hull = np.zeros(len(pts), dtype=bool)
    on_hull[hull.vertices] = True
    keep = on_hull[:-1]
    if normals is not None:
        n = np.asarray(normals, dtype=np.float64).reshape(-1, 3)
        keep &= np.einsum("ij,ij->i", n, -rel) > 0
    return np.flatnonzero(keep)


def _implicit_field(points: np.ndarray, normals: np.ndarray, resolution: int) -> tuple[np.ndarray, np.ndarray, float]:
    box = Aabb.of_points(points)
    h = float(box.extent.max()) / resolution
    if h <= 0:
        raise ReconstructionFailed("points have zero extent")
    pad = 3
    axes = [box.min[i] - pad * h + h * np.arange(int(np.ceil(box.extent[i] / h)) + 2 * pad + 1) for i in range(3)]
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    nodes = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)
    tree = cKDTree(points)
    k = min(16, len(points))
    band = 3.0 * h
    dist, idx = tree.query(nodes, k=k, distance_upper_bound=band)
    if k == 1:
        dist, idx = dist[:, None], idx[:, None]
    near = np.isfinite(dist[:, 0])
    values = np.empty(len(nodes))
    # inside the band: offsets along neighbour normals, Gaussian-weighted
    # relative to the nearest sample and limited to two cells beyond it
    d, i = dist[near], idx[near]
    ok = np.isfinite(d)
    i = np.where(ok, i, 0)
    rel = nodes[near][:, None, :] - points[i]
    along = np.einsum("nkj,nkj->nk", rel, normals[i])
    w = np.exp(-(np.where(ok, d, 0.0) ** 2 - d[:, :1] ** 2) / (2 * h * h))
    w[~ok | (d > d[:, :1] + 2 * h)] = 0.0
    values[near] = (w * along).sum(axis=1) / w.sum(axis=1)
    # outside the band only the sign matters; a sparse subset of samples decides it
    far = np.flatnonzero(~near)
    if len(far):
        step = max(1, len(points) // 4096)
        sub = np.arange(0, len(points), step)
        _, j = cKDTree(points[sub]).query(nodes[far])
        j = sub[j]
        side = np.einsum("nj,nj->n", nodes[far] - points[j], normals[j])
        values[far] = np.where(side < 0, -band, band)
    grid = values.reshape(gx.shape)
    # close the surface at the grid border
    for ax in range(3):
        sl = [slice(None)] * 3
        for end in (0, -1):
            sl[ax] = end
            grid[tuple(sl)] = np.maximum(grid[tuple(sl)], h)
    origin = np.array([a[0] for a in axes])
    return grid, origin, h


def _external_reconstruct(points: np.ndarray, normals: np.ndarray, command: str, timeout: float) -> TriangleMesh:
    from .mesh_io import load_mesh, save_ply_points

    with tempfile.TemporaryDirectory(prefix="cadloop_recon_") as tmp:
        src = Path(tmp) / "points.ply"
        dst = Path(tmp) / "mesh.ply"
        save_ply_points(points, normals, src)
        argv = [a.format(input=str(src), output=str(dst)) for a in shlex.split(command)]
        try:
            proc = subprocess.run(argv, capture_output=True, timeout=timeout)
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise ExternalToolError(str(exc)) from exc
        if proc.returncode != 0:
            raise ExternalToolError(f"exit {proc.returncode}: {proc.stderr.decode(errors='replace')[-500:]}")
        if not dst.exists():
            raise ExternalToolError("reconstruction tool wrote no mesh")
        try:
            return load_mesh(dst)
        except (MeshError, OSError) as exc:
            raise ExternalToolError(str(exc)) from exc


def reconstruct_surface(
    points: np.ndarray,
    normals: np.ndarray,
    resolution: int = 64,
    *,
    external_command: str | None = None,
    timeout: float = 600.0,
) -> TriangleMesh:
    """Mesh an oriented point set.

    ``external_command`` is a shell-style template with ``{input}`` (PLY with
    normals) and ``{output}`` (PLY mesh) placeholders; a nonzero exit status
    raises :class:`ExternalToolError`.
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    normals = np.asarray(normals, dtype=np.float64).reshape(-1, 3)
    if len(points) < MIN_RECON_POINTS:
        raise ValueError(f"reconstruction needs at least {MIN_RECON_POINTS} points, got {len(points)}")
    if len(normals) != len(points):
        raise ValueError("one normal per point required")
    if external_command:
        return _external_reconstruct(points, normals, external_command, timeout)
    grid, origin, h = _implicit_field(points, normals, resolution)
    if not (grid.min() < 0 < grid.max()):
        raise ReconstructionFailed("field has no sign change")
    try:
        return mesh_from_field(grid, origin, h)
    except (MeshError, ValueError, RuntimeError) as exc:
        raise ReconstructionFailed(str(exc)) from exc


def punch_holes(mesh: TriangleMesh, cfg: ScanConfig) -> TriangleMesh:
    """Remove triangles whose centroid falls inside randomly placed balls."""
    rng = np.random.default_rng([cfg.seed, 23])
    lo, hi = cfg.hole_count
    count = int(rng.integers(lo, hi + 1))
    if count == 0:
        return mesh
    seeds, _, _ = sample_surface_arrays(mesh, count, int(rng.integers(2**31)))
    radii = rng.uniform(cfg.hole_radius[0], cfg.hole_radius[1], count) * mesh.aabb.diagonal
    centroids = mesh.corners.mean(axis=1)
    near = cKDTree(centroids)
    drop = np.zeros(mesh.n_triangles, dtype=bool)
    for s, r in zip(seeds, radii):
        drop[near.query_ball_point(s, r)] = True
    if drop.all():
        raise EmptyAfterHoles("every triangle fell inside a hole")
    if not drop.any():
        return mesh
    return mesh.submesh(~drop)


def simulate_scan(mesh: TriangleMesh, cfg: ScanConfig | None = None) -> ScanResult:
    cfg = cfg or ScanConfig()
    pos, nrm, _ = sample_surface_arrays(mesh, cfg.n_points, cfg.seed)
    cams = camera_trajectory(Aabb.of_points(pos), cfg)
    seen = np.zeros(len(pos), dtype=bool)
    counts = []
    for cam in cams:
        idx = visible_points(pos, nrm, cam, cfg.hpr_radius_factor)
        counts.append(int(len(idx)))
        seen[idx] = True
    mp, mn = pos[seen], nrm[seen]
    recon = reconstruct_surface(
        mp, mn, cfg.recon_resolution, external_command=cfg.external_command, timeout=cfg.external_timeout
    )
    return ScanResult(mp, mn, punch_holes(recon, cfg), counts, cams)


def scan_config_keys() -> list[str]:
    return [f.name for f in dataclasses.fields(ScanConfig)]
