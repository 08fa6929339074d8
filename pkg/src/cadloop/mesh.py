"""Triangle meshes, surface sampling and normalization frames."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Literal

import numpy as np

log = logging.getLogger(__name__)

FrameTag = Literal["unit_cube_01", "signed_cube_11", "prediction_over_100"]
FRAME_TAGS: tuple[str, ...] = ("unit_cube_01", "signed_cube_11", "prediction_over_100")

# Triangles with less area than this (relative to the squared bbox diagonal) are dropped
# by `clean_triangles`; their normals are not well defined.
_REL_AREA_EPS = 1e-14


class MeshError(ValueError):
    """Base class for mesh-level failures."""


class MalformedGeometry(MeshError):
    pass


class UnsupportedFormat(MeshError):
    pass


class ZeroAreaMesh(MeshError):
    pass


class DegenerateExtent(MeshError):
    pass


class NonFiniteGeometry(MeshError):
    pass


@dataclass(frozen=True)
class Aabb:
    min: np.ndarray
    max: np.ndarray

    def __post_init__(self) -> None:
        lo = np.asarray(self.min, dtype=np.float64)
        hi = np.asarray(self.max, dtype=np.float64)
        if lo.shape != (3,) or hi.shape != (3,) or np.any(lo > hi):
            raise ValueError(f"invalid AABB {lo} {hi}")
        object.__setattr__(self, "min", lo)
        object.__setattr__(self, "max", hi)

    @property
    def extent(self) -> np.ndarray:
        return self.max - self.min

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.min + self.max)

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.extent))

    @classmethod
    def of_points(cls, points: np.ndarray) -> "Aabb":
        points = np.asarray(points, dtype=np.float64)
        return cls(points.min(axis=0), points.max(axis=0))


@dataclass(frozen=True)
class PointSample:
    position: np.ndarray
    normal: np.ndarray


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


def _raw_normals(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    v0, v1, v2 = (vertices[triangles[:, i]] for i in range(3))
    return np.cross(v1 - v0, v2 - v0)


class TriangleMesh:
    """Indexed triangle surface with per-face unit normals derived from winding.

    Instances are immutable; derived data (areas, proximity index) is cached lazily.
    """

    def __init__(self, vertices, triangles) -> None:
        v = np.array(vertices, dtype=np.float64).reshape(-1, 3)
        t = np.array(triangles, dtype=np.int64).reshape(-1, 3)
        if len(t) == 0:
            raise MalformedGeometry("mesh has no triangles")
        if not np.all(np.isfinite(v)):
            raise MalformedGeometry("non-finite vertex coordinates")
        if t.min() < 0 or t.max() >= len(v):
            raise MalformedGeometry("triangle index out of range")
        if np.any((t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2]) | (t[:, 0] == t[:, 2])):
            raise MalformedGeometry("triangle with repeated vertex index")
        raw = _raw_normals(v, t)
        lengths = np.linalg.norm(raw, axis=1)
        if np.any(lengths == 0.0):
            raise MalformedGeometry("zero-area triangle; run clean_triangles first")
        self.vertices = _readonly(v)
        self.triangles = _readonly(t)
        self.face_normals = _readonly(raw / lengths[:, None])
        self._double_areas = _readonly(lengths)

    def __repr__(self) -> str:
        return f"TriangleMesh(V={len(self.vertices)}, F={len(self.triangles)})"

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TriangleMesh):
            return NotImplemented
        return np.array_equal(self.vertices, other.vertices) and np.array_equal(
            self.triangles, other.triangles
        )

    __hash__ = None  # type: ignore[assignment]

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def corners(self) -> np.ndarray:
        """(F, 3, 3) array of triangle corner positions."""
        return self.vertices[self.triangles]

    @cached_property
    def areas(self) -> np.ndarray:
        return _readonly(0.5 * self._double_areas)

    @property
    def area(self) -> float:
        return float(self.areas.sum())

    @cached_property
    def aabb(self) -> Aabb:
        return Aabb.of_points(self.vertices[np.unique(self.triangles)])

    @cached_property
    def surface_index(self):
        from .proximity import SurfaceIndex

        return SurfaceIndex(self)

    def signed_volume(self) -> float:
        c = self.corners
        return float(np.einsum("ij,ij->i", c[:, 0], np.cross(c[:, 1], c[:, 2])).sum() / 6.0)

    def transformed(self, scale: float, translation) -> "TriangleMesh":
        return TriangleMesh(self.vertices * scale + np.asarray(translation, float), self.triangles)

    def translated(self, offset) -> "TriangleMesh":
        return TriangleMesh(self.vertices + np.asarray(offset, float), self.triangles)

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Unique undirected edges and how many triangles use each."""
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        e.sort(axis=1)
        uniq, counts = np.unique(e, axis=0, return_counts=True)
        return uniq, counts

    def boundary_edge_count(self) -> int:
        _, counts = self.edges()
        return int(np.count_nonzero(counts == 1))

    def euler_characteristic(self) -> int:
        used = np.unique(self.triangles)
        edges, _ = self.edges()
        return int(len(used) - len(edges) + len(self.triangles))

    def submesh(self, keep: np.ndarray) -> "TriangleMesh":
        """Mesh made of the selected triangles with unused vertices dropped."""
        tri = self.triangles[keep]
        used, inverse = np.unique(tri, return_inverse=True)
        return TriangleMesh(self.vertices[used], inverse.reshape(-1, 3))


def clean_triangles(vertices: np.ndarray, triangles: np.ndarray) -> TriangleMesh:
    """Build a mesh after dropping repeated-index and (near) zero-area triangles."""
    v = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
    t = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
    ok = (t[:, 0] != t[:, 1]) & (t[:, 1] != t[:, 2]) & (t[:, 0] != t[:, 2])
    t = t[ok]
    if len(t):
        diag2 = float(np.sum((v.max(axis=0) - v.min(axis=0)) ** 2)) or 1.0
        lengths = np.linalg.norm(_raw_normals(v, t), axis=1)
        t = t[lengths > _REL_AREA_EPS * diag2]
    dropped = int((~ok).sum()) + (int(ok.sum()) - len(t))
    if dropped:
        log.debug("dropped %d degenerate triangles", dropped)
    return TriangleMesh(v, t)


def box_mesh(lo=(0.0, 0.0, 0.0), hi=(1.0, 1.0, 1.0)) -> TriangleMesh:
    """Axis-aligned box with 8 vertices and 12 outward-wound triangles."""
    lo = np.asarray(lo, float)
    hi = np.asarray(hi, float)
    corners = np.array([[(hi if (i >> k) & 1 else lo)[k] for k in range(3)] for i in range(8)])
    # corner index bits: x=1, y=2, z=4
    quads = [
        (0, 2, 3, 1),  # -z
        (4, 5, 7, 6),  # +z
        (0, 1, 5, 4),  # -y
        (2, 6, 7, 3),  # +y
        (0, 4, 6, 2),  # -x
        (1, 3, 7, 5),  # +x
    ]
    tris = []
    for a, b, c, d in quads:
        tris += [(a, b, c), (a, c, d)]
    return TriangleMesh(corners, tris)


def icosphere(radius: float = 1.0, center=(0.0, 0.0, 0.0), subdivisions: int = 3) -> TriangleMesh:
    """Geodesic sphere approximation, outward wound."""
    phi = (1 + 5**0.5) / 2
    v = [
        (-1, phi, 0), (1, phi, 0), (-1, -phi, 0), (1, -phi, 0),
        (0, -1, phi), (0, 1, phi), (0, -1, -phi), (0, 1, -phi),
        (phi, 0, -1), (phi, 0, 1), (-phi, 0, -1), (-phi, 0, 1),
    ]
    f = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [np.array(p, float) / np.linalg.norm(p) for p in v]
    faces = list(f)
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}

        def mid(a: int, b: int) -> int:
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        nxt = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            nxt += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = nxt
    return TriangleMesh(np.array(verts) * radius + np.asarray(center, float), faces)


def _barycentric_draws(rng: np.random.Generator, n: int) -> np.ndarray:
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    return np.stack([1.0 - r1, r1 * (1.0 - r2), r1 * r2], axis=1)


def sample_surface_arrays(
    mesh: TriangleMesh, n: int, seed: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Area-uniform surface samples as arrays: (positions, normals, source triangle ids)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    areas = mesh.areas
    total = areas.sum()
    if not total > 0:
        raise ZeroAreaMesh("total surface area is zero")
    rng = np.random.default_rng(seed)
    cdf = np.cumsum(areas)
    tri = np.searchsorted(cdf, rng.random(n) * cdf[-1], side="right")
    tri = np.minimum(tri, len(areas) - 1)
    bary = _barycentric_draws(rng, n)
    c = mesh.corners[tri]
    pos = np.einsum("nk,nkd->nd", bary, c)
    return pos, mesh.face_normals[tri], tri


def sample_surface(mesh: TriangleMesh, n: int, seed: int) -> list[PointSample]:
    pos, nrm, _ = sample_surface_arrays(mesh, n, seed)
    return [PointSample(p, q) for p, q in zip(pos, nrm)]


@dataclass(frozen=True)
class NormalizationTransform:
    """Maps model coordinates into a named frame: ``x' = scale * x + translation``."""

    scale: float
    translation: np.ndarray
    frame_tag: str

    def __post_init__(self) -> None:
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        if self.frame_tag not in FRAME_TAGS:
            raise ValueError(f"unknown frame {self.frame_tag!r}")
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=np.float64))

    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, float) * self.scale + self.translation

    def invert(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points, float) - self.translation) / self.scale


def normalization_for(aabb: Aabb, frame_tag: str) -> NormalizationTransform:
    if frame_tag == "prediction_over_100":
        return NormalizationTransform(0.01, np.zeros(3), frame_tag)
    if frame_tag == "unit_cube_01":
        lo, hi = 0.0, 1.0
    elif frame_tag == "signed_cube_11":
        lo, hi = -1.0, 1.0
    else:
        raise ValueError(f"unknown frame {frame_tag!r}")
    longest = float(aabb.extent.max())
    if not longest > 0:
        raise DegenerateExtent("bounding box is a single point")
    scale = (hi - lo) / longest
    translation = 0.5 * (lo + hi) - scale * aabb.center
    return NormalizationTransform(scale, translation, frame_tag)


def normalize(mesh: TriangleMesh, frame_tag: str) -> tuple[TriangleMesh, NormalizationTransform]:
    tf = normalization_for(mesh.aabb, frame_tag)
    return TriangleMesh(tf.apply(mesh.vertices), mesh.triangles), tf


def mesh_from_field(
    values: np.ndarray, origin, spacing: float, nudge: float = 1e-9
) -> TriangleMesh:
    """Triangulate the zero level set of a grid field that is negative inside.

    Samples that are exactly zero are nudged outward so marching cubes never
    emits collapsed faces on grid-aligned surfaces.
    """
    from skimage.measure import marching_cubes

    field = np.asarray(values, dtype=np.float64)
    field = np.where(field == 0.0, nudge, field)
    verts, faces, _, _ = marching_cubes(
        field, level=0.0, spacing=(spacing,) * 3, gradient_direction="descent", allow_degenerate=False
    )
    return clean_triangles(verts.astype(np.float64) + np.asarray(origin, float), faces)
