"""Discrepancy point cloud: 128 target + 128 prediction points with cross offsets.

Each feature point carries (x, y, z, dx, dy, dz) where the offset points to
the nearest location on the *other* surface. Points are chosen as the ones
with the largest offsets among a dense draw of 30000 surface samples.
"""

from __future__ import annotations

import base64
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .mesh import TriangleMesh, normalize, sample_surface_arrays

DENSE_SAMPLES = 30000
SIDE_POINTS = 128
MAGIC = b"DCLD1"
# magic, then two little-endian uint32 counts, then four float64 blocks
_HEADER = struct.Struct("<5sII")


class InsufficientSamples(ValueError):
    pass


class CorruptPayload(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class DiscrepancyCloud:
    target_points: np.ndarray = field(repr=False)
    target_offsets: np.ndarray = field(repr=False)
    pred_points: np.ndarray = field(repr=False)
    pred_offsets: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        for name in ("target_points", "target_offsets", "pred_points", "pred_offsets"):
            a = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            if a.ndim != 2 or a.shape[1] != 3:
                raise ValueError(f"{name} must be (n, 3)")
            if not np.all(np.isfinite(a)):
                raise ValueError(f"{name} has non-finite entries")
            object.__setattr__(self, name, a)
        if len(self.target_points) != len(self.target_offsets) or len(self.pred_points) != len(self.pred_offsets):
            raise ValueError("points and offsets must pair up")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DiscrepancyCloud):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, k), getattr(other, k))
            for k in ("target_points", "target_offsets", "pred_points", "pred_offsets")
        )

    __hash__ = None  # type: ignore[assignment]

    def features(self) -> np.ndarray:
        """(n_target + n_pred, 6) rows of position and offset, target side first."""
        return np.vstack(
            [
                np.hstack([self.target_points, self.target_offsets]),
                np.hstack([self.pred_points, self.pred_offsets]),
            ]
        )


def cross_offsets(samples, other: TriangleMesh) -> np.ndarray:
    """Vector from each sample to its nearest point on ``other``."""
    q = np.asarray(samples, dtype=np.float64).reshape(-1, 3)
    if len(q) == 0:
        raise ValueError("no samples")
    nearest, _ = other.surface_index.query(q)
    return nearest - q


def select_top_k(samples, offsets, k: int = SIDE_POINTS) -> tuple[np.ndarray, np.ndarray]:
    """The k samples with largest |offset|; ties go to the lower sample index."""
    samples = np.asarray(samples, dtype=np.float64).reshape(-1, 3)
    offsets = np.asarray(offsets, dtype=np.float64).reshape(-1, 3)
    if len(samples) < k:
        raise InsufficientSamples(f"need {k} samples, have {len(samples)}")
    mag = np.linalg.norm(offsets, axis=1)
    order = np.lexsort((np.arange(len(mag)), -mag))[:k]
    return samples[order], offsets[order]


def build_discrepancy_cloud(
    target: TriangleMesh,
    prev_render: TriangleMesh,
    seed: int,
    *,
    n_dense: int = DENSE_SAMPLES,
    k: int = SIDE_POINTS,
    target_frame: str = "prediction_over_100",
) -> DiscrepancyCloud:
    """Cloud for a target and the previous step's rendered prediction.

    The prediction is always scaled by 1/100. The target uses ``target_frame``:
    the default applies the same scaling (for targets already in program
    coordinates); "signed_cube_11" normalizes an arbitrary-frame target.
    """
    t_mesh, _ = normalize(target, target_frame)
    s_mesh, _ = normalize(prev_render, "prediction_over_100")
    pt, _, _ = sample_surface_arrays(t_mesh, n_dense, seed)
    ps, _, _ = sample_surface_arrays(s_mesh, n_dense, seed + 1)
    tp, to = select_top_k(pt, cross_offsets(pt, s_mesh), k)
    sp, so = select_top_k(ps, cross_offsets(ps, t_mesh), k)
    return DiscrepancyCloud(tp, to, sp, so)


def init_discrepancy_cloud(
    target: TriangleMesh,
    seed: int,
    *,
    k: int = SIDE_POINTS,
    target_frame: str = "prediction_over_100",
) -> DiscrepancyCloud:
    """Null-prediction cloud for the first step.

    Target points get offset -p (toward the origin); prediction points all sit
    at the origin and point at a distinct target sample through a seeded
    permutation.
    """
    t_mesh, _ = normalize(target, target_frame)
    p, _, _ = sample_surface_arrays(t_mesh, k, seed)
    perm = np.random.default_rng([seed, 1]).permutation(k)
    return DiscrepancyCloud(p, -p, np.zeros((k, 3)), p[perm].copy())


def serialize_cloud(cloud: DiscrepancyCloud, mode: str = "binary") -> bytes:
    if mode == "binary":
        head = _HEADER.pack(MAGIC, len(cloud.target_points), len(cloud.pred_points))
        body = b"".join(
            np.asarray(a, dtype="<f8").tobytes()
            for a in (cloud.target_points, cloud.target_offsets, cloud.pred_points, cloud.pred_offsets)
        )
        return head + body
    if mode == "json":
        doc = {
            "format": "DCLD1-json",
            "target_points": cloud.target_points.tolist(),
            "target_offsets": cloud.target_offsets.tolist(),
            "pred_points": cloud.pred_points.tolist(),
            "pred_offsets": cloud.pred_offsets.tolist(),
        }
        return json.dumps(doc).encode("utf-8")
    raise ValueError(f"unknown mode {mode!r}")


def parse_cloud(payload: bytes) -> DiscrepancyCloud:
    """Inverse of :func:`serialize_cloud`; the mode is detected from the payload."""
    if payload[:5] == MAGIC:
        if len(payload) < _HEADER.size:
            raise CorruptPayload("truncated header")
        _, nt, npred = _HEADER.unpack_from(payload)
        expected = _HEADER.size + 8 * 3 * 2 * (nt + npred)
        if len(payload) != expected:
            raise CorruptPayload(f"expected {expected} bytes, got {len(payload)}")
        flat = np.frombuffer(payload, dtype="<f8", offset=_HEADER.size).astype(np.float64)
        a = 3 * nt
        b = 3 * npred
        parts = np.split(flat, [a, 2 * a, 2 * a + b])
        shapes = (nt, nt, npred, npred)
        try:
            return DiscrepancyCloud(*(x.reshape(n, 3) for x, n in zip(parts, shapes)))
        except ValueError as exc:
            raise CorruptPayload(str(exc)) from exc
    try:
        doc = json.loads(payload.decode("utf-8"))
        if doc.get("format") != "DCLD1-json":
            raise CorruptPayload("unknown payload format")
        return DiscrepancyCloud(
            *(np.asarray(doc[k], dtype=np.float64).reshape(-1, 3) for k in ("target_points", "target_offsets", "pred_points", "pred_offsets"))
        )
    except CorruptPayload:
        raise
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, ValueError, TypeError, AttributeError) as exc:
        raise CorruptPayload(str(exc)) from exc


def cloud_to_b64(cloud: DiscrepancyCloud) -> str:
    return base64.b64encode(serialize_cloud(cloud)).decode("ascii")
