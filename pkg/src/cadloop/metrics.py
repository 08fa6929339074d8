"""Chamfer distance, volumetric IoU, invalid rate and their aggregation.

Conventions: CD is the sum of the two mean *squared* nearest-neighbour
distances, reported multiplied by 1e3, on 8192 samples per mesh; IoU uses a
64^3 occupancy grid over [0, 1]^3; each mesh is normalized to [0, 1]^3 on its
own before scoring.
"""

from __future__ import annotations

import json
import statistics
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .dsl import DegenerateSolid, DslError, ExternalRendererError
from .mesh import MeshError, TriangleMesh, normalize, sample_surface_arrays
from .voxel import OccupancyGrid, voxelize_occupancy

CD_SAMPLES = 8192
CD_SCALE = 1e3
IOU_RESOLUTION = 64

Renderer = Callable[[str], TriangleMesh]


class EmptyUnion(ValueError):
    pass


def chamfer_points(a: np.ndarray, b: np.ndarray) -> float:
    """Squared-distance Chamfer between point sets, times 1e3, via KD-trees."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 3)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 3)
    d_ab, _ = cKDTree(b).query(a)
    d_ba, _ = cKDTree(a).query(b)
    return float(np.mean(d_ab**2) + np.mean(d_ba**2)) * CD_SCALE


def chamfer(a: TriangleMesh, b: TriangleMesh, n: int = CD_SAMPLES, seed: int = 0) -> float:
    """Chamfer between surface samples; both meshes are sampled with the same seed."""
    pa, _, _ = sample_surface_arrays(a, n, seed)
    pb, _, _ = sample_surface_arrays(b, n, seed)
    return chamfer_points(pa, pb)


def iou_from_grids(a: OccupancyGrid, b: OccupancyGrid) -> float:
    union = np.count_nonzero(a.cells | b.cells)
    if union == 0:
        raise EmptyUnion("both occupancies are empty")
    return 100.0 * np.count_nonzero(a.cells & b.cells) / union


def volumetric_iou(
    a: TriangleMesh,
    b: TriangleMesh,
    resolution: int = IOU_RESOLUTION,
    origin=(0.0, 0.0, 0.0),
    size: float = 1.0,
) -> float:
    ga = voxelize_occupancy(a, resolution, origin, size)
    gb = voxelize_occupancy(b, resolution, origin, size)
    return iou_from_grids(ga, gb)


@dataclass(frozen=True)
class MetricReport:
    cd_times_1e3: float | None
    iou_percent: float | None
    valid: bool
    reason: str = "ok"

    def __post_init__(self) -> None:
        absent = self.cd_times_1e3 is None and self.iou_percent is None
        present = self.cd_times_1e3 is not None and self.iou_percent is not None
        if self.valid and not present or not self.valid and not absent:
            raise ValueError("metrics must be present exactly when valid")

    @classmethod
    def invalid(cls, reason: str) -> "MetricReport":
        return cls(None, None, False, reason)

    @property
    def discrepancy(self) -> float:
        """Loop objective; +inf for invalid candidates."""
        return self.cd_times_1e3 if self.valid else float("inf")  # type: ignore[return-value]


class Scorer:
    """Scores candidate meshes against one fixed target.

    The target's normalized samples, KD-tree and occupancy are computed once.
    """

    def __init__(
        self,
        target: TriangleMesh,
        n: int = CD_SAMPLES,
        seed: int = 0,
        iou_resolution: int = IOU_RESOLUTION,
        with_iou: bool = True,
    ) -> None:
        self.target, _ = normalize(target, "unit_cube_01")
        self.n = n
        self.seed = seed
        self.iou_resolution = iou_resolution
        self.with_iou = with_iou
        self._samples, _, _ = sample_surface_arrays(self.target, n, seed)
        self._tree = cKDTree(self._samples)
        self._grid = voxelize_occupancy(self.target, iou_resolution) if with_iou else None

    def chamfer(self, mesh: TriangleMesh) -> float:
        norm, _ = normalize(mesh, "unit_cube_01")
        pts, _, _ = sample_surface_arrays(norm, self.n, self.seed)
        d_pt, _ = self._tree.query(pts)
        d_tp, _ = cKDTree(pts).query(self._samples)
        return float(np.mean(d_pt**2) + np.mean(d_tp**2)) * CD_SCALE

    def score(self, mesh: TriangleMesh) -> MetricReport:
        try:
            cd = self.chamfer(mesh)
            iou = float("nan")
            if self._grid is not None:
                norm, _ = normalize(mesh, "unit_cube_01")
                iou = iou_from_grids(self._grid, voxelize_occupancy(norm, self.iou_resolution))
        except (MeshError, EmptyUnion) as exc:
            return MetricReport.invalid(f"degenerate_solid: {exc}")
        return MetricReport(cd, iou, True)


def render_candidate(program: str, renderer: Renderer) -> tuple[TriangleMesh | None, str]:
    """Render program text, classifying failures as parse/range/degenerate."""
    from .dsl import ParseError, RangeError

    try:
        return renderer(program), "ok"
    except RangeError as exc:
        return None, f"range_error: {exc}"
    except ParseError as exc:
        return None, f"parse_error: {exc}"
    except (DegenerateSolid, MeshError) as exc:
        return None, f"degenerate_solid: {exc}"
    except (DslError, ExternalRendererError) as exc:
        return None, f"render_error: {exc}"


def evaluate_candidate(
    target_eval: TriangleMesh | Scorer, program: str, renderer: Renderer
) -> MetricReport:
    scorer = target_eval if isinstance(target_eval, Scorer) else Scorer(target_eval)
    mesh, reason = render_candidate(program, renderer)
    if mesh is None:
        return MetricReport.invalid(reason)
    return scorer.score(mesh)


@dataclass(frozen=True)
class AggregateReport:
    median_cd: float | None
    mean_iou: float | None
    invalid_rate_percent: float
    count: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    def to_table(self, label: str = "run") -> str:
        def cell(x: float | None, fmt: str) -> str:
            return "-" if x is None else format(x, fmt)

        rows = [
            ("", "CD (x1e3)", "IoU (%)", "IR (%)"),
            (label, cell(self.median_cd, ".3f"), cell(self.mean_iou, ".1f"), cell(self.invalid_rate_percent, ".1f")),
        ]
        widths = [max(len(r[i]) for r in rows) for i in range(4)]
        return "\n".join(
            "  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths)))
            for r in rows
        ) + "\n"


def aggregate(reports: Sequence[MetricReport]) -> AggregateReport:
    """Median CD and mean IoU over valid reports; IR over all of them."""
    if not reports:
        raise ValueError("no reports to aggregate")
    valid = [r for r in reports if r.valid]
    ir = 100.0 * (len(reports) - len(valid)) / len(reports)
    if not valid:
        return AggregateReport(None, None, ir, len(reports))
    median_cd = float(statistics.median(r.cd_times_1e3 for r in valid))  # type: ignore[misc]
    ious = [r.iou_percent for r in valid if r.iou_percent is not None and not np.isnan(r.iou_percent)]
    mean_iou = float(np.mean(ious)) if ious else None
    return AggregateReport(median_cd, mean_iou, ir, len(reports))
