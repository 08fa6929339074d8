"""Evidence shown to the editor at each step: overlay image, discrepancy cloud,
previous program text."""

from __future__ import annotations

import base64
from dataclasses import dataclass, field
from functools import cached_property

from ..cloud import DiscrepancyCloud, build_discrepancy_cloud, init_discrepancy_cloud, serialize_cloud
from ..mesh import TriangleMesh
from ..metrics import CD_SAMPLES, IOU_RESOLUTION, Scorer
from ..views import OverlayImage, ViewConfig, compose_overlay, encode_views

MODALITIES = ("image", "pointcloud", "cross_modal")


class TargetContext:
    """A target mesh plus the per-target artifacts every step reuses.

    The mesh must lie in the program domain, since views are rendered in that
    frame. The view grid and scorer are computed on first use.
    """

    def __init__(
        self,
        mesh: TriangleMesh,
        target_id: str = "target",
        *,
        view_cfg: ViewConfig | None = None,
        cloud_frame: str = "prediction_over_100",
        cd_samples: int = CD_SAMPLES,
        cd_seed: int = 0,
        iou_resolution: int = IOU_RESOLUTION,
        with_iou: bool = True,
    ) -> None:
        self.mesh = mesh
        self.target_id = target_id
        self.view_cfg = view_cfg or ViewConfig()
        self.cloud_frame = cloud_frame
        self._scorer_args = (cd_samples, cd_seed, iou_resolution, with_iou)

    @cached_property
    def grid(self):
        return encode_views(self.mesh, self.view_cfg)

    @cached_property
    def scorer(self) -> Scorer:
        n, seed, res, with_iou = self._scorer_args
        return Scorer(self.mesh, n=n, seed=seed, iou_resolution=res, with_iou=with_iou)


@dataclass(eq=False)
class Evidence:
    """E(T, S) for one editor call. Image and cloud halves are built lazily so
    editors that ignore them cost nothing."""

    context: TargetContext = field(repr=False)
    step: int
    modality: str
    prev_program: str | None = None
    prev_mesh: TriangleMesh | None = field(default=None, repr=False)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.modality not in MODALITIES:
            raise ValueError(f"unknown modality {self.modality!r}")
        if self.step < 1:
            raise ValueError("step starts at 1")
        if (self.prev_program is None) != (self.step == 1):
            raise ValueError("previous program is absent exactly at the first step")
        if self.prev_program is None and self.prev_mesh is not None:
            raise ValueError("a previous render needs its program")

    @property
    def target_id(self) -> str:
        return self.context.target_id

    @cached_property
    def overlay(self) -> OverlayImage | None:
        if self.modality == "pointcloud":
            return None
        pred = None if self.prev_mesh is None else encode_views(self.prev_mesh, self.context.view_cfg)
        return compose_overlay(self.context.grid, pred)

    @cached_property
    def cloud(self) -> DiscrepancyCloud | None:
        if self.modality == "image":
            return None
        if self.prev_mesh is None:
            return init_discrepancy_cloud(self.context.mesh, self.seed, target_frame=self.context.cloud_frame)
        return build_discrepancy_cloud(self.context.mesh, self.prev_mesh, self.seed, target_frame=self.context.cloud_frame)

    def to_payload(self, mode: str, seed: int) -> dict:
        """Wire form for a remote editor."""
        doc: dict = {"target_id": self.target_id, "step": self.step, "modality": self.modality, "mode": mode, "seed": seed}
        if self.overlay is not None:
            doc["overlay_png_base64"] = base64.b64encode(self.overlay.to_png()).decode("ascii")
        if self.cloud is not None:
            doc["cloud_b64"] = base64.b64encode(serialize_cloud(self.cloud)).decode("ascii")
        if self.prev_program is not None:
            doc["prev_program"] = self.prev_program
        return doc


def build_evidence(
    target: TargetContext | TriangleMesh,
    prev: tuple[str, TriangleMesh | None] | None,
    modality: str,
    seed: int = 0,
    step: int | None = None,
) -> Evidence:
    """Evidence for a step; ``prev`` is the previous (program, render) or None at t=1.

    An invalid previous program has no render; its evidence falls back to the
    null-prediction encodings while still carrying the text.
    """
    ctx = target if isinstance(target, TargetContext) else TargetContext(target)
    if step is None:
        step = 1 if prev is None else 2
    program, mesh = (None, None) if prev is None else prev
    return Evidence(ctx, step, modality, program, mesh, seed)
