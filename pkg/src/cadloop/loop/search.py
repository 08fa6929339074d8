"""Greedy refinement, stochastic geometry-guided beam and the scan track.

The loop objective D is the Chamfer distance to the target the loop was given.
Invalid candidates score +inf and never enter survivor ranking.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..dsl import DegenerateSolid, DslError, ExternalRendererError, ParseError, RangeError, parse
from ..mesh import MeshError, TriangleMesh
from ..metrics import AggregateReport, MetricReport, aggregate
from .editors import EditorError
from .evidence import MODALITIES, Evidence, TargetContext, build_evidence

Renderer = Callable[[str], TriangleMesh]


@dataclass(frozen=True)
class BeamConfig:
    N: int = 5
    s: int = 5
    stop_threshold: float = 0.0
    modality: str = "image"
    feed_best: bool = False  # greedy: show best-so-far instead of the latest program
    workers: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.N < 1 or self.s < 1:
            raise ValueError("N and s must be at least 1")
        if not self.stop_threshold >= 0:
            raise ValueError("stop_threshold must be non-negative")
        if self.modality not in MODALITIES:
            raise ValueError(f"unknown modality {self.modality!r}")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")


@dataclass(eq=False)
class Candidate:
    program: str | None
    report: MetricReport
    step_born: int
    index: int = 0
    parent: int | None = None  # index of the parent candidate in the previous step
    mesh: TriangleMesh | None = field(default=None, repr=False)

    @property
    def discrepancy(self) -> float:
        return self.report.discrepancy

    @property
    def rank_key(self) -> tuple[float, int, int]:
        return (self.discrepancy, self.step_born, self.index)

    def to_dict(self) -> dict:
        r = self.report
        return {
            "step": self.step_born,
            "index": self.index,
            "parent": self.parent,
            "program": self.program,
            "valid": r.valid,
            "reason": r.reason,
            "cd_times_1e3": r.cd_times_1e3,
            "iou_percent": None if r.iou_percent is None or math.isnan(r.iou_percent) else r.iou_percent,
        }


@dataclass(eq=False)
class Trace:
    mode: str
    steps: list[list[Candidate]] = field(default_factory=list)
    best_per_step: list[Candidate | None] = field(default_factory=list)
    render_count: int = 0
    compile_attempts: int = 0
    degraded_steps: list[int] = field(default_factory=list)
    stopped_at: int | None = None

    @property
    def best_so_far(self) -> Candidate | None:
        return self.best_per_step[-1] if self.best_per_step else None

    @property
    def has_best(self) -> bool:
        return self.best_so_far is not None

    def best_curve(self) -> list[float]:
        """D of the best-so-far candidate after each step (inf while absent)."""
        return [math.inf if c is None else c.discrepancy for c in self.best_per_step]

    def selection_key(self) -> list[tuple[str | None, float]]:
        return [(None, math.inf) if c is None else (c.program, c.discrepancy) for c in self.best_per_step]

    def to_dict(self) -> dict:
        best = self.best_so_far
        return {
            "mode": self.mode,
            "render_count": self.render_count,
            "compile_attempts": self.compile_attempts,
            "degraded_steps": self.degraded_steps,
            "stopped_at": self.stopped_at,
            "steps": [[c.to_dict() for c in step] for step in self.steps],
            "best_per_step": [None if c is None else c.to_dict() for c in self.best_per_step],
            "best_so_far": None if best is None else best.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, allow_nan=False, default=_json_default)


def _json_default(x):
    if isinstance(x, np.generic):
        return x.item()
    raise TypeError(type(x))


class _Evaluator:
    """Parses, renders and scores candidates; counts renderer calls."""

    def __init__(self, ctx: TargetContext, renderer: Renderer) -> None:
        self.ctx = ctx
        self.renderer = renderer
        self.render_count = 0
        self.compile_attempts = 0

    def evaluate(self, text: str | None, step: int, index: int, parent: int | None, editor_error: str | None) -> Candidate:
        self.compile_attempts += 1
        if text is None:
            return Candidate(None, MetricReport.invalid(f"editor_error: {editor_error}"), step, index, parent)
        try:
            parse(text)
        except RangeError as exc:
            return Candidate(text, MetricReport.invalid(f"range_error: {exc}"), step, index, parent)
        except ParseError as exc:
            return Candidate(text, MetricReport.invalid(f"parse_error: {exc}"), step, index, parent)
        self.render_count += 1
        try:
            mesh = self.renderer(text)
        except (DegenerateSolid, MeshError) as exc:
            return Candidate(text, MetricReport.invalid(f"degenerate_solid: {exc}"), step, index, parent)
        except (DslError, ExternalRendererError) as exc:
            return Candidate(text, MetricReport.invalid(f"render_error: {exc}"), step, index, parent)
        report = self.ctx.scorer.score(mesh)
        return Candidate(text, report, step, index, parent, mesh if report.valid else None)


def _call_editor(editor, ev: Evidence, mode: str, seed: int, index: int) -> tuple[str | None, str | None]:
    try:
        out = editor(ev, mode=mode, seed=seed, index=index)
    except EditorError as exc:
        return None, f"{type(exc).__name__}: {exc}"
    if not isinstance(out, str):
        return None, f"editor returned {type(out).__name__}"
    return out, None


def _child_seed(base: int, step: int, parent: int) -> int:
    return int(np.random.SeedSequence([base, step, parent]).generate_state(1)[0])


def _context(target: TargetContext | TriangleMesh) -> TargetContext:
    return target if isinstance(target, TargetContext) else TargetContext(target)


def _better(a: Candidate | None, b: Candidate) -> Candidate | None:
    if not b.report.valid:
        return a
    if a is None or b.rank_key < a.rank_key:
        return b
    return a


def greedy_loop(target: TargetContext | TriangleMesh, editor, renderer: Renderer, cfg: BeamConfig | None = None) -> Trace:
    """One deterministic editor call and one render per step; N is ignored."""
    cfg = cfg or BeamConfig()
    ctx = _context(target)
    ev_ = _Evaluator(ctx, renderer)
    trace = Trace("greedy")
    best: Candidate | None = None
    prev: tuple[str, TriangleMesh | None] | None = None
    for t in range(1, cfg.s + 1):
        ev = build_evidence(ctx, prev, cfg.modality, cfg.seed, step=t)
        text, err = _call_editor(editor, ev, "greedy", cfg.seed, 0)
        cand = ev_.evaluate(text, t, 0, None, err)
        prev_best_d = math.inf if best is None else best.discrepancy
        had_best = best is not None
        best = _better(best, cand)
        trace.steps.append([cand])
        trace.best_per_step.append(best)
        shown = best if cfg.feed_best and best is not None else cand
        prev = (shown.program if shown.program is not None else "", shown.mesh)
        if t >= 2 and had_best:
            improvement = prev_best_d - best.discrepancy  # type: ignore[union-attr]
            if improvement < cfg.stop_threshold:
                trace.stopped_at = t
                break
    trace.render_count = ev_.render_count
    trace.compile_attempts = ev_.compile_attempts
    return trace


def stochastic_beam(target: TargetContext | TriangleMesh, editor, renderer: Renderer, cfg: BeamConfig | None = None) -> Trace:
    """Sample N children per survivor, keep the N best valid ones each step.

    Ranking ties break by (step, candidate index). A step with no valid
    candidate continues from the best-so-far alone; if nothing valid exists
    yet, the next step samples afresh from the null-prediction evidence.
    """
    cfg = cfg or BeamConfig()
    ctx = _context(target)
    ev_ = _Evaluator(ctx, renderer)
    trace = Trace("beam")
    best: Candidate | None = None
    survivors: list[Candidate] = []
    pool = ThreadPoolExecutor(cfg.workers) if cfg.workers > 1 else None
    try:
        for t in range(1, cfg.s + 1):
            if t == 1:
                parents: list[Candidate | None] = [None]
            elif survivors:
                parents = list(survivors)
            else:
                trace.degraded_steps.append(t)
                parents = [best]
            jobs = []
            for p_rank, parent in enumerate(parents):
                prev = None if parent is None else (parent.program or "", parent.mesh)
                # a missing parent means nothing valid yet: restart from scratch
                ev = build_evidence(ctx, prev, cfg.modality, cfg.seed, step=t if parent is not None else 1)
                seed = _child_seed(cfg.seed, t, p_rank)
                for k in range(cfg.N):
                    jobs.append((ev, seed, k, p_rank * cfg.N + k, None if parent is None else parent.index))

            def run(job):
                ev, seed, k, idx, parent_idx = job
                text, err = _call_editor(editor, ev, "sample", seed, k)
                return text, err, idx, parent_idx

            outs = list(pool.map(run, jobs)) if pool else [run(j) for j in jobs]
            cands = [ev_.evaluate(text, t, idx, parent_idx, err) for text, err, idx, parent_idx in outs]
            for c in cands:
                best = _better(best, c)
            valid = sorted((c for c in cands if c.report.valid), key=lambda c: c.rank_key)
            survivors = valid[: cfg.N]
            trace.steps.append(cands)
            trace.best_per_step.append(best)
    finally:
        if pool:
            pool.shutdown()
    trace.render_count = ev_.render_count
    trace.compile_attempts = ev_.compile_attempts
    return trace


def run_loop(target: TargetContext | TriangleMesh, editor, renderer: Renderer, cfg: BeamConfig, mode: str = "greedy") -> Trace:
    if mode == "greedy":
        return greedy_loop(target, editor, renderer, cfg)
    if mode == "beam":
        return stochastic_beam(target, editor, renderer, cfg)
    raise ValueError(f"unknown mode {mode!r}")


@dataclass(frozen=True)
class ScanTrackResult:
    trace: Trace
    report: AggregateReport
    clean_reports: list[MetricReport]


def run_scan_track(
    clean: TriangleMesh,
    scan: TargetContext | TriangleMesh,
    editor,
    renderer: Renderer,
    cfg: BeamConfig | None = None,
    mode: str = "greedy",
    *,
    iou_resolution: int | None = None,
) -> ScanTrackResult:
    """Run the loop against the scan only, then report against the clean mesh.

    The loop receives nothing but the scan; the clean mesh is touched only after
    selection has finished, to re-score each step's best-so-far render.
    """
    cfg = cfg or BeamConfig()
    trace = run_loop(scan, editor, renderer, cfg, mode)
    scan_ctx = scan if isinstance(scan, TargetContext) else None
    if scan_ctx is not None:
        n, seed, res, _ = scan_ctx._scorer_args
        clean_ctx = TargetContext(clean, scan_ctx.target_id, cd_samples=n, cd_seed=seed, iou_resolution=iou_resolution or res)
    else:
        clean_ctx = TargetContext(clean, iou_resolution=iou_resolution or 64)
    reports = [
        MetricReport.invalid("no valid candidate") if c is None else clean_ctx.scorer.score(c.mesh)  # type: ignore[arg-type]
        for c in trace.best_per_step
    ]
    return ScanTrackResult(trace, aggregate(reports[-1:]), reports)
