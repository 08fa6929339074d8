"""Curriculum records for editor training: seed stage A, rollout-mixed stages B and C.

Every record supervises the ground-truth program. Rollouts only supply the
context (previous program and its render) for t > 1.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .cloud import serialize_cloud
from .corpus import CorpusItem
from .dsl import DegenerateSolid, DslError, ExternalRendererError
from .loop.editors import EditorError
from .loop.evidence import Evidence, TargetContext, build_evidence
from .mesh import MeshError, TriangleMesh

SCHEMA = "rollout_v1"
STAGE_STEPS = {"A": (1,), "B": (1, 2), "C": (1, 2, 3)}
Renderer = Callable[[str], TriangleMesh]


class EmptySplit(ValueError):
    pass


class MissingGroundTruth(KeyError):
    pass


class MissingRollout(KeyError):
    pass


class IoError(OSError):
    pass


class SchemaError(ValueError):
    pass


@dataclass(frozen=True)
class SplitConfig:
    fractions: tuple[float, float, float] = (0.4, 0.3, 0.3)
    seed: int = 0

    def __post_init__(self) -> None:
        fr = tuple(float(f) for f in self.fractions)
        object.__setattr__(self, "fractions", fr)
        if len(fr) != 3 or any(f <= 0 for f in fr):
            raise ValueError("three positive fractions required")
        if abs(sum(fr) - 1.0) > 1e-9:
            raise ValueError("fractions must sum to 1")


def split_corpus(ids: Sequence[str], cfg: SplitConfig | None = None) -> tuple[list[str], list[str], list[str]]:
    """Seeded shuffle, then contiguous D1/D2/D3 blocks sized by the fractions."""
    cfg = cfg or SplitConfig()
    ids = list(ids)
    if len(set(ids)) != len(ids):
        raise ValueError("ids must be unique")
    order = np.random.default_rng(cfg.seed).permutation(len(ids))
    shuffled = [ids[i] for i in order]
    bounds = np.rint(np.cumsum(cfg.fractions) * len(ids)).astype(int)
    bounds[-1] = len(ids)
    parts = np.split(np.arange(len(ids)), bounds[:-1])
    splits = tuple([shuffled[i] for i in p] for p in parts)
    for k, s in enumerate(splits, 1):
        if not s:
            raise EmptySplit(f"D{k} is empty for {len(ids)} ids and fractions {cfg.fractions}")
    return splits  # type: ignore[return-value]


@dataclass(frozen=True)
class RolloutRecord:
    target_id: str
    t: int
    evidence_refs: dict[str, str]
    prev_program: str | None
    target_program: str
    stage: str
    modality: str = "image"
    schema: str = SCHEMA

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        if self.schema != SCHEMA:
            raise SchemaError(f"unknown schema {self.schema!r}")
        if self.stage not in STAGE_STEPS:
            raise SchemaError(f"unknown stage {self.stage!r}")
        if self.t not in STAGE_STEPS[self.stage]:
            raise SchemaError(f"stage {self.stage} does not train t={self.t}")
        if (self.prev_program is None) != (self.t == 1):
            raise SchemaError("prev_program must be absent exactly at t=1")
        if not isinstance(self.target_program, str) or not self.target_program:
            raise SchemaError("target_program missing")
        if not isinstance(self.evidence_refs, dict):
            raise SchemaError("evidence_refs must be a mapping")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: Mapping) -> "RolloutRecord":
        try:
            return cls(
                target_id=str(doc["target_id"]),
                t=int(doc["t"]),
                evidence_refs=dict(doc.get("evidence_refs") or {}),
                prev_program=doc.get("prev_program"),
                target_program=doc["target_program"],
                stage=doc["stage"],
                modality=doc.get("modality", "image"),
                schema=doc.get("schema", ""),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, SchemaError):
                raise
            raise SchemaError(str(exc)) from exc


class EvidenceStore:
    """Content-addressed evidence files; ``None`` root keeps nothing on disk."""

    def __init__(self, root=None, relative_to=None) -> None:
        self.root = None if root is None else Path(root)
        self.relative_to = None if relative_to is None else Path(relative_to)

    def put(self, data: bytes, suffix: str) -> str:
        digest = hashlib.sha256(data).hexdigest()
        if self.root is None:
            return f"sha256:{digest}{suffix}"
        path = self.root / digest[:2] / f"{digest}{suffix}"
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            if not path.exists():
                path.write_bytes(data)
        except OSError as exc:
            raise IoError(str(exc)) from exc
        base = self.relative_to or self.root.parent
        try:
            return path.relative_to(base).as_posix()
        except ValueError:
            return path.as_posix()

    def write(self, ev: Evidence) -> dict[str, str]:
        refs = {}
        if ev.overlay is not None:
            refs["overlay"] = self.put(ev.overlay.to_png(), ".png")
        if ev.cloud is not None:
            refs["cloud"] = self.put(serialize_cloud(ev.cloud), ".dcld")
        return refs


def _item(corpus: Mapping[str, CorpusItem], tid: str) -> CorpusItem:
    item = corpus.get(tid)
    if item is None or not item.program:
        raise MissingGroundTruth(tid)
    return item


def stage_a_records(
    d1: Iterable[str],
    corpus: Mapping[str, CorpusItem],
    store: EvidenceStore | None = None,
    modality: str = "image",
    seed: int = 0,
) -> list[RolloutRecord]:
    store = store or EvidenceStore()
    records = []
    for tid in d1:
        item = _item(corpus, tid)
        try:
            ctx = TargetContext(item.mesh, tid)
        except (OSError, MeshError) as exc:
            raise MissingGroundTruth(f"{tid}: {exc}") from exc
        ev = build_evidence(ctx, None, modality, seed, step=1)
        records.append(RolloutRecord(tid, 1, store.write(ev), None, item.program, "A", modality))
    return records


@dataclass(eq=False)
class RolloutStep:
    program: str
    mesh: TriangleMesh | None = field(repr=False)
    reason: str = "ok"


def rollout(
    editor,
    dk: Iterable[str],
    depth: int,
    seed: int,
    corpus: Mapping[str, CorpusItem],
    renderer: Renderer,
    modality: str = "image",
) -> dict[str, list[RolloutStep]]:
    """Greedy on-policy rollouts of ``depth`` editor steps per target.

    A failing target records its failure as an invalid step instead of
    aborting the batch.
    """
    if depth not in (1, 2):
        raise ValueError("depth must be 1 or 2")
    out: dict[str, list[RolloutStep]] = {}
    for tid in dk:
        item = _item(corpus, tid)
        steps: list[RolloutStep] = []
        try:
            ctx = TargetContext(item.mesh, tid)
        except (OSError, MeshError) as exc:
            out[tid] = [RolloutStep("", None, f"target_error: {exc}") for _ in range(depth)]
            continue
        prev = None
        for t in range(1, depth + 1):
            ev = build_evidence(ctx, prev, modality, seed, step=t)
            try:
                text = editor(ev, mode="greedy", seed=seed, index=0)
            except EditorError as exc:
                steps.append(RolloutStep("", None, f"editor_error: {exc}"))
                prev = ("", None)
                continue
            try:
                mesh, reason = renderer(text), "ok"
            except (DslError, DegenerateSolid, MeshError, ExternalRendererError) as exc:
                mesh, reason = None, f"{type(exc).__name__}: {exc}"
            steps.append(RolloutStep(text, mesh, reason))
            prev = (text, mesh)
        out[tid] = steps
    return out


def stage_mix_records(
    stage: str,
    split: Iterable[str],
    rollouts: Mapping[str, Sequence[RolloutStep]],
    corpus: Mapping[str, CorpusItem],
    store: EvidenceStore | None = None,
    modality: str = "image",
    seed: int = 0,
) -> list[RolloutRecord]:
    """Stage B: t=1 plus t=2 on one-step rollouts. Stage C adds t=3 on two-step ones."""
    if stage not in ("B", "C"):
        raise ValueError("stage must be B or C")
    need = 1 if stage == "B" else 2
    store = store or EvidenceStore()
    split = list(split)
    for tid in split:
        if len(rollouts.get(tid, ())) < need:
            raise MissingRollout(f"{tid}: stage {stage} needs {need}-step rollouts")
    records = []
    for tid in split:
        item = _item(corpus, tid)
        ctx = TargetContext(item.mesh, tid)
        ev = build_evidence(ctx, None, modality, seed, step=1)
        records.append(RolloutRecord(tid, 1, store.write(ev), None, item.program, stage, modality))
        for t in range(2, need + 2):
            step = rollouts[tid][t - 2]
            ev = build_evidence(ctx, (step.program, step.mesh), modality, seed, step=t)
            records.append(RolloutRecord(tid, t, store.write(ev), step.program, item.program, stage, modality))
    return records


def emission_order(
    records: Sequence[RolloutRecord], seed: int, weights: Mapping[int, float] | None = None, length: int | None = None
) -> list[int]:
    """Record indices for a training stream in which each draw first picks a
    step t (uniform unless ``weights`` says otherwise) and then the next record
    of that t from a shuffled queue."""
    by_t: dict[int, list[int]] = {}
    for i, r in enumerate(records):
        by_t.setdefault(r.t, []).append(i)
    if not by_t:
        return []
    ts = sorted(by_t)
    w = np.array([1.0 if weights is None else float(weights.get(t, 0.0)) for t in ts])
    if np.any(w < 0) or w.sum() <= 0:
        raise ValueError("emission weights must be non-negative with a positive sum")
    w /= w.sum()
    rng = np.random.default_rng(seed)
    queues = {t: [] for t in ts}
    order = []
    for _ in range(len(records) if length is None else length):
        t = ts[int(rng.choice(len(ts), p=w))]
        if not queues[t]:
            queues[t] = list(rng.permutation(by_t[t]))
        order.append(int(queues[t].pop()))
    return order


def write_jsonl(records: Iterable[RolloutRecord], path) -> int:
    n = 0
    try:
        with open(path, "w", encoding="utf-8") as fh:
            for r in records:
                r.validate()
                fh.write(json.dumps(r.to_dict(), sort_keys=True, ensure_ascii=False) + "\n")
                n += 1
    except OSError as exc:
        raise IoError(str(exc)) from exc
    return n


def read_jsonl(path) -> list[RolloutRecord]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(str(exc)) from exc
    out = []
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"line {n}: {exc}") from exc
        out.append(RolloutRecord.from_dict(doc))
    return out
