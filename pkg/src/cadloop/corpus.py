"""Procedural corpora on disk: ``programs/<id>.cadl``, ``meshes/<id>.stl`` and a
``manifest.jsonl`` with one line per item."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .dsl import DEFAULT_RESOLUTION, random_program, render_mesh, to_text
from .mesh import TriangleMesh
from .mesh_io import load_mesh, save_mesh

MANIFEST = "manifest.jsonl"


class ManifestMismatch(ValueError):
    pass


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def item_seed(seed: int, i: int) -> int:
    return int(np.random.SeedSequence([seed, i]).generate_state(1)[0])


@dataclass(eq=False)
class CorpusItem:
    target_id: str
    program: str
    mesh_path: Path | None = None
    _mesh: TriangleMesh | None = field(default=None, repr=False)

    @cached_property
    def mesh(self) -> TriangleMesh:
        if self._mesh is not None:
            return self._mesh
        if self.mesh_path is None:
            raise FileNotFoundError(f"{self.target_id}: no mesh")
        return load_mesh(self.mesh_path)


def generate_corpus(
    count: int, complexity: int, seed: int, out_dir, resolution: int = DEFAULT_RESOLUTION
) -> list[dict]:
    """Write ``count`` random programs and their renders; returns manifest rows."""
    if count < 1:
        raise ValueError("count must be at least 1")
    if not 1 <= complexity <= 8:
        raise ValueError("complexity must be in [1, 8]")
    out = Path(out_dir)
    (out / "programs").mkdir(parents=True, exist_ok=True)
    (out / "meshes").mkdir(parents=True, exist_ok=True)
    rows = []
    width = max(4, len(str(count - 1)))
    for i in range(count):
        tid = f"item_{i:0{width}d}"
        program = random_program(item_seed(seed, i), complexity)
        text = to_text(program)
        ppath = out / "programs" / f"{tid}.cadl"
        mpath = out / "meshes" / f"{tid}.stl"
        ppath.write_text(text, encoding="utf-8")
        save_mesh(render_mesh(program, resolution), mpath)
        rows.append(
            {
                "id": tid,
                "program": f"programs/{tid}.cadl",
                "mesh": f"meshes/{tid}.stl",
                "program_sha256": _sha256(ppath),
                "mesh_sha256": _sha256(mpath),
            }
        )
    with open(out / MANIFEST, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    return rows


def read_manifest(root) -> list[dict]:
    path = Path(root) / MANIFEST
    if not path.exists():
        raise FileNotFoundError(f"no {MANIFEST} in {root}")
    rows = [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]
    if not rows:
        raise ManifestMismatch(f"{path} is empty")
    return rows


def load_corpus(root) -> dict[str, CorpusItem]:
    root = Path(root)
    items = {}
    for row in read_manifest(root):
        prog = row.get("program")
        text = (root / prog).read_text(encoding="utf-8") if prog else ""
        mesh = row.get("mesh")
        items[row["id"]] = CorpusItem(row["id"], text, root / mesh if mesh else None)
    return items


def load_programs(root) -> dict[str, str]:
    """id -> program text from a manifest, or from ``*.cadl`` files if none."""
    root = Path(root)
    if (root / MANIFEST).exists():
        return {row["id"]: (root / row["program"]).read_text(encoding="utf-8") for row in read_manifest(root)}
    files = sorted(root.glob("*.cadl")) or sorted((root / "programs").glob("*.cadl"))
    if not files:
        raise FileNotFoundError(f"no programs in {root}")
    return {f.stem: f.read_text(encoding="utf-8") for f in files}
