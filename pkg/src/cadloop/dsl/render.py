"""Program to mesh: field sampling over the fixed domain plus marching cubes."""

from __future__ import annotations

import logging
import os
import shlex
import subprocess
import tempfile
import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..mesh import TriangleMesh, mesh_from_field
from .ast import DOMAIN, Program
from .sdf import evaluate_sdf_grid
from .syntax import ParseError, RangeError, parse

log = logging.getLogger(__name__)

DEFAULT_RESOLUTION = 128


class DegenerateSolid(ValueError):
    """The program evaluates to an empty solid on the sampling grid."""


class ExternalRendererError(RuntimeError):
    pass


def grid_axis(resolution: int) -> np.ndarray:
    """Node coordinates: the domain split into ``resolution`` cells plus one padding node per side."""
    h = 2 * DOMAIN / resolution
    return -DOMAIN + h * np.arange(-1, resolution + 2)


def domain_field(program: Program, resolution: int) -> np.ndarray:
    """Program field on the padded node grid, clipped to the modelling domain."""
    g = grid_axis(resolution)
    field = np.array(evaluate_sdf_grid(program, g))
    # clip to the domain so the surface is always closed
    outside = np.abs(g) - DOMAIN
    clip = np.maximum(np.maximum(outside[:, None, None], outside[None, :, None]), outside[None, None, :])
    return np.maximum(field, clip)


def has_solid_nodes(program: Program, resolution: int) -> bool:
    """Whether any node is strictly inside.

    Node sets are nested (a resolution's nodes are also nodes of every
    multiple of it), so a pass at 32 implies a pass at 64, 128 and 256.
    """
    return bool(np.any(domain_field(program, resolution) < 0))


def render_mesh(program: Program, grid_resolution: int = DEFAULT_RESOLUTION) -> TriangleMesh:
    if not 32 <= grid_resolution <= 256:
        raise ValueError("grid_resolution must be in [32, 256]")
    field = domain_field(program, grid_resolution)
    if not np.any(field < 0):
        raise DegenerateSolid("program yields an empty solid")
    h = 2 * DOMAIN / grid_resolution
    return mesh_from_field(field, (grid_axis(grid_resolution)[0],) * 3, h)


@dataclass(frozen=True)
class ValidityReport:
    valid: bool
    reason: str  # ok | parse_error | range_error | degenerate_solid
    detail: str = ""


def check_validity(text: str, grid_resolution: int = DEFAULT_RESOLUTION) -> ValidityReport:
    """Classify program text: must parse, stay in range, and render a non-empty solid."""
    try:
        program = parse(text)
    except RangeError as exc:
        return ValidityReport(False, "range_error", str(exc))
    except ParseError as exc:
        return ValidityReport(False, "parse_error", str(exc))
    try:
        render_mesh(program, grid_resolution)
    except DegenerateSolid as exc:
        return ValidityReport(False, "degenerate_solid", str(exc))
    return ValidityReport(True, "ok")


class DslRenderer:
    """Renderer for program text; counts every actual render invocation."""

    def __init__(self, resolution: int = DEFAULT_RESOLUTION) -> None:
        self.resolution = resolution
        self.render_count = 0
        self._lock = threading.Lock()

    def __call__(self, text: str) -> TriangleMesh:
        program = parse(text)
        with self._lock:
            self.render_count += 1
        return render_mesh(program, self.resolution)


class ExternalRenderer:
    """Delegates rendering to an executable.

    The command template receives ``{program}`` (a UTF-8 program file) and
    ``{mesh}`` (where it must write an OBJ/STL/PLY mesh). A nonzero exit means
    the program failed to compile; an empty/missing mesh means a degenerate solid.
    """

    def __init__(self, command: str, timeout: float = 120.0, suffix: str = ".stl") -> None:
        self.command = command
        self.timeout = timeout
        self.suffix = suffix
        self.render_count = 0

    def __call__(self, text: str) -> TriangleMesh:
        from ..mesh_io import load_mesh

        self.render_count += 1
        with tempfile.TemporaryDirectory() as tmp:
            prog = Path(tmp) / "program.cadl"
            mesh = Path(tmp) / f"mesh{self.suffix}"
            prog.write_text(text, encoding="utf-8")
            cmd = self.command.format(program=shlex.quote(str(prog)), mesh=shlex.quote(str(mesh)))
            try:
                proc = subprocess.run(cmd, shell=True, capture_output=True, timeout=self.timeout, env=os.environ.copy())
            except subprocess.TimeoutExpired as exc:
                raise ExternalRendererError(f"renderer timed out after {self.timeout}s") from exc
            if proc.returncode != 0:
                raise ParseError(0, 0, proc.stderr.decode(errors="replace").strip() or "external renderer failed")
            if not mesh.exists() or mesh.stat().st_size == 0:
                raise DegenerateSolid("external renderer produced no solid")
            return load_mesh(mesh)
