"""Procedural programs for test corpora and perturbation for noisy editors."""

from __future__ import annotations

import dataclasses

import numpy as np

from .ast import DOMAIN, Circle, Extrude, PLANES, Polygon, Program, Rect, polygon_is_degenerate
from .render import has_solid_nodes

MAX_RETRIES = 10
# Generated programs must have solid nodes on this grid; node sets nest, so
# they then render at every supported resolution that is a multiple of it.
_CHECK_RESOLUTION = 32
_MIN_DIM = 0.01


class GenerationExhausted(RuntimeError):
    pass


def _int(rng: np.random.Generator, lo: float, hi: float) -> float:
    return float(rng.integers(int(np.ceil(lo)), int(np.floor(hi)) + 1))


def _random_primitive(rng: np.random.Generator, scale: float, mode: str):
    kind = rng.choice(["rect", "rect", "circle", "polygon"])
    if kind == "rect":
        w = _int(rng, 10 * scale, 80 * scale)
        h = _int(rng, 10 * scale, 80 * scale)
        cx = _int(rng, -40, 40)
        cy = _int(rng, -40, 40)
        cx = float(np.clip(cx, -95 + w / 2, 95 - w / 2))
        cy = float(np.clip(cy, -95 + h / 2, 95 - h / 2))
        return Rect(cx, cy, w, h, mode)
    if kind == "circle":
        r = _int(rng, 5 * scale, 40 * scale)
        lim = 95 - r
        return Circle(float(np.clip(_int(rng, -40, 40), -lim, lim)), float(np.clip(_int(rng, -40, 40), -lim, lim)), r, mode)
    n = int(rng.integers(3, 7))
    radius = _int(rng, 15 * scale, 45 * scale)
    cx, cy = _int(rng, -40, 40), _int(rng, -40, 40)
    angles = np.sort(rng.uniform(0, 2 * np.pi, n))
    while True:
        pts = tuple(
            (
                float(np.clip(round(cx + radius * np.cos(a)), -95, 95)),
                float(np.clip(round(cy + radius * np.sin(a)), -95, 95)),
            )
            for a in angles
        )
        pts = tuple(q for i, q in enumerate(pts) if q != pts[i - 1])
        if len(pts) >= 3 and not polygon_is_degenerate(pts):
            return Polygon(pts, mode)
        angles = np.linspace(0, 2 * np.pi, n, endpoint=False) + rng.uniform(0, 1)


def _random_step(rng: np.random.Generator, combine: str) -> Extrude:
    scale = 0.5 if combine == "cut" else 1.0
    height = _int(rng, 10, 80 if combine != "cut" else 100)
    offset = _int(rng, -60, max(-60, 60 - height))
    offset = float(np.clip(offset, -95, 95 - height))
    sketch = [_random_primitive(rng, scale, "add")]
    if combine != "cut" and rng.random() < 0.3:
        sketch.append(_random_primitive(rng, scale, "add"))
    if combine != "cut" and rng.random() < 0.25:
        sketch.append(_random_primitive(rng, 0.4, "subtract"))
    return Extrude(tuple(sketch), str(rng.choice(PLANES)), offset, height, combine)


def _draw(rng: np.random.Generator, complexity: int) -> Program:
    steps = [_random_step(rng, "new")]
    for _ in range(complexity - 1):
        op = str(rng.choice(["union", "cut", "intersect"], p=[0.5, 0.4, 0.1]))
        steps.append(_random_step(rng, op))
    return Program(tuple(steps))


def random_program(seed: int, complexity: int) -> Program:
    """Random valid program with ``complexity`` extrude steps; redraws empty solids."""
    if not 1 <= complexity <= 8:
        raise ValueError("complexity must be in [1, 8]")
    for attempt in range(MAX_RETRIES + 1):
        rng = np.random.default_rng([seed, attempt])
        program = _draw(rng, complexity)
        if has_solid_nodes(program, _CHECK_RESOLUTION):
            return program
    raise GenerationExhausted(f"seed {seed}: no non-degenerate program after {MAX_RETRIES} retries")


def _scale(value: float, factor: float, positive: bool) -> float:
    out = round(value * factor, 3)
    if positive:
        return float(np.clip(out, _MIN_DIM, DOMAIN))
    return float(np.clip(out, -DOMAIN, DOMAIN))


def perturb_program(program: Program, magnitude: float, seed: int) -> Program:
    """Jitter every numeric parameter by a factor in [1 - magnitude, 1 + magnitude].

    With probability magnitude/2 one structural edit is also applied: a
    primitive is dropped from a multi-primitive sketch, or a non-first combine
    flag is flipped.
    """
    if not 0 <= magnitude <= 1:
        raise ValueError("magnitude must be in [0, 1]")
    rng = np.random.default_rng(seed)

    def factor() -> float:
        return 1.0 + rng.uniform(-1.0, 1.0) * magnitude

    steps = []
    for step in program.steps:
        sketch = []
        for p in step.sketch:
            if isinstance(p, Rect):
                q = Rect(
                    _scale(p.cx, factor(), False),
                    _scale(p.cy, factor(), False),
                    _scale(p.w, factor(), True),
                    _scale(p.h, factor(), True),
                    p.mode,
                )
            elif isinstance(p, Circle):
                q = Circle(_scale(p.cx, factor(), False), _scale(p.cy, factor(), False), _scale(p.r, factor(), True), p.mode)
            else:
                pts = tuple((_scale(x, factor(), False), _scale(y, factor(), False)) for x, y in p.points)
                q = Polygon(p.points if polygon_is_degenerate(pts) else pts, p.mode)
            sketch.append(q)
        steps.append(
            dataclasses.replace(
                step,
                sketch=tuple(sketch),
                offset=_scale(step.offset, factor(), False),
                height=_scale(step.height, factor(), True),
            )
        )

    if rng.random() < magnitude / 2:
        droppable = [i for i, s in enumerate(steps) if len(s.sketch) > 1]
        flippable = list(range(1, len(steps)))
        actions = [("drop", i) for i in droppable] + [("flip", i) for i in flippable]
        if actions:
            kind, i = actions[int(rng.integers(len(actions)))]
            s = steps[i]
            if kind == "drop":
                j = int(rng.integers(len(s.sketch)))
                steps[i] = dataclasses.replace(s, sketch=s.sketch[:j] + s.sketch[j + 1 :])
            else:
                flipped = {"union": "cut", "cut": "union", "intersect": "union"}[s.combine]
                steps[i] = dataclasses.replace(s, combine=flipped)
    return Program(tuple(steps))
