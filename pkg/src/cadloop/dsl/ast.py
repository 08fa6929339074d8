"""Program tree for the sketch-extrude language."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

PLANES = ("XY", "XZ", "YZ")
COMBINES = ("new", "union", "cut", "intersect")
MODES = ("add", "subtract")
DOMAIN = 100.0


@dataclass(frozen=True)
class Rect:
    cx: float
    cy: float
    w: float
    h: float
    mode: str = "add"


@dataclass(frozen=True)
class Circle:
    cx: float
    cy: float
    r: float
    mode: str = "add"


@dataclass(frozen=True)
class Polygon:
    points: tuple[tuple[float, float], ...]
    mode: str = "add"


Primitive = Union[Rect, Circle, Polygon]


@dataclass(frozen=True)
class Extrude:
    """Sketch on ``plane`` offset by ``offset`` along its normal, extruded by ``height``."""

    sketch: tuple[Primitive, ...]
    plane: str = "XY"
    offset: float = 0.0
    height: float = 1.0
    combine: str = "new"


@dataclass(frozen=True)
class Program:
    steps: tuple[Extrude, ...]

    def __len__(self) -> int:
        return len(self.steps)


def polygon_is_degenerate(points) -> bool:
    """True when fewer than 3 vertices or all vertices are collinear."""
    if len(points) < 3:
        return True
    x0, y0 = points[0]
    for i in range(1, len(points)):
        for j in range(i + 1, len(points)):
            (x1, y1), (x2, y2) = points[i], points[j]
            if abs((x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)) > 1e-9:
                return False
    return True
