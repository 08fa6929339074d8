"""Minimal sketch-extrude CAD language: parse, print, evaluate, render, generate."""

from .ast import Circle, Extrude, Polygon, Program, Rect
from .generate import GenerationExhausted, perturb_program, random_program
from .render import (
    DEFAULT_RESOLUTION,
    DegenerateSolid,
    DslRenderer,
    ExternalRenderer,
    ExternalRendererError,
    ValidityReport,
    check_validity,
    render_mesh,
)
from .sdf import evaluate_sdf, evaluate_sdf_points
from .syntax import DslError, ParseError, RangeError, parse, to_text

__all__ = [
    "Circle",
    "DEFAULT_RESOLUTION",
    "DegenerateSolid",
    "DslError",
    "DslRenderer",
    "ExternalRenderer",
    "ExternalRendererError",
    "Extrude",
    "GenerationExhausted",
    "ParseError",
    "Polygon",
    "Program",
    "RangeError",
    "Rect",
    "ValidityReport",
    "check_validity",
    "evaluate_sdf",
    "evaluate_sdf_points",
    "parse",
    "perturb_program",
    "random_program",
    "render_mesh",
    "to_text",
]
