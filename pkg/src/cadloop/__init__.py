"""Closed-loop harness for reverse-engineering CAD programs from meshes."""

from .mesh import Aabb, TriangleMesh, box_mesh, normalize, sample_surface
from .mesh_io import load_mesh, save_mesh
from .metrics import AggregateReport, MetricReport, Scorer, aggregate, chamfer, evaluate_candidate, volumetric_iou

__all__ = [
    "Aabb",
    "AggregateReport",
    "MetricReport",
    "Scorer",
    "TriangleMesh",
    "aggregate",
    "box_mesh",
    "chamfer",
    "evaluate_candidate",
    "load_mesh",
    "normalize",
    "sample_surface",
    "save_mesh",
    "volumetric_iou",
]
