"""Refinement loops around an opaque program editor."""

from .editors import (
    BadResponse,
    Editor,
    EditorError,
    MissingKey,
    NoisyOracleEditor,
    OracleEditor,
    RemoteEditor,
    ScriptedEditor,
    Timeout,
)
from .evidence import MODALITIES, Evidence, TargetContext, build_evidence
from .search import (
    BeamConfig,
    Candidate,
    ScanTrackResult,
    Trace,
    greedy_loop,
    run_loop,
    run_scan_track,
    stochastic_beam,
)

__all__ = [
    "BadResponse",
    "BeamConfig",
    "Candidate",
    "Editor",
    "EditorError",
    "Evidence",
    "MODALITIES",
    "MissingKey",
    "NoisyOracleEditor",
    "OracleEditor",
    "RemoteEditor",
    "ScanTrackResult",
    "ScriptedEditor",
    "TargetContext",
    "Timeout",
    "Trace",
    "build_evidence",
    "greedy_loop",
    "run_loop",
    "run_scan_track",
    "stochastic_beam",
]
