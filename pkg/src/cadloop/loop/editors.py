"""Stand-ins for the learned editor.

Every editor is a callable ``editor(evidence, mode="greedy", seed=0, index=0)``
returning program text. ``index`` numbers the candidates drawn for the same
evidence in one step.
"""

from __future__ import annotations

import json
import socket
import urllib.error
import urllib.request
from pathlib import Path
from typing import Mapping, Protocol

import numpy as np

from ..dsl import parse, perturb_program, to_text
from .evidence import Evidence


class EditorError(RuntimeError):
    pass


class MissingKey(EditorError, KeyError):
    pass


class Timeout(EditorError):
    pass


class BadResponse(EditorError):
    pass


class Editor(Protocol):
    def __call__(self, evidence: Evidence, mode: str = "greedy", seed: int = 0, index: int = 0) -> str: ...


class OracleEditor:
    """Returns the ground-truth program whatever the evidence."""

    def __init__(self, gt: str) -> None:
        self.gt = gt

    def __call__(self, evidence: Evidence, mode: str = "greedy", seed: int = 0, index: int = 0) -> str:
        return self.gt


class NoisyOracleEditor:
    """Ground truth with parameter noise that halves every step.

    At step t the magnitude is ``magnitude * decay**t`` and the perturbation
    seed is ``seed ^ t``; sampling mode additionally folds in the call seed and
    candidate index so beam children differ.
    """

    def __init__(self, gt: str, magnitude: float, seed: int = 0, decay: float = 0.5) -> None:
        self.program = parse(gt)
        self.gt = gt
        self.magnitude = magnitude
        self.seed = seed
        self.decay = decay

    def __call__(self, evidence: Evidence, mode: str = "greedy", seed: int = 0, index: int = 0) -> str:
        t = evidence.step
        m = self.magnitude * self.decay**t
        if m == 0:
            return self.gt
        s = self.seed ^ t
        if mode != "greedy":
            s = int(np.random.SeedSequence([s, seed, index]).generate_state(1)[0])
        return to_text(perturb_program(self.program, m, s))


class ScriptedEditor:
    """Replays recorded responses keyed by (target_id, step, index)."""

    def __init__(self, responses: Mapping[tuple[str, int, int], str]) -> None:
        self.responses = dict(responses)

    @classmethod
    def from_file(cls, path) -> "ScriptedEditor":
        """JSONL lines with target_id, t, k and program."""
        responses = {}
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if line.strip():
                rec = json.loads(line)
                responses[(str(rec["target_id"]), int(rec["t"]), int(rec.get("k", 0)))] = rec["program"]
        return cls(responses)

    def __call__(self, evidence: Evidence, mode: str = "greedy", seed: int = 0, index: int = 0) -> str:
        key = (evidence.target_id, evidence.step, index)
        try:
            return self.responses[key]
        except KeyError:
            raise MissingKey(key) from None


class RemoteEditor:
    """POSTs the evidence payload as JSON and expects ``{"program": text}`` back."""

    def __init__(self, endpoint: str, timeout: float = 30.0, retries: int = 0) -> None:
        self.endpoint = endpoint
        self.timeout = timeout
        self.retries = retries

    def __call__(self, evidence: Evidence, mode: str = "greedy", seed: int = 0, index: int = 0) -> str:
        body = json.dumps(evidence.to_payload(mode, seed)).encode("utf-8")
        last: Exception | None = None
        for _ in range(self.retries + 1):
            req = urllib.request.Request(self.endpoint, data=body, headers={"Content-Type": "application/json"})
            try:
                with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                    status = resp.status
                    raw = resp.read()
            except urllib.error.HTTPError as exc:
                raise BadResponse(f"HTTP {exc.code}") from exc
            except (urllib.error.URLError, socket.timeout, TimeoutError, ConnectionError) as exc:
                last = exc
                continue
            if status != 200:
                raise BadResponse(f"HTTP {status}")
            try:
                doc = json.loads(raw.decode("utf-8"))
            except (UnicodeDecodeError, json.JSONDecodeError) as exc:
                raise BadResponse(f"invalid JSON: {exc}") from exc
            if not isinstance(doc, dict) or not isinstance(doc.get("program"), str):
                raise BadResponse("response lacks a string 'program' field")
            return doc["program"]
        raise Timeout(f"{self.endpoint}: {last}")
