"""Run configuration: built-in defaults < key=value file < command-line flags.

The file format is flat ``section.key = value`` lines; ``#`` starts a comment.
"""

from __future__ import annotations

from pathlib import Path
from typing import Iterable, Mapping

DEFAULTS: dict[str, object] = {
    "run.out_dir": "run",
    "run.workers": 1,
    "corpus.count": 10,
    "corpus.complexity": 3,
    "corpus.seed": 0,
    "render.resolution": 128,
    "metrics.cd_samples": 8192,
    "metrics.cd_seed": 0,
    "metrics.iou_resolution": 64,
    "loop.mode": "greedy",
    "loop.modality": "image",
    "loop.N": 5,
    "loop.s": 5,
    "loop.stop_threshold": 0.0,
    "loop.feed_best": False,
    "loop.seed": 0,
    "loop.scan": False,
    "editor.kind": "oracle",
    "editor.magnitude": 0.3,
    "editor.decay": 0.5,
    "editor.seed": 0,
    "editor.endpoint": "",
    "editor.timeout": 30.0,
    "editor.retries": 0,
    "editor.script": "",
    "scan.n_points": 100000,
    "scan.n_views": 5,
    "scan.radius_factor": 2.5,
    "scan.elevation_deg": 30.0,
    "scan.hole_count": "1,3",
    "scan.hole_radius": "0.02,0.05",
    "scan.recon_resolution": 64,
    "scan.hpr_radius_factor": 100.0,
    "scan.seed": 0,
    "scan.external_command": "",
    "scan.external_timeout": 600.0,
    "rollout.fractions": "0.4,0.3,0.3",
    "rollout.split_seed": 0,
    "rollout.seed": 0,
    "rollout.modality": "image",
    "rollout.weights": "1,1,1",
}


class ConfigError(ValueError):
    pass


def _coerce(key: str, raw: object) -> object:
    default = DEFAULTS[key]
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    if isinstance(default, bool):
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    try:
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
    except ValueError:
        raise ConfigError(f"{key}: expected {type(default).__name__}, got {raw!r}") from None
    return text


def parse_config_text(text: str, source: str = "<config>") -> dict[str, object]:
    out: dict[str, object] = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{n}: expected key = value")
        key, value = (p.strip() for p in line.split("=", 1))
        if key not in DEFAULTS:
            raise ConfigError(f"{source}:{n}: unknown key {key!r}")
        out[key] = _coerce(key, value)
    return out


def parse_overrides(pairs: Iterable[str]) -> dict[str, object]:
    return parse_config_text("\n".join(pairs), "--set")


def resolve(file: str | Path | None = None, flags: Mapping[str, object] | None = None) -> dict[str, object]:
    cfg = dict(DEFAULTS)
    if file:
        path = Path(file)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        cfg.update(parse_config_text(text, str(path)))
    for key, value in (flags or {}).items():
        if value is None:
            continue
        if key not in DEFAULTS:
            raise ConfigError(f"unknown key {key!r}")
        cfg[key] = _coerce(key, value)
    return cfg


def dump(cfg: Mapping[str, object]) -> str:
    def fmt(v: object) -> str:
        if isinstance(v, bool):
            return "true" if v else "false"
        return str(v)

    return "".join(f"{k} = {fmt(cfg[k])}\n" for k in sorted(cfg))


def section(cfg: Mapping[str, object], name: str) -> dict[str, object]:
    prefix = name + "."
    return {k[len(prefix):]: v for k, v in cfg.items() if k.startswith(prefix)}


def float_list(value: object) -> list[float]:
    if isinstance(value, (list, tuple)):
        return [float(v) for v in value]
    return [float(p) for p in str(value).replace(",", " ").split()]
