"""Pipeline configuration: one JSON file, one master seed.

The file holds one optional section per stage plus a top-level seed and
output directory. Stage seeds are always derived from the master seed
(fixed offsets per stage), so a single number pins down every random
choice in a run; per-section "seed" keys are rejected. Unknown keys are
rejected everywhere.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .bimodal import FitConfig
from .errors import ConfigError
from .features import FeatureWindowConfig
from .kalman import KalmanParams
from .mlp import TrainConfig
from .synth import SynthConfig

# Offsets decouple the stage streams while keeping one master knob.
_STAGE_SEED_OFFSETS = {"train": 0, "synth": 1}


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    out_dir: str = "out"
    features: FeatureWindowConfig = field(default_factory=FeatureWindowConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    kalman: KalmanParams = field(default_factory=KalmanParams)
    fit: FitConfig = field(default_factory=FitConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)


_SECTION_TYPES = {
    "features": FeatureWindowConfig,
    "train": TrainConfig,
    "kalman": KalmanParams,
    "fit": FitConfig,
    "synth": SynthConfig,
}
_SEEDED_SECTIONS = set(_STAGE_SEED_OFFSETS)


def _build_section(name: str, raw: object, source: str) -> object:
    section_type = _SECTION_TYPES[name]
    if not isinstance(raw, dict):
        raise ConfigError(f"section {name!r} must be an object", source=source)
    allowed = {f.name for f in fields(section_type)} - {"seed"}
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(
            f"unknown keys in section {name!r}: {sorted(unknown)} (allowed: {sorted(allowed)})",
            source=source,
        )
    if name == "synth" and "base_pose" in raw:
        raw = dict(raw, base_pose=tuple(tuple(p) for p in raw["base_pose"]))
    try:
        return section_type(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid section {name!r}: {exc}", source=source) from exc


def _derive_stage_seeds(config: PipelineConfig) -> PipelineConfig:
    return replace(
        config,
        train=replace(config.train, seed=config.seed + _STAGE_SEED_OFFSETS["train"]),
        synth=replace(config.synth, seed=config.seed + _STAGE_SEED_OFFSETS["synth"]),
    )


def load_pipeline_config(path: str | Path | None = None) -> PipelineConfig:
    """Load a config file, or the all-defaults config when path is None."""
    if path is None:
        return _derive_stage_seeds(PipelineConfig())
    source = str(path)
    try:
        with open(path, "r", encoding="utf-8") as handle:
            raw = json.load(handle)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", source=source) from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON ({exc.msg})", source=source, line=exc.lineno) from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be an object", source=source)

    allowed = {"seed", "out_dir", *_SECTION_TYPES}
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(
            f"unknown top-level keys: {sorted(unknown)} (allowed: {sorted(allowed)})", source=source
        )
    seed = raw.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError(f"seed must be a non-negative integer, got {seed!r}", source=source)
    out_dir = raw.get("out_dir", "out")
    if not isinstance(out_dir, str):
        raise ConfigError(f"out_dir must be a string, got {out_dir!r}", source=source)

    sections = {}
    for name in _SECTION_TYPES:
        if name in raw:
            sections[name] = _build_section(name, raw[name], source)
    config = PipelineConfig(seed=seed, out_dir=out_dir, **sections)
    return _derive_stage_seeds(config)


def override_seed(config: PipelineConfig, seed: int) -> PipelineConfig:
    if seed < 0:
        raise ConfigError(f"seed must be non-negative, got {seed}")
    return _derive_stage_seeds(replace(config, seed=seed))


def config_echo(config: PipelineConfig) -> str:
    """Canonical one-line JSON of the full effective config."""

    def as_plain(obj: object) -> object:
        if hasattr(obj, "__dataclass_fields__"):
            return {f.name: as_plain(getattr(obj, f.name)) for f in fields(obj)}
        if isinstance(obj, tuple):
            return [as_plain(v) for v in obj]
        return obj

    return json.dumps(as_plain(config), sort_keys=True, separators=(",", ":"))
