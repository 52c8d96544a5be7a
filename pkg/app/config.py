"""
Configuration for the GuideTouch toolkit.
Typed defaults, a JSON config file that overrides them section by section,
and a few environment overrides.

Units: meters for geometry, degrees for angles, millimeters for distances in
detection settings and logs.
"""

import json
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional, Union

from app.errors import ConfigError
from app.utils.logger import get_logger

logger = get_logger("Config")

SEED_ENV = "GUIDETOUCH_SEED"
OUT_DIR_ENV = "GUIDETOUCH_OUT_DIR"


@dataclass(frozen=True)
class RigConfig:
    # Chest mount for a 1.70 m wearer; pitches chosen so that the 90 deg span
    # reaches 0.30 m and 1.60 m on a plane 0.5 m ahead
    mount_height: float = 1.40
    upper_pitch_deg: float = 7.5
    lower_pitch_deg: float = 37.5
    fov_deg: float = 60.0
    zones_per_side: int = 8
    max_range: float = 4.0


@dataclass(frozen=True)
class NoiseConfig:
    sigma_mm: float = 10.0
    spike_prob: float = 0.02
    spike_value_mm: float = 100.0
    dropout_prob: float = 0.01


@dataclass(frozen=True)
class DetectionSettings:
    danger_threshold_mm: float = 1000.0
    hysteresis_mm: float = 100.0
    window_len: int = 5
    min_zone_count: int = 2
    min_valid_samples: int = 1


@dataclass(frozen=True)
class AlarmSettings:
    buzzer_freq_hz: float = 3500.0


@dataclass(frozen=True)
class RunSettings:
    ticks: int = 100
    seed: int = 0


@dataclass(frozen=True)
class ExperimentSettings:
    participants: int = 11
    reps: int = 5
    trials_per_row: int = 55


@dataclass(frozen=True)
class RunConfig:
    """Everything a command needs besides its input files."""

    rig: RigConfig = field(default_factory=RigConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    detection: DetectionSettings = field(default_factory=DetectionSettings)
    alarm: AlarmSettings = field(default_factory=AlarmSettings)
    run: RunSettings = field(default_factory=RunSettings)
    experiment: ExperimentSettings = field(default_factory=ExperimentSettings)
    scene_path: Optional[str] = None
    out_dir: str = "out"


_SECTIONS = {
    "rig": RigConfig,
    "noise": NoiseConfig,
    "detection": DetectionSettings,
    "alarm": AlarmSettings,
    "run": RunSettings,
    "experiment": ExperimentSettings,
}


def _section(cls, raw, section: str):
    if not isinstance(raw, dict):
        raise ConfigError(f"section '{section}' must be an object")
    known = {f.name: f.type for f in fields(cls)}
    unknown = set(raw) - set(known)
    if unknown:
        raise ConfigError(f"unknown key '{section}.{sorted(unknown)[0]}'")
    defaults = cls()
    values = {}
    for key, value in raw.items():
        default = getattr(defaults, key)
        if isinstance(default, bool) or not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ConfigError(f"'{section}.{key}' must be a number")
        if isinstance(default, int) and not float(value).is_integer():
            raise ConfigError(f"'{section}.{key}' must be an integer")
        values[key] = type(default)(value)
    return replace(defaults, **values)


def config_from_dict(doc: dict) -> RunConfig:
    """Build a RunConfig from a parsed config document."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(doc) - set(_SECTIONS) - {"scene", "out_dir"}
    if unknown:
        raise ConfigError(f"unknown section '{sorted(unknown)[0]}'")
    sections = {name: _section(cls, doc.get(name, {}), name) for name, cls in _SECTIONS.items()}
    cfg = RunConfig(**sections, scene_path=doc.get("scene"), out_dir=doc.get("out_dir", "out"))
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    if cfg.run.ticks < 1:
        raise ConfigError("run.ticks must be >= 1")
    if cfg.detection.danger_threshold_mm <= 0:
        raise ConfigError("detection.danger_threshold_mm must be > 0")
    if cfg.detection.hysteresis_mm < 0:
        raise ConfigError("detection.hysteresis_mm must be >= 0")
    if cfg.detection.window_len < 1 or cfg.detection.min_zone_count < 1:
        raise ConfigError("detection.window_len and detection.min_zone_count must be >= 1")
    if not 1 <= cfg.detection.min_valid_samples <= cfg.detection.window_len:
        raise ConfigError("detection.min_valid_samples must be in [1, window_len]")
    if not 3000 <= cfg.alarm.buzzer_freq_hz <= 4000:
        raise ConfigError("alarm.buzzer_freq_hz must be within [3000, 4000]")
    if cfg.experiment.participants < 1 or cfg.experiment.reps < 1:
        raise ConfigError("experiment.participants and experiment.reps must be >= 1")


def apply_env(cfg: RunConfig) -> RunConfig:
    """Environment overrides: seed and output directory."""
    seed = os.environ.get(SEED_ENV)
    if seed:
        try:
            cfg = replace(cfg, run=replace(cfg.run, seed=int(seed)))
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got '{seed}'") from None
    out_dir = os.environ.get(OUT_DIR_ENV)
    if out_dir:
        cfg = replace(cfg, out_dir=out_dir)
    return cfg


def load_config(path: Optional[Union[str, Path]] = None) -> RunConfig:
    """
    Load a JSON config file (or defaults when path is None) and apply
    environment overrides.

    A relative "scene" entry is resolved against the config file's directory
    and must exist.
    """
    if path is None:
        cfg = RunConfig()
    else:
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}, line {e.lineno}: {e.msg}") from None
        cfg = config_from_dict(doc)
        if cfg.scene_path is not None:
            scene = Path(cfg.scene_path)
            if not scene.is_absolute():
                scene = path.parent / scene
            if not scene.exists():
                raise ConfigError(f"scene file not found: {scene}")
            cfg = replace(cfg, scene_path=str(scene))
        logger.info(f"Loaded config {path}")
    return apply_env(cfg)
