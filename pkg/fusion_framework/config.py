"""Pipeline configuration.

A single JSON file carries every tunable. Missing keys keep their defaults,
unknown keys are rejected so typos do not silently fall back.
"""

import json
import os
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Dict, Optional

from fusion_framework.core.errors import ConfigError


@dataclass(frozen=True)
class BusConfig:
    high_water: int = 10000


@dataclass(frozen=True)
class IngestConfig:
    gap_tolerance_ms: int = 500
    bytes_per_sample: int = 40
    link_rate_bits_per_s: float = 0.27e6
    wifi_rate_bits_per_s: float = 1e9


@dataclass(frozen=True)
class TimesyncConfig:
    skew_bound_ms: int = 2000


@dataclass(frozen=True)
class HrvConfig:
    window_s: float = 300.0
    mode: str = "tumbling"
    hop_s: float = 300.0
    min_beats: int = 30
    resample_hz: float = 4.0
    segment_s: float = 128.0
    hr_cadence_s: float = 10.0


@dataclass(frozen=True)
class GeoConfig:
    time_tol_s: float = 2.0
    dist_tol_m: float = 20.0
    merge_gap_s: float = 60.0
    speed_threshold_mps: float = 0.5
    window_s: float = 60.0


@dataclass(frozen=True)
class ActivityConfig:
    e_rest_bpm: float = 2.0
    e_act_bpm: float = 3.0
    d_split_bpm: float = 1.5
    slice_s: float = 60.0
    min_segment_slices: int = 4
    peak_prominence_bpm: float = 1.0


@dataclass(frozen=True)
class StorageConfig:
    central_dir: str = "central"


@dataclass(frozen=True)
class SimulationConfig:
    scenario: str = "lunch"
    seed: int = 7
    start_epoch_ms: int = 1456387200000


@dataclass(frozen=True)
class FusionConfig:
    bus: BusConfig = field(default_factory=BusConfig)
    ingest: IngestConfig = field(default_factory=IngestConfig)
    timesync: TimesyncConfig = field(default_factory=TimesyncConfig)
    hrv: HrvConfig = field(default_factory=HrvConfig)
    geo: GeoConfig = field(default_factory=GeoConfig)
    activity: ActivityConfig = field(default_factory=ActivityConfig)
    storage: StorageConfig = field(default_factory=StorageConfig)
    simulation: SimulationConfig = field(default_factory=SimulationConfig)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _build_section(section_type, values: Any, section_name: str):
    if not isinstance(values, dict):
        raise ConfigError(f"config section '{section_name}' must be an object")
    known = {f.name: f for f in fields(section_type)}
    unknown = sorted(set(values) - set(known))
    if unknown:
        raise ConfigError(f"unknown keys in config section '{section_name}': {', '.join(unknown)}")
    defaults = section_type()
    coerced = {}
    for name, value in values.items():
        default = getattr(defaults, name)
        if isinstance(value, bool) or not isinstance(value, type(default)):
            # ints are accepted where floats are expected
            if isinstance(default, float) and isinstance(value, int) and not isinstance(value, bool):
                value = float(value)
            else:
                raise ConfigError(
                    f"config key '{section_name}.{name}' expects {type(default).__name__}, got {value!r}"
                )
        coerced[name] = value
    return replace(defaults, **coerced)


def config_from_dict(data: Dict[str, Any]) -> FusionConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    sections = {f.name: f for f in fields(FusionConfig)}
    unknown = sorted(set(data) - set(sections))
    if unknown:
        raise ConfigError(f"unknown config sections: {', '.join(unknown)}")
    built = {}
    for name in sections:
        if name in data:
            built[name] = _build_section(type(getattr(FusionConfig(), name)), data[name], name)
    config = replace(FusionConfig(), **built)
    if config.hrv.mode not in ("tumbling", "sliding"):
        raise ConfigError(f"hrv.mode must be 'tumbling' or 'sliding', got {config.hrv.mode!r}")
    return config


def load_config(path: Optional[str] = None) -> FusionConfig:
    """Loads the JSON config at ``path``; no path means all defaults."""
    if not path:
        return FusionConfig()
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path, "r") as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file {path} is not valid JSON: {e}") from e
    return config_from_dict(data)


def with_overrides(config: FusionConfig, seed: Optional[int] = None, scenario: Optional[str] = None) -> FusionConfig:
    """CLI flags take precedence over the config file."""
    simulation = config.simulation
    if seed is not None:
        simulation = replace(simulation, seed=seed)
    if scenario:
        simulation = replace(simulation, scenario=scenario)
    return replace(config, simulation=simulation)
