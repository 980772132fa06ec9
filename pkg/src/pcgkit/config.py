"""Run configuration: every tunable of the pipeline, loadable from JSON.

Unknown keys are rejected and every value is range-checked at load time.
The config file path may also come from the ``PCGKIT_CONFIG`` environment
variable.
"""
from __future__ import annotations

import dataclasses
import json
import math
import os
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Tuple

from .classifiers import ClassifierConfig
from .errors import ConfigError, InvalidParams
from .features import FeatureConfig
from .segmentation import SegmentationConfig
from .synth import CorpusSpec

ENV_VAR = "PCGKIT_CONFIG"


@dataclass(frozen=True)
class SignalConfig:
    sample_rate: int = 2000
    band: Tuple[float, float] = (5.0, 700.0)
    filter_order: int = 2
    pad_s: float = 0.2


@dataclass(frozen=True)
class EvalConfig:
    train_frac: float = 0.70
    mlp_val_frac: float = 0.15
    match_tol_s: float = 0.1
    cascaded: bool = False
    recording_vote: bool = True


@dataclass(frozen=True)
class Config:
    signal: SignalConfig = field(default_factory=SignalConfig)
    segmentation: SegmentationConfig = field(default_factory=SegmentationConfig)
    features: FeatureConfig = field(default_factory=FeatureConfig)
    classifiers: ClassifierConfig = field(default_factory=ClassifierConfig)
    evaluation: EvalConfig = field(default_factory=EvalConfig)
    synth: CorpusSpec = field(default_factory=CorpusSpec)


# (low, high) inclusive bounds; None leaves a side open. Numeric fields not
# listed here must be finite and strictly positive.
_BOUNDS = {
    "signal.sample_rate": (1400, None),
    "signal.filter_order": (1, 8),
    "segmentation.n_mel": (32, None),
    "segmentation.dwt_levels": (1, 8),
    "segmentation.threshold_max_weight": (0.0, 1.0),
    "segmentation.threshold_mean_weight": (0.0, 1.0),
    "segmentation.min_periodicity": (0.0, 1.0),
    "segmentation.refractory_cycles": (0.0, 0.5),
    "segmentation.match_cycles": (0.0, 0.5),
    "segmentation.insert_min_value": (0.0, 1.0),
    "features.n_mel": (13, None),
    "features.n_mfcc": (12, 12),
    "features.min_frames": (1, None),
    "classifiers.knn_k": (1, None),
    "classifiers.knn_p": (1.0, None),
    "classifiers.svm_degree": (1, 10),
    "classifiers.svm_coef0": (0.0, None),
    "classifiers.mlp_momentum": (0.0, 0.999),
    "classifiers.mlp_patience": (1, None),
    "classifiers.mahalanobis_ridge": (0.0, 1.0),
    "evaluation.train_frac": (0.1, 0.9),
    "evaluation.mlp_val_frac": (0.05, 0.5),
    "synth.seed": (0, None),
    "synth.base.seed": (0, None),
    "synth.base.snr_db": (-20.0, 80.0),
    "synth.base.timing_jitter": (0.0, 0.2),
    "synth.base.murmur_gain": (0.0, 1.0),
    "synth.base.murmur_peak": (0.1, 0.9),
    "synth.base.lead_s": (0.0, None),
    "synth.as_peak_range": (0.1, 0.9),
}


def _hints(cls):
    return typing.get_type_hints(cls)


def _coerce(cls, data, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected an object, got {type(data).__name__}")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(f'{path}{k}' for k in unknown)}")
    hints = _hints(cls)
    defaults = cls()
    kwargs = {}
    for name, value in data.items():
        key = f"{path}{name}"
        current = getattr(defaults, name)
        if dataclasses.is_dataclass(current):
            kwargs[name] = _coerce(type(current), value, key + ".")
            continue
        kwargs[name] = _convert(value, current, hints.get(name), key)
    try:
        return dataclasses.replace(defaults, **kwargs)
    except InvalidParams as e:
        raise ConfigError(f"{path.rstrip('.') or 'config'}: {e}") from None


def _convert(value, current, hint, key):
    if isinstance(current, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: expected true/false, got {value!r}")
        return value
    if isinstance(current, tuple) or (current is None and "Tuple" in str(hint)):
        if value is None and current is None:
            return None
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{key}: expected a list, got {value!r}")
        if current and len(value) != len(current) and key.endswith("range"):
            raise ConfigError(f"{key}: expected {len(current)} values")
        return tuple(_convert(v, current[0] if current else 0.0, None, key) for v in value)
    if isinstance(current, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        return value
    if isinstance(current, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected a number, got {value!r}")
        return float(value)
    if current is None or isinstance(current, str):
        if value is not None and not isinstance(value, str):
            raise ConfigError(f"{key}: expected a string or null, got {value!r}")
        return value
    return value


def flatten(cfg, prefix: str = "") -> dict:
    """Dotted key -> value for every leaf setting, in declaration order."""
    out = {}
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if dataclasses.is_dataclass(v):
            out.update(flatten(v, f"{prefix}{f.name}."))
        else:
            out[f"{prefix}{f.name}"] = v
    return out


def validate(cfg: Config) -> Config:
    problems = []
    for key, value in flatten(cfg).items():
        values = value if isinstance(value, tuple) else (value,)
        for v in values:
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                continue
            lo, hi = _BOUNDS.get(key, (None, None))
            if not math.isfinite(v):
                problems.append(f"{key}: must be finite")
            elif key not in _BOUNDS and v <= 0:
                problems.append(f"{key}: must be > 0, got {v!r}")
            elif (lo is not None and v < lo) or (hi is not None and v > hi):
                problems.append(f"{key}: {v!r} outside [{lo}, {hi}]")
    s = cfg.signal
    if not 0 < s.band[0] < s.band[1] < s.sample_rate / 2:
        problems.append(f"signal.band: need 0 < low < high < {s.sample_rate / 2}")
    seg = cfg.segmentation
    if not seg.cycle_range_s[0] < seg.cycle_range_s[1]:
        problems.append("segmentation.cycle_range_s: low must be below high")
    if cfg.evaluation.train_frac + cfg.evaluation.mlp_val_frac >= 1:
        problems.append("evaluation: train_frac + mlp_val_frac must leave a test share")
    if len(cfg.classifiers.mlp_hidden) != 2:
        problems.append("classifiers.mlp_hidden: need two hidden layer sizes")
    for key in ("as_gain_range", "mi_gain_range", "cycle_s_range", "as_peak_range",
                "s2_amp_scale", "dur_scale", "freq_scale"):
        lo, hi = getattr(cfg.synth, key)
        if lo > hi:
            problems.append(f"synth.{key}: low must not exceed high")
    if problems:
        raise ConfigError("invalid config: " + "; ".join(problems))
    return cfg


def from_dict(data: dict) -> Config:
    return validate(_coerce(Config, data, ""))


def to_dict(cfg) -> dict:
    def conv(v):
        if dataclasses.is_dataclass(v):
            return {f.name: conv(getattr(v, f.name)) for f in dataclasses.fields(v)}
        if isinstance(v, tuple):
            return [conv(x) for x in v]
        return v
    return conv(cfg)


def load_config(path: Optional[str] = None) -> Config:
    """Load ``path``, else the file named by ``$PCGKIT_CONFIG``, else defaults."""
    path = path or os.environ.get(ENV_VAR)
    if not path:
        return validate(Config())
    p = Path(path)
    try:
        data = json.loads(p.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {p}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"{p}: invalid JSON ({e})") from None
    return from_dict(data)


def header_lines(cfg: Config) -> list:
    """``key = value`` lines for every setting, used as report provenance."""
    return [f"{k} = {json.dumps(to_dict_value(v))}" for k, v in flatten(cfg).items()]


def to_dict_value(v):
    return list(to_dict_value(x) for x in v) if isinstance(v, tuple) else v
