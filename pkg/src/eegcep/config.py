"""Flat ``key = value`` configuration files.

Keys are dotted by stage, e.g.::

    # front end
    frontend.window_dur = 0.2
    frontend.num_filters = 20
    energy.diff_window_dur = 0.9
    models.num_mixtures = 4

Blank lines and ``#`` comments are ignored.  Command-line flags override
file values.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from typing import Dict, Mapping

from .dynamics import DeltaSpec
from .energy import ENERGY_FLOOR, DiffEnergySpec
from .errors import ConfigError
from .frontend import FilterBankSpec, FrameSpec
from .ingest import ResampleSpec
from .models import TrainConfig

# config key -> (section object, attribute, type)
_KEYS = {
    "resample.target_rate": ("resample", "target_rate", float),
    "resample.filter_taps": ("resample", "filter_taps", int),
    "resample.kaiser_beta": ("resample", "kaiser_beta", float),
    "frontend.window_dur": ("frame", "window_dur", float),
    "frontend.step_dur": ("frame", "step_dur", float),
    "frontend.window_function": ("frame", "window_function", str),
    "frontend.num_filters": ("filterbank", "num_filters", int),
    "frontend.low_freq": ("filterbank", "low_freq", float),
    "frontend.high_freq": ("filterbank", "high_freq", float),
    "frontend.fft_size": ("filterbank", "fft_size", int),
    "energy.diff_window_dur": ("diff", "window_dur", float),
    "energy.floor": ("energy_floor", None, float),
    "dynamics.n_first": ("delta", "n_first", int),
    "dynamics.n_second": ("delta", "n_second", int),
    "models.num_states": ("train", "num_states", int),
    "models.num_mixtures": ("train", "num_mixtures", int),
    "models.max_iter": ("train", "max_iter", int),
    "models.seed": ("train", "seed", int),
}


@dataclass(frozen=True)
class PipelineConfig:
    resample: ResampleSpec = ResampleSpec()
    frame: FrameSpec = FrameSpec()
    filterbank: FilterBankSpec = FilterBankSpec()
    diff: DiffEnergySpec = DiffEnergySpec()
    energy_floor: float = ENERGY_FLOOR
    delta: DeltaSpec = DeltaSpec()
    train: TrainConfig = field(default_factory=TrainConfig)


def read_config_file(path) -> Dict[str, str]:
    values = {}
    with open(os.fspath(path)) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in _KEYS:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = val
    return values


def build_config(values: Mapping[str, object] = ()) -> PipelineConfig:
    """Apply ``values`` (config key -> value) over the defaults.

    The frame and filter-bank rates follow ``resample.target_rate``.
    """
    sections: Dict[str, Dict[str, object]] = {}
    floor = ENERGY_FLOOR
    for key, raw in dict(values).items():
        if key not in _KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        section, attr, typ = _KEYS[key]
        try:
            val = typ(raw)
        except ValueError:
            raise ConfigError(f"{key}: cannot parse {raw!r} as {typ.__name__}") from None
        if section == "energy_floor":
            floor = val
        else:
            sections.setdefault(section, {})[attr] = val

    base = PipelineConfig()
    resample = replace(base.resample, **sections.get("resample", {}))
    rate = resample.target_rate
    frame = replace(base.frame, sample_rate=rate, **sections.get("frame", {}))
    fb_kw = dict(sections.get("filterbank", {}))
    fb_kw.setdefault("high_freq", rate / 2.0)
    filterbank = replace(base.filterbank, sample_rate=rate, **fb_kw)
    diff = replace(base.diff, step_dur=frame.step_dur, **sections.get("diff", {}))
    delta = replace(base.delta, **sections.get("delta", {}))
    train = replace(base.train, **sections.get("train", {}))
    if filterbank.fft_size < frame.window_samples:
        raise ConfigError("frontend.fft_size must be >= the window length in samples")
    return PipelineConfig(resample, frame, filterbank, diff, floor, delta, train)


def config_items(cfg: PipelineConfig) -> Dict[str, object]:
    """Flatten ``cfg`` back to config keys (for logging and reports)."""
    out = {}
    for key, (section, attr, _typ) in _KEYS.items():
        obj = getattr(cfg, section)
        out[key] = obj if attr is None else getattr(obj, attr)
    return out

