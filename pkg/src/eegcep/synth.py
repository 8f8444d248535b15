"""Synthetic labelled EEG with the six event classes.

The timeline of each channel is a run of 1-second slots aligned to the epoch
grid.  Each event claims one or more whole slots, so every generated label
maps cleanly onto epochs.  Waveform models are deliberately simple:

* BCKG  pink (1/f power) Gaussian noise whose level drifts smoothly
* SPSW  one derivative-of-Gaussian biphasic transient near the slot centre
* PLED  train of narrow biphasic transients at 1-2 Hz, 10% period jitter
* GPED  train of broad, slower biphasic discharges at 1-2 Hz
* EYEM  low-frequency (< 4 Hz) high-amplitude smooth deflections
* ARTF  sustained broadband (white) bursts

Only SPSW labels cover the transient itself; the other classes label their
whole slot span.  Background is left unlabelled.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np

from .errors import ConfigError
from .evaluate import EventLabel
from .ingest import Channel, SignalRecord
from .labels import ARTF, BCKG, CLASSES, EYEM, GPED, PLED, SPSW, TRAINING_COUNTS

_TOTAL = sum(TRAINING_COUNTS.values())
TABLE1_PRIORS = {c: TRAINING_COUNTS[c] / _TOTAL for c in CLASSES}


@dataclass(frozen=True)
class EventParams:
    amplitude: Tuple[float, float]                # peak amplitude, uV
    duration: Tuple[float, float]                 # s; pulse width for SPSW, event length otherwise
    rate: Optional[Tuple[float, float]] = None    # Hz, periodic classes only
    width: Optional[Tuple[float, float]] = None   # s, width of each discharge in a train

    def validate(self, label):
        for name in ("amplitude", "duration", "rate", "width"):
            rng = getattr(self, name)
            if rng is None:
                continue
            lo, hi = rng
            if not (0 < lo <= hi):
                raise ConfigError(f"{label}.{name}: need 0 < lo <= hi, got {rng}")


DEFAULT_EVENTS = {
    SPSW: EventParams(amplitude=(80.0, 140.0), duration=(0.06, 0.12)),
    PLED: EventParams(amplitude=(50.0, 100.0), duration=(2.0, 6.0), rate=(1.0, 2.0),
                      width=(0.05, 0.09)),
    GPED: EventParams(amplitude=(50.0, 100.0), duration=(2.0, 6.0), rate=(1.0, 2.0),
                      width=(0.16, 0.28)),
    EYEM: EventParams(amplitude=(80.0, 160.0), duration=(1.0, 3.0), rate=(0.5, 2.0)),
    ARTF: EventParams(amplitude=(30.0, 70.0), duration=(1.0, 4.0)),
}


# Harder preset for the directional system comparisons: rarer classes are
# boosted so every class has enough training epochs, events sit closer to
# the background level, periodic discharges run longer and the background
# drifts less.
BENCHMARK_PRIORS = {SPSW: 0.12, GPED: 0.12, PLED: 0.14, EYEM: 0.10, ARTF: 0.14, BCKG: 0.38}
BENCHMARK_EVENTS = {
    SPSW: replace(DEFAULT_EVENTS[SPSW], amplitude=(25.0, 50.0)),
    PLED: replace(DEFAULT_EVENTS[PLED], amplitude=(15.0, 35.0), duration=(5.0, 15.0)),
    GPED: replace(DEFAULT_EVENTS[GPED], amplitude=(15.0, 35.0), duration=(5.0, 15.0)),
    EYEM: replace(DEFAULT_EVENTS[EYEM], amplitude=(25.0, 60.0)),
    ARTF: replace(DEFAULT_EVENTS[ARTF], amplitude=(20.0, 45.0)),
}


@dataclass(frozen=True)
class SynthSpec:
    seed: int = 0
    duration: float = 60.0
    num_channels: int = 1
    sample_rate: float = 250.0
    class_priors: Dict[str, float] = field(default_factory=lambda: dict(TABLE1_PRIORS))
    event_params: Dict[str, EventParams] = field(default_factory=lambda: dict(DEFAULT_EVENTS))
    background_rms: float = 10.0
    background_drift: float = 0.4      # sd of the per-slot log gain of the background
    jitter: float = 0.1                # relative period jitter in trains
    slot_dur: float = 1.0

    def validate(self):
        if self.duration <= 0 or self.num_channels < 1 or self.sample_rate <= 0:
            raise ConfigError("duration, num_channels and sample_rate must be positive")
        if self.background_rms <= 0 or self.background_drift < 0 or self.slot_dur <= 0:
            raise ConfigError("invalid background or slot parameters")
        if not 0 <= self.jitter < 1:
            raise ConfigError("jitter must be in [0, 1)")
        unknown = set(self.class_priors) - set(CLASSES)
        if unknown:
            raise ConfigError(f"unknown classes in priors: {sorted(unknown)}")
        pri = np.array([self.class_priors.get(c, 0.0) for c in CLASSES])
        if np.any(pri < 0) or abs(pri.sum() - 1.0) > 1e-9:
            raise ConfigError(f"class priors must be non-negative and sum to 1 (sum={pri.sum()!r})")
        for c in CLASSES[:-1]:
            if self.class_priors.get(c, 0.0) > 0:
                if c not in self.event_params:
                    raise ConfigError(f"no event parameters for {c}")
                self.event_params[c].validate(c)
        return self


def _slot_count(label: str, params: EventParams, rng) -> int:
    if label in (BCKG, SPSW):
        return 1
    return max(1, int(round(rng.uniform(*params.duration))))


def _mean_slots(label: str, params: Optional[EventParams]) -> float:
    if label in (BCKG, SPSW):
        return 1.0
    lo, hi = params.duration
    # expectation of max(1, round(U(lo, hi))) by fine quadrature
    u = np.linspace(lo, hi, 20001)
    return float(np.maximum(1, np.round(u)).mean())


def pink_noise(n: int, rng) -> np.ndarray:
    """Unit-RMS Gaussian noise with a 1/f power spectrum."""
    spec = np.fft.rfft(rng.standard_normal(n))
    f = np.arange(len(spec), dtype=np.float64)
    f[0] = 1.0
    spec /= np.sqrt(f)
    spec[0] = 0.0
    x = np.fft.irfft(spec, n)
    return x / x.std()


def biphasic(t, center: float, width: float) -> np.ndarray:
    """Derivative-of-Gaussian pulse with unit peak magnitude; ``width`` is
    the span between the two lobes' outer zero-crossing region (about 4 sigma)."""
    sigma = width / 4.0
    u = (np.asarray(t) - center) / sigma
    # -u*exp(-u^2/2) peaks at |u| = 1 with value exp(-1/2)
    return -u * np.exp(-0.5 * u * u) / np.exp(-0.5)


def _train(t, t0, t1, params: EventParams, amp, jitter, rng):
    rate = rng.uniform(*params.rate)
    period = 1.0 / rate
    out = np.zeros_like(t)
    pos = t0 + rng.uniform(0.1, period)
    while pos < t1 - 0.1:
        width = rng.uniform(*params.width)
        out += amp * rng.uniform(0.85, 1.0) * biphasic(t, pos, width)
        pos += period * (1.0 + rng.uniform(-jitter, jitter))
    return out


def _eye_movement(t, t0, t1, params: EventParams, amp, rng):
    freq = rng.uniform(*params.rate)           # < 4 Hz by construction
    phase = rng.uniform(0, 2 * np.pi)
    span = t1 - t0
    env = np.sin(np.pi * np.clip((t - t0) / span, 0.0, 1.0))
    return amp * env * np.sin(2 * np.pi * freq * (t - t0) + phase)


def _artifact(n, amp, rng, sample_rate):
    ramp = min(n // 2, int(0.05 * sample_rate))
    env = np.ones(n)
    if ramp:
        env[:ramp] = np.linspace(0, 1, ramp)
        env[-ramp:] = np.linspace(1, 0, ramp)
    return amp / 3.0 * rng.standard_normal(n) * env


def _generate_channel(name: str, spec: SynthSpec, rng) -> Tuple[np.ndarray, List[EventLabel]]:
    fs = spec.sample_rate
    n = int(round(spec.duration * fs))
    slot_n = int(round(spec.slot_dur * fs))
    n_slots = n // slot_n
    t = np.arange(n) / fs

    pri = np.array([spec.class_priors.get(c, 0.0) for c in CLASSES])
    mean_len = np.array([_mean_slots(c, spec.event_params.get(c)) for c in CLASSES])
    pick = pri / mean_len
    pick /= pick.sum()

    # level drifts smoothly: log gain drawn per slot edge, linear in between
    knots = spec.background_drift * rng.standard_normal(n_slots + 2)
    gain = np.exp(np.interp(t / spec.slot_dur, np.arange(n_slots + 2), knots))
    x = spec.background_rms * gain * pink_noise(n, rng)

    labels: List[EventLabel] = []
    slot = 0
    while slot < n_slots:
        label = CLASSES[rng.choice(len(CLASSES), p=pick)]
        params = spec.event_params.get(label)
        k = min(_slot_count(label, params, rng), n_slots - slot)
        t0, t1 = slot * spec.slot_dur, (slot + k) * spec.slot_dur
        i0, i1 = slot * slot_n, (slot + k) * slot_n
        seg = t[i0:i1]
        if label != BCKG:
            amp = rng.uniform(*params.amplitude)
        if label == SPSW:
            width = rng.uniform(*params.duration)
            center = t0 + spec.slot_dur * rng.uniform(0.3, 0.7)
            x[i0:i1] += amp * biphasic(seg, center, width)
            labels.append(EventLabel(name, center - width / 2, center + width / 2, SPSW))
        elif label in (PLED, GPED):
            x[i0:i1] += _train(seg, t0, t1, params, amp, spec.jitter, rng)
            labels.append(EventLabel(name, t0, t1, label))
        elif label == EYEM:
            x[i0:i1] += _eye_movement(seg, t0, t1, params, amp, rng)
            labels.append(EventLabel(name, t0, t1, label))
        elif label == ARTF:
            x[i0:i1] += _artifact(i1 - i0, amp, rng, fs)
            labels.append(EventLabel(name, t0, t1, label))
        slot += k
    return x, labels


def generate(spec: SynthSpec = SynthSpec(), record_id: str | None = None):
    """Generate one record.  Returns (SignalRecord, list of EventLabel).

    Channels are named ``CH00``, ``CH01``, ...; each draws from its own
    sub-seed, so the output is fixed by ``spec.seed``.
    """
    spec.validate()
    seeds = np.random.SeedSequence(spec.seed).spawn(spec.num_channels)
    channels, labels = [], []
    for i, ss in enumerate(seeds):
        name = f"CH{i:02d}"
        x, lab = _generate_channel(name, spec, np.random.default_rng(ss))
        channels.append(Channel(name, spec.sample_rate, x))
        labels.extend(lab)
    rid = record_id if record_id is not None else f"synth{spec.seed}"
    return SignalRecord(rid, channels), labels


def generate_corpus(spec: SynthSpec, num_records: int):
    """``num_records`` records from sub-seeds derived from ``spec.seed``."""
    out = []
    for i, ss in enumerate(np.random.SeedSequence(spec.seed).spawn(num_records)):
        sub = replace(spec, seed=int(ss.generate_state(1)[0]))
        out.append(generate(sub, record_id=f"synth{spec.seed}_{i:03d}"))
    return out


def benchmark_spec(seed: int, duration: float = 300.0, num_channels: int = 4) -> SynthSpec:
    return SynthSpec(seed=seed, duration=duration, num_channels=num_channels,
                     class_priors=dict(BENCHMARK_PRIORS), event_params=dict(BENCHMARK_EVENTS),
                     background_drift=0.15)


def spec_from_dict(cfg: dict) -> SynthSpec:
    """Build a :class:`SynthSpec` from a JSON-style dict (unknown keys rejected)."""
    cfg = dict(cfg)
    events = dict(DEFAULT_EVENTS)
    for label, params in cfg.pop("event_params", {}).items():
        events[label] = EventParams(**{k: tuple(v) for k, v in params.items()})
    known = set(SynthSpec.__dataclass_fields__)
    bad = set(cfg) - known
    if bad:
        raise ConfigError(f"unknown synth keys: {sorted(bad)}")
    return SynthSpec(event_params=events, **cfg).validate()


def load_spec(path) -> SynthSpec:
    with open(os.fspath(path)) as fh:
        return spec_from_dict(json.load(fh))
