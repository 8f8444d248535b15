"""Regression deltas, feature-system assembly and the FEATv1 file format."""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from typing import Dict

import numpy as np

from .energy import EnergyTerms
from .errors import ConfigError, FormatError
from .frontend import NUM_CEPSTRA, CepstralFrame

FEAT_MAGIC = b"FEATv1\x00\x00"
_HEADER = struct.Struct("<IIId")
_U32 = struct.Struct("<I")

DELTA_NONE = "none"
DELTA_FIRST = "first"
DELTA_BOTH = "first_and_second"


@dataclass(frozen=True)
class DeltaSpec:
    n_first: int = 9
    n_second: int = 3

    def __post_init__(self):
        if self.n_first < 1 or self.n_second < 1:
            raise ConfigError("delta orders must be >= 1")


@dataclass(frozen=True)
class FeatureSystemConfig:
    system_id: int
    include_e_t: bool = False
    include_e_f: bool = False
    include_e_d: bool = False
    deltas: str = DELTA_NONE
    e_d_second_delta: bool = True

    @property
    def static_names(self):
        names = [f"c{i}" for i in range(1, NUM_CEPSTRA + 1)]
        if self.include_e_f:
            names.append("e_f")
        if self.include_e_t:
            names.append("e_t")
        if self.include_e_d:
            names.append("e_d")
        return names

    @property
    def feature_names(self):
        static = self.static_names
        names = list(static)
        if self.deltas in (DELTA_FIRST, DELTA_BOTH):
            names += [f"d_{s}" for s in static]
        if self.deltas == DELTA_BOTH:
            names += [f"dd_{s}" for s in static if s != "e_d" or self.e_d_second_delta]
        return names

    @property
    def dim(self) -> int:
        return len(self.feature_names)

    @property
    def description(self) -> str:
        parts = ["Cepstral"]
        parts += [lbl for flag, lbl in ((self.include_e_f, "E_f"), (self.include_e_t, "E_t"),
                                        (self.include_e_d, "E_d")) if flag]
        if self.deltas != DELTA_NONE:
            parts.append("D")
        if self.deltas == DELTA_BOTH:
            parts.append("DD")
        text = " + ".join(parts)
        if self.deltas == DELTA_BOTH and self.include_e_d and not self.e_d_second_delta:
            text += " (no DD for E_d)"
        return text


def _table():
    energy_sets = [  # (e_t, e_f, e_d) for the five static variants
        (False, False, False),
        (False, True, False),
        (True, False, False),
        (False, False, True),
        (False, True, True),
    ]
    systems = {}
    sid = 1
    for deltas in (DELTA_NONE, DELTA_FIRST, DELTA_BOTH):
        for e_t, e_f, e_d in energy_sets:
            systems[sid] = FeatureSystemConfig(sid, e_t, e_f, e_d, deltas)
            sid += 1
    systems[16] = FeatureSystemConfig(16, False, True, True, DELTA_BOTH, e_d_second_delta=False)
    return systems


SYSTEMS: Dict[int, FeatureSystemConfig] = _table()
SYSTEM_DIMS: Dict[int, int] = {sid: cfg.dim for sid, cfg in SYSTEMS.items()}


def get_system(system_id: int) -> FeatureSystemConfig:
    try:
        return SYSTEMS[int(system_id)]
    except (KeyError, ValueError):
        raise ConfigError(f"unknown feature system {system_id!r}; valid ids are 1..16") from None


@dataclass
class FeatureSequence:
    frames: np.ndarray
    frame_period: float
    channel_name: str
    system_id: int

    def __post_init__(self):
        self.frames = np.asarray(self.frames)
        if self.frames.ndim != 2:
            raise ValueError("frames must be a 2-D (frames x dim) array")

    @property
    def dim(self) -> int:
        return self.frames.shape[1]

    def __len__(self):
        return self.frames.shape[0]


def delta(sequence, n: int) -> np.ndarray:
    """Regression delta along axis 0.

    d[t] = sum_{k=1..n} k * (c[t+k] - c[t-k]) / (2 * sum_{k=1..n} k**2)

    Frames beyond either end are replaced by the nearest edge frame, so the
    output has the input's length.
    """
    c = np.asarray(sequence, dtype=np.float64)
    if c.shape[0] == 0:
        raise ValueError("empty sequence")
    if n < 1:
        raise ValueError("regression order must be >= 1")
    T = c.shape[0]
    padded = np.concatenate([np.repeat(c[:1], n, axis=0), c, np.repeat(c[-1:], n, axis=0)])
    num = np.zeros_like(c)
    for k in range(1, n + 1):
        num += k * (padded[n + k:n + k + T] - padded[n - k:n - k + T])
    return num / (2.0 * sum(k * k for k in range(1, n + 1)))


def assemble(cepstra, energies: EnergyTerms, config: FeatureSystemConfig,
             delta_spec: DeltaSpec = DeltaSpec(), frame_period: float = 0.1,
             channel_name: str = "") -> FeatureSequence:
    """Build the feature vectors of one feature system.

    Static block c1..c7 followed by whichever of E_f, E_t, E_d the system
    uses (always in that order), then the deltas of the static block, then
    the delta-deltas.  System 16 drops only the delta-delta of E_d.
    """
    ceps = cepstra.cepstra if isinstance(cepstra, CepstralFrame) else np.asarray(cepstra)
    ceps = np.asarray(ceps, dtype=np.float64)
    if ceps.ndim != 2 or ceps.shape[1] != NUM_CEPSTRA:
        raise ValueError(f"cepstra must have shape (frames, {NUM_CEPSTRA})")
    T = ceps.shape[0]
    if T < 1:
        raise ValueError("no frames to assemble")
    if not (len(energies.e_t) == len(energies.e_f) == len(energies.e_d) == T):
        raise ValueError(f"length mismatch: {T} cepstral frames vs "
                         f"{len(energies.e_f)} energy frames")

    cols = [ceps]
    for flag, values in ((config.include_e_f, energies.e_f),
                         (config.include_e_t, energies.e_t),
                         (config.include_e_d, energies.e_d)):
        if flag:
            cols.append(np.asarray(values, dtype=np.float64)[:, None])
    static = np.hstack(cols)

    blocks = [static]
    if config.deltas in (DELTA_FIRST, DELTA_BOTH):
        d1 = delta(static, delta_spec.n_first)
        blocks.append(d1)
        if config.deltas == DELTA_BOTH:
            d2 = delta(d1, delta_spec.n_second)
            if config.include_e_d and not config.e_d_second_delta:
                d2 = d2[:, :-1]  # E_d is the last static column
            blocks.append(d2)
    feats = np.hstack(blocks)
    assert feats.shape[1] == config.dim
    return FeatureSequence(feats, frame_period, channel_name, config.system_id)


# --------------------------------------------------------------------------
# FEATv1
# --------------------------------------------------------------------------

def write_features(seq: FeatureSequence, path) -> None:
    """Write FEATv1: magic, u32 dim/frame_count/system_id, f64 frame period,
    u32-length-prefixed UTF-8 channel name, then float32 frames row-major.
    All fields little-endian."""
    if seq.dim <= 0:
        raise FormatError("feature dimension must be positive")
    name = seq.channel_name.encode("utf-8")
    data = np.ascontiguousarray(seq.frames, dtype="<f4")
    with open(os.fspath(path), "wb") as fh:
        fh.write(FEAT_MAGIC)
        fh.write(_HEADER.pack(seq.dim, len(seq), seq.system_id, seq.frame_period))
        fh.write(_U32.pack(len(name)))
        fh.write(name)
        fh.write(data.tobytes())


def read_features(path) -> FeatureSequence:
    with open(os.fspath(path), "rb") as fh:
        blob = fh.read()
    if blob[:8] != FEAT_MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:8]!r}, expected {FEAT_MAGIC!r}")
    pos = 8
    need = pos + _HEADER.size + _U32.size
    if len(blob) < need:
        raise FormatError(f"{path}: truncated header, expected at least {need} bytes, got {len(blob)}")
    dim, count, system_id, period = _HEADER.unpack_from(blob, pos)
    pos += _HEADER.size
    (name_len,) = _U32.unpack_from(blob, pos)
    pos += _U32.size
    if dim == 0:
        raise FormatError(f"{path}: zero feature dimension")
    expected = pos + name_len + 4 * dim * count
    if len(blob) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, got {len(blob)}")
    name = blob[pos:pos + name_len].decode("utf-8")
    pos += name_len
    frames = np.frombuffer(blob, dtype="<f4", count=dim * count, offset=pos).reshape(count, dim)
    return FeatureSequence(frames.astype(np.float32), period, name, system_id)
