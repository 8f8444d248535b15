"""Signal ingestion: CSV and (continuous) EDF readers, plus rate conversion.

Every reader returns a :class:`SignalRecord`; downstream stages only ever see
float64 sample arrays at a known rate.
"""

from __future__ import annotations

import csv
import os
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import List, Sequence

import numpy as np
from scipy import signal as sps

from .errors import ConfigError, ParseError, ScalingError, SignalError

EDF_VERSION = b"0       "
EDF_ANNOTATION_LABEL = "EDF Annotations"


@dataclass
class Channel:
    name: str
    sample_rate: float
    samples: np.ndarray

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.sample_rate <= 0:
            raise SignalError(f"channel {self.name!r}: sample_rate must be positive")

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass
class SignalRecord:
    record_id: str
    channels: List[Channel] = field(default_factory=list)

    def __post_init__(self):
        names = [ch.name for ch in self.channels]
        dup = {n for n in names if names.count(n) > 1}
        if dup:
            raise SignalError(f"duplicate channel names: {sorted(dup)}")

    def channel(self, name: str) -> Channel:
        for ch in self.channels:
            if ch.name == name:
                return ch
        raise KeyError(name)

    @property
    def channel_names(self) -> List[str]:
        return [ch.name for ch in self.channels]


@dataclass(frozen=True)
class ResampleSpec:
    target_rate: float = 250.0
    filter_taps: int = 127
    kaiser_beta: float = 8.6

    def __post_init__(self):
        if self.target_rate <= 0:
            raise ConfigError("target_rate must be positive")
        if self.filter_taps < 3 or self.filter_taps % 2 == 0:
            raise ConfigError("filter_taps must be odd and >= 3")
        if self.kaiser_beta < 0:
            raise ConfigError("kaiser_beta must be non-negative")


def _check_nonempty(record: SignalRecord) -> SignalRecord:
    if not record.channels or any(len(ch.samples) == 0 for ch in record.channels):
        raise SignalError("empty signal")
    return record


# --------------------------------------------------------------------------
# CSV
# --------------------------------------------------------------------------

def read_csv_signal(path) -> SignalRecord:
    """Read a CSV signal file.

    Layout::

        # sample_rate=250
        time,FP1,FP2
        0.000,1.5,-2.0
        ...

    Any number of ``#`` comment lines may precede the header; ``key=value``
    pairs found in them are read as metadata.  Only ``sample_rate`` is
    required.  The ``time`` column is ignored.
    """
    path = os.fspath(path)
    meta = {}
    header = None
    columns: List[List[float]] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if header is None:
                first = row[0].strip()
                if first.startswith("#"):
                    text = ",".join(row).lstrip("#")
                    for tok in text.replace(",", " ").split():
                        if "=" in tok:
                            key, val = tok.split("=", 1)
                            meta[key.strip()] = val.strip()
                    continue
                names = [c.strip() for c in row]
                if len(names) < 2 or names[0] != "time" or any(not n for n in names[1:]):
                    raise ParseError(f"{path}:{lineno}: malformed header, expected 'time,<ch1>,...'")
                header = names
                columns = [[] for _ in names[1:]]
                continue
            if len(row) != len(header):
                raise ParseError(
                    f"{path}:{lineno}: expected {len(header)} cells, found {len(row)}")
            for col, cell in zip(columns, row[1:]):
                try:
                    col.append(float(cell))
                except ValueError:
                    raise ParseError(f"{path}:{lineno}: non-numeric cell {cell!r}") from None

    if header is None:
        raise ParseError(f"{path}: no header line found")
    if "sample_rate" not in meta:
        raise ConfigError(f"{path}: missing '# sample_rate=<Hz>' line")
    try:
        rate = float(meta["sample_rate"])
    except ValueError:
        raise ConfigError(f"{path}: bad sample_rate {meta['sample_rate']!r}") from None
    if rate <= 0:
        raise ConfigError(f"{path}: sample_rate must be positive")
    if not columns or not columns[0]:
        raise SignalError("empty signal")

    record_id = meta.get("record_id", os.path.splitext(os.path.basename(path))[0])
    channels = [Channel(name, rate, np.array(col, dtype=np.float64))
                for name, col in zip(header[1:], columns)]
    return SignalRecord(record_id, channels)


def write_csv_signal(record: SignalRecord, path) -> None:
    """Write ``record`` in the CSV layout accepted by :func:`read_csv_signal`.

    All channels must share one sample rate and length.  Values are written
    with 9 significant digits, which round-trips binary32 exactly.
    """
    _check_nonempty(record)
    rates = {ch.sample_rate for ch in record.channels}
    lengths = {len(ch.samples) for ch in record.channels}
    if len(rates) != 1 or len(lengths) != 1:
        raise SignalError("CSV output needs channels with a common rate and length")
    rate = rates.pop()
    n = lengths.pop()
    data = np.column_stack(
        [np.arange(n) / rate] + [ch.samples.astype(np.float32) for ch in record.channels])
    with open(os.fspath(path), "w", newline="") as fh:
        fh.write(f"# sample_rate={rate!r} record_id={record.record_id}\n")
        fh.write(",".join(["time"] + record.channel_names) + "\n")
        np.savetxt(fh, data, fmt=["%.6f"] + ["%.9g"] * len(record.channels), delimiter=",")


# --------------------------------------------------------------------------
# EDF
# --------------------------------------------------------------------------

def _ascii_fields(raw: bytes, width: int, count: int) -> List[str]:
    return [raw[i * width:(i + 1) * width].decode("latin-1").strip() for i in range(count)]


def _numbers(values: Sequence[str], what: str, conv=float):
    try:
        return np.array([conv(v) for v in values], dtype=np.float64)
    except ValueError:
        raise ParseError(f"EDF header: non-numeric {what} field in {list(values)}") from None


def read_edf_signal(path) -> SignalRecord:
    """Read a continuous EDF file into physical units.

    Only plain EDF is supported.  Signals labelled ``EDF Annotations`` are
    skipped with a warning.  Physical values are

        (d - dmin) * (pmax - pmin) / (dmax - dmin) + pmin

    per signal, and each signal's rate is ``samples_per_record / record_duration``.
    """
    path = os.fspath(path)
    with open(path, "rb") as fh:
        blob = fh.read()

    if len(blob) < 256:
        raise ParseError(f"{path}: truncated header ({len(blob)} of 256 bytes)")
    if blob[:8] != EDF_VERSION:
        raise ParseError(f"{path}: not an EDF file (version field {blob[:8]!r})")

    fixed = blob[:256].decode("latin-1")
    try:
        header_bytes = int(fixed[184:192])
        n_records = int(fixed[236:244])
        record_dur = float(fixed[244:252])
        ns = int(fixed[252:256])
    except ValueError:
        raise ParseError(f"{path}: unreadable fixed header fields") from None
    if ns < 1:
        raise ParseError(f"{path}: header declares {ns} signals")
    if header_bytes != 256 * (ns + 1):
        raise ParseError(f"{path}: header size {header_bytes} inconsistent with {ns} signals")
    if len(blob) < header_bytes:
        raise ParseError(f"{path}: truncated header ({len(blob)} of {header_bytes} bytes)")
    if record_dur <= 0:
        raise ParseError(f"{path}: record duration must be positive")

    sig = blob[256:header_bytes]
    offsets = {}
    pos = 0
    for name, width in (("label", 16), ("transducer", 80), ("units", 8),
                        ("pmin", 8), ("pmax", 8), ("dmin", 8), ("dmax", 8),
                        ("prefilter", 80), ("spr", 8), ("reserved", 32)):
        offsets[name] = _ascii_fields(sig[pos:pos + width * ns], width, ns)
        pos += width * ns

    labels = offsets["label"]
    pmin = _numbers(offsets["pmin"], "physical_min")
    pmax = _numbers(offsets["pmax"], "physical_max")
    dmin = _numbers(offsets["dmin"], "digital_min", int)
    dmax = _numbers(offsets["dmax"], "digital_max", int)
    spr = _numbers(offsets["spr"], "samples_per_record", int).astype(np.int64)
    if np.any(spr < 0):
        raise ParseError(f"{path}: negative samples_per_record")

    record_len = int(spr.sum())
    payload = len(blob) - header_bytes
    if n_records < 0:
        # -1 means "unknown" while recording; infer from file length
        n_records = payload // (2 * record_len) if record_len else 0
    expected = n_records * record_len * 2
    if payload < expected:
        raise ParseError(f"{path}: truncated data, expected {expected} bytes, found {payload}")

    data = np.frombuffer(blob, dtype="<i2", count=n_records * record_len, offset=header_bytes)
    data = data.reshape(n_records, record_len)

    channels = []
    starts = np.concatenate([[0], np.cumsum(spr)])
    for i, label in enumerate(labels):
        if label == EDF_ANNOTATION_LABEL:
            warnings.warn(f"{path}: skipping annotation signal {i}", stacklevel=2)
            continue
        if dmax[i] == dmin[i]:
            raise ScalingError(f"{path}: signal {label!r} has digital_min == digital_max")
        digital = data[:, starts[i]:starts[i + 1]].reshape(-1).astype(np.float64)
        gain = (pmax[i] - pmin[i]) / (dmax[i] - dmin[i])
        physical = (digital - dmin[i]) * gain + pmin[i]
        channels.append(Channel(label, spr[i] / record_dur, physical))

    record_id = fixed[88:168].strip() or os.path.splitext(os.path.basename(path))[0]
    return _check_nonempty(SignalRecord(record_id, channels))


def read_signal(path) -> SignalRecord:
    """Dispatch on file extension (``.edf`` or CSV)."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such file: {path}")
    if os.fspath(path).lower().endswith(".edf"):
        return read_edf_signal(path)
    return read_csv_signal(path)


# --------------------------------------------------------------------------
# Resampling
# --------------------------------------------------------------------------

def _ratio(source: float, target: float) -> Fraction:
    return (Fraction(target).limit_denominator(10_000)
            / Fraction(source).limit_denominator(10_000)).limit_denominator(10_000)


def design_lowpass(up: int, down: int, spec: ResampleSpec) -> np.ndarray:
    """Kaiser-windowed sinc anti-aliasing filter for an ``up/down`` converter.

    ``spec.filter_taps`` counts taps per unit of the slower of the two rates,
    so the kernel spans the same time interval whatever the ratio.  The
    returned filter runs at the intermediate (upsampled) rate.
    """
    width = max(up, down)
    ntaps = spec.filter_taps * width
    if ntaps % 2 == 0:
        ntaps += 1
    return sps.firwin(ntaps, 1.0 / width, window=("kaiser", spec.kaiser_beta))


def resample(channel: Channel, spec: ResampleSpec = ResampleSpec()) -> Channel:
    """Rational polyphase resampling with reflected edges.

    Output length is ``round(n * target / source)``.  A channel already at
    the target rate is returned unchanged (copied).
    """
    n = len(channel.samples)
    if n == 0:
        raise SignalError("empty signal")
    if channel.sample_rate == spec.target_rate:
        return Channel(channel.name, channel.sample_rate, channel.samples.copy())

    ratio = _ratio(channel.sample_rate, spec.target_rate)
    up, down = ratio.numerator, ratio.denominator
    h = design_lowpass(up, down, spec)
    y = sps.resample_poly(channel.samples, up, down, window=h, padtype="reflect")
    n_out = int(round(n * spec.target_rate / channel.sample_rate))
    if len(y) >= n_out:
        y = y[:n_out]
    else:
        y = np.concatenate([y, np.full(n_out - len(y), y[-1])])
    return Channel(channel.name, float(spec.target_rate), y)


def resample_record(record: SignalRecord, spec: ResampleSpec = ResampleSpec()) -> SignalRecord:
    return SignalRecord(record.record_id, [resample(ch, spec) for ch in record.channels])
