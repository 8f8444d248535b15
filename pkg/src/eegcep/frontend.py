"""Linear-frequency cepstral front end.

A channel is cut into overlapping windows (0.2 s every 0.1 s by default),
each window is zero-padded into a real FFT, the magnitude spectrum is pooled
by a bank of overlapping triangular filters spaced linearly in Hz, and the
DCT of the log filter outputs gives the cepstrum.  c0 is dropped; c1..c7 are
kept.

Every function here accepts a single frame or a stack of frames along the
leading axes, so a whole channel is processed in one vectorised call.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft

from .errors import ConfigError, SignalError

NUM_CEPSTRA = 7
LOG_FLOOR = 1e-10
WINDOW_FUNCTIONS = ("rectangular", "hamming")


@dataclass(frozen=True)
class FrameSpec:
    window_dur: float = 0.2
    step_dur: float = 0.1
    sample_rate: float = 250.0
    window_function: str = "hamming"

    def __post_init__(self):
        if not 0 < self.step_dur <= self.window_dur:
            raise ConfigError("need 0 < step_dur <= window_dur")
        if self.window_function not in WINDOW_FUNCTIONS:
            raise ConfigError(f"window_function must be one of {WINDOW_FUNCTIONS}")
        if self.window_samples < 2:
            raise ConfigError("window must span at least 2 samples")
        if self.step_samples < 1:
            raise ConfigError("step must span at least 1 sample")

    @property
    def window_samples(self) -> int:
        return int(round(self.window_dur * self.sample_rate))

    @property
    def step_samples(self) -> int:
        return int(round(self.step_dur * self.sample_rate))

    def num_frames(self, n_samples: int) -> int:
        if n_samples < self.window_samples:
            return 0
        return (n_samples - self.window_samples) // self.step_samples + 1

    def window(self) -> np.ndarray:
        n = self.window_samples
        if self.window_function == "hamming":
            return np.hamming(n)
        return np.ones(n)


@dataclass(frozen=True)
class FilterBankSpec:
    num_filters: int = 20
    low_freq: float = 0.0
    high_freq: float = 125.0
    fft_size: int = 256
    sample_rate: float = 250.0

    def __post_init__(self):
        if self.num_filters < 1:
            raise ConfigError("num_filters must be positive")
        if self.fft_size < 2 or self.fft_size & (self.fft_size - 1):
            raise ConfigError("fft_size must be a power of two")
        if not 0 <= self.low_freq < self.high_freq <= self.sample_rate / 2:
            raise ConfigError("need 0 <= low_freq < high_freq <= sample_rate/2")

    @property
    def num_bins(self) -> int:
        return self.fft_size // 2 + 1

    def edges(self) -> np.ndarray:
        """Corner frequencies; filter k spans edges[k]..edges[k+2], peaking at edges[k+1]."""
        return np.linspace(self.low_freq, self.high_freq, self.num_filters + 2)

    def centers(self) -> np.ndarray:
        return self.edges()[1:-1]

    def bin_freqs(self) -> np.ndarray:
        return np.arange(self.num_bins) * self.sample_rate / self.fft_size

    def weights(self) -> np.ndarray:
        return _filter_weights(self)


@lru_cache(maxsize=32)
def _filter_weights(spec: FilterBankSpec) -> np.ndarray:
    edges = spec.edges()
    freqs = spec.bin_freqs()
    left, center, right = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs - left) / (center - left)
    falling = (right - freqs) / (right - center)
    w = np.clip(np.minimum(rising, falling), 0.0, None)
    sums = w.sum(axis=1, keepdims=True)
    if np.any(sums <= 0):
        raise ConfigError("a filter covers no FFT bin; increase fft_size or widen the band")
    w = w / sums
    w.setflags(write=False)
    return w


@dataclass
class SpectralFrame:
    """Magnitude spectrum and filter-bank outputs of one frame (or a stack)."""

    magnitudes: np.ndarray
    filter_outputs: np.ndarray


@dataclass
class CepstralFrame:
    cepstra: np.ndarray

    def __post_init__(self):
        if self.cepstra.shape[-1] != NUM_CEPSTRA:
            raise ValueError(f"expected {NUM_CEPSTRA} cepstra, got {self.cepstra.shape[-1]}")


def frame_signal(samples, spec: FrameSpec) -> np.ndarray:
    """Cut ``samples`` into windowed frames, shape ``(num_frames, window_samples)``.

    Frame ``i`` covers ``samples[i*step : i*step + window]``; trailing
    samples that do not fill a whole window are dropped.
    """
    x = np.asarray(samples, dtype=np.float64)
    n_win = spec.window_samples
    if len(x) < n_win:
        raise SignalError("signal too short")
    frames = np.lib.stride_tricks.sliding_window_view(x, n_win)[::spec.step_samples]
    return frames * spec.window()


def spectrum(frame, spec: FilterBankSpec) -> SpectralFrame:
    frame = np.asarray(frame, dtype=np.float64)
    if frame.shape[-1] > spec.fft_size:
        raise ValueError(f"frame length {frame.shape[-1]} exceeds fft_size {spec.fft_size}")
    mags = np.abs(np.fft.rfft(frame, n=spec.fft_size, axis=-1))
    return SpectralFrame(mags, mags @ spec.weights().T)


def cepstrum(spectral: SpectralFrame, num_filters: int | None = None) -> CepstralFrame:
    """Orthonormal DCT-II of the floored log filter outputs, keeping c1..c7."""
    fb = spectral.filter_outputs
    if num_filters is not None and fb.shape[-1] != num_filters:
        raise ValueError(f"expected {num_filters} filter outputs, got {fb.shape[-1]}")
    if fb.shape[-1] <= NUM_CEPSTRA:
        raise ValueError(f"need more than {NUM_CEPSTRA} filters to keep c1..c{NUM_CEPSTRA}")
    logfb = np.log(np.maximum(fb, LOG_FLOOR))
    c = scipy.fft.dct(logfb, type=2, norm="ortho", axis=-1)
    return CepstralFrame(c[..., 1:NUM_CEPSTRA + 1])


@dataclass
class ChannelAnalysis:
    """Everything the energy and dynamics stages need from one channel."""

    frames: np.ndarray
    spectral: SpectralFrame
    cepstral: CepstralFrame
    frame_period: float

    def __len__(self):
        return self.frames.shape[0]


def analyze(samples, frame_spec: FrameSpec = FrameSpec(),
            fb_spec: FilterBankSpec = FilterBankSpec()) -> ChannelAnalysis:
    if frame_spec.sample_rate != fb_spec.sample_rate:
        raise ConfigError("frame and filter-bank sample rates differ")
    frames = frame_signal(samples, frame_spec)
    spec = spectrum(frames, fb_spec)
    return ChannelAnalysis(frames, spec, cepstrum(spec), frame_spec.step_dur)
