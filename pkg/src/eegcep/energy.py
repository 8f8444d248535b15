"""Per-frame energy terms.

``e_t``  log mean square of the windowed samples,
``e_f``  log sum of squared filter-bank outputs,
``e_d``  spread (max - min) of ``e_f`` over a centred run of M frames.

``e_d`` separates short transients from stationary activity: a lone spike
lifts ``e_f`` in one or two frames, so every window containing it has a large
spread, while steady noise of any level keeps the spread small.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .frontend import SpectralFrame

ENERGY_FLOOR = 1e-10


@dataclass(frozen=True)
class DiffEnergySpec:
    window_dur: float = 0.9
    step_dur: float = 0.1

    def __post_init__(self):
        if self.window_dur <= 0 or self.step_dur <= 0:
            raise ConfigError("window_dur and step_dur must be positive")

    @property
    def num_frames(self) -> int:
        """M: window length in frames, forced odd so the window is centred."""
        m = max(1, int(round(self.window_dur / self.step_dur)))
        return m if m % 2 else m + 1


@dataclass
class EnergyTerms:
    e_t: np.ndarray
    e_f: np.ndarray
    e_d: np.ndarray

    def __len__(self):
        return len(self.e_f)


def time_energy(frame, floor: float = ENERGY_FLOOR):
    """log(mean(x**2)) over the last axis, floored before the log."""
    x = np.asarray(frame, dtype=np.float64)
    if x.shape[-1] < 1:
        raise ValueError("empty frame")
    return np.log(np.maximum(np.mean(x * x, axis=-1), floor))


def freq_energy(spectral: SpectralFrame, floor: float = ENERGY_FLOOR):
    fb = np.asarray(spectral.filter_outputs, dtype=np.float64)
    if fb.shape[-1] < 1:
        raise ValueError("no filter outputs")
    return np.log(np.maximum(np.sum(fb * fb, axis=-1), floor))


def diff_energy(e_f, spec: DiffEnergySpec | int = DiffEnergySpec()) -> np.ndarray:
    """Centred sliding max minus min of ``e_f``.

    ``spec`` is a :class:`DiffEnergySpec` or an odd frame count M.  Near the
    ends the window shrinks to the frames that exist.
    """
    e_f = np.asarray(e_f, dtype=np.float64)
    if e_f.ndim != 1 or len(e_f) == 0:
        raise ValueError("e_f must be a non-empty 1-D sequence")
    m = spec if isinstance(spec, (int, np.integer)) else spec.num_frames
    if m < 1 or m % 2 == 0:
        raise ConfigError(f"window length must be odd and >= 1, got {m}")
    half = m // 2
    if half == 0:
        return np.zeros_like(e_f)
    # edge replication equals shrinking the window: the repeated value is
    # already inside the clamped window, so max/min are unchanged
    padded = np.pad(e_f, half, mode="edge")
    win = np.lib.stride_tricks.sliding_window_view(padded, m)
    return win.max(axis=1) - win.min(axis=1)


def compute_energies(frames, spectral: SpectralFrame,
                     spec: DiffEnergySpec = DiffEnergySpec(),
                     floor: float = ENERGY_FLOOR) -> EnergyTerms:
    e_f = freq_energy(spectral, floor)
    return EnergyTerms(time_energy(frames, floor), e_f, diff_energy(e_f, spec))
