"""Cepstral and differential-energy features with GMM-HMM classification of
1-second EEG epochs into six event classes."""

from .dynamics import SYSTEMS, FeatureSequence, assemble, get_system
from .energy import compute_energies, diff_energy, freq_energy, time_energy
from .frontend import FilterBankSpec, FrameSpec, analyze
from .ingest import Channel, SignalRecord, read_signal, resample
from .labels import CLASSES
from .pipeline import channel_features, record_features

__version__ = "0.1.0"

__all__ = ["SYSTEMS", "FeatureSequence", "assemble", "get_system", "compute_energies",
           "diff_energy", "freq_energy", "time_energy", "FilterBankSpec", "FrameSpec", "analyze",
           "Channel", "SignalRecord", "read_signal", "resample", "CLASSES", "channel_features",
           "record_features"]
