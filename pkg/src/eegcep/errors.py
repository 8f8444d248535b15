"""Exception types raised across the pipeline."""


class EEGCepError(Exception):
    """Base class for all package errors."""


class ParseError(EEGCepError, ValueError):
    """Malformed input file (CSV, EDF, label list)."""


class ConfigError(EEGCepError, ValueError):
    """Missing or invalid configuration value."""


class ScalingError(EEGCepError, ValueError):
    """EDF signal whose digital range is degenerate."""


class FormatError(EEGCepError, ValueError):
    """Corrupt or unsupported binary/text artifact (FEATv1, model file)."""


class SignalError(EEGCepError, ValueError):
    """Signal unusable for processing (empty, too short)."""


class TrainingError(EEGCepError, RuntimeError):
    """Model estimation failed (insufficient data, non-finite likelihood)."""
