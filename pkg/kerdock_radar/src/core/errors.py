"""
Exception hierarchy for the Kerdock radar toolkit
"""


class KerdockRadarError(ValueError):
    """Base class for every error raised by the toolkit"""


class WaveformError(KerdockRadarError):
    """Invalid sequence length, waveform count or waveform family"""


class DimensionError(KerdockRadarError):
    """Vector or grid dimensions do not match the operator"""


class MemoryCapError(KerdockRadarError):
    """A dense construction would exceed the configured entry cap"""


class ConvergenceError(KerdockRadarError):
    """An iterative method did not reach its tolerance"""


class MeasurementError(KerdockRadarError):
    """A measurement cannot be formed from the given signal"""


class HypothesisError(KerdockRadarError):
    """A configuration violates the hypotheses of the bound being checked"""


class ConfigError(KerdockRadarError):
    """Configuration schema or validation failure"""
