"""Exception hierarchy for the engine.

Every failure mode the library reports deliberately gets its own class so
callers (and the CLI) can tell apart e.g. a truncated weight file from a
shape mismatch without parsing messages.
"""


class DevoError(Exception):
    """Base class for all engine errors."""


class WavFormatError(DevoError):
    """File is not a well-formed RIFF/WAVE container."""


class UnsupportedWavError(DevoError):
    """WAV is valid but uses an encoding or channel count we do not read."""


class NonFiniteSampleError(DevoError):
    """Audio contains NaN or infinite samples."""


class ShortInputError(DevoError):
    """Signal is too short for the requested analysis."""


class LoudnessUnavailableError(DevoError):
    """Integrated loudness is undefined (all measurement blocks gated out)."""


class ShapeMismatchError(DevoError):
    """Tensor or feature-map shape does not match the layer spec."""


class SampleRateError(DevoError):
    """Audio is not at the rate the model runs at."""


class StreamContractError(DevoError):
    """Streaming API misuse: wrong block size, non-causal spec, etc."""


class BundleFormatError(DevoError):
    """Base class for weight-bundle file errors."""


class BadMagicError(BundleFormatError):
    """File does not start with the DEVO magic."""


class UnsupportedVersionError(BundleFormatError):
    """Bundle format version is newer than this reader."""


class TruncatedBundleError(BundleFormatError):
    """Bundle payload ends before the declared tensor data."""


class DuplicateTensorError(BundleFormatError):
    """Two tensors in a bundle share a name."""


class NonFiniteTensorError(BundleFormatError):
    """A bundle tensor contains NaN or infinite values."""


class ConfigError(DevoError):
    """Model configuration violates a structural invariant."""


class MetricInputError(DevoError):
    """Metric inputs are unusable (length mismatch, too short, ...)."""


class MixError(DevoError):
    """Mixture generation cannot proceed (silent stems, bad manifest line, ...)."""
