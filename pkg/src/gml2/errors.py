"""Exception hierarchy shared across the package.

Exit codes used by the CLI: 1 usage, 2 data, 3 numerical.
"""


class Gml2Error(Exception):
    """Base class for all package errors."""

    exit_code = 2
    code = "error"


class DataError(Gml2Error):
    """Invalid or unusable input data (files, manifests, configs)."""

    exit_code = 2
    code = "data"


class UnreadableFileError(DataError):
    """File missing, unreadable, or not a well-formed RIFF/WAVE container."""

    code = "unreadable"


class UnsupportedEncodingError(DataError):
    """WAV is well-formed but uses an encoding outside PCM 16/24/32 or float32."""

    code = "unsupported-encoding"


class EmptyAudioError(DataError):
    """WAV decodes to zero samples."""

    code = "empty-audio"


class ChannelMismatchError(DataError):
    code = "channel-mismatch"


class SampleRateMismatchError(DataError):
    code = "sample-rate-mismatch"


class ManifestError(DataError):
    code = "manifest"


class CheckpointError(DataError):
    """Checkpoint unreadable, wrong version, or failed its CRC."""

    code = "checkpoint"


class CacheMismatchError(Gml2Error):
    """backward() called with a cache built from different inputs/parameters."""

    exit_code = 3
    code = "cache-mismatch"


class NumericalError(Gml2Error):
    """Non-finite values or failed numerical checks."""

    exit_code = 3
    code = "numerical"


class MetricError(DataError):
    """Metric undefined for the given inputs (zero variance, too few points)."""

    code = "metric"
