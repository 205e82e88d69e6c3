"""Exception hierarchy shared across the toolkit.

Data-facing errors (bad files, bad layouts, mismatched rasters) derive from
``DataError`` so the CLI can map them to a dedicated exit code; everything
else derives from ``CloudSegError``.
"""


class CloudSegError(Exception):
    """Base class for all toolkit errors."""


class DataError(CloudSegError):
    """A problem with input data or its on-disk layout."""


class MissingBand(DataError):
    """A required spectral band file is absent."""


class MissingGT(DataError):
    """A required ground-truth mask is absent."""


class DimensionMismatch(DataError):
    """Co-registered rasters disagree on height/width."""


class DecodeError(DataError):
    """A raster file exists but cannot be decoded."""


class LayoutError(DataError):
    """The dataset directory tree does not follow the expected layout."""


class ShapeMismatch(CloudSegError):
    """Array shapes are inconsistent with the operation's contract."""


class NonBinaryInput(CloudSegError):
    """A mask expected to be binary contains other values."""


class DomainError(CloudSegError):
    """A numeric input lies outside its permitted domain."""


class InvalidMethod(CloudSegError):
    """The requested resampling method is not allowed for this input."""


class MissingPatch(CloudSegError):
    """A grid cell has no patch to stitch."""


class DuplicatePatch(CloudSegError):
    """Two patches claim the same grid cell."""


class ConfigError(CloudSegError):
    """A configuration violates its invariants."""


class DepthError(ConfigError):
    """A feature-map depth breaks the divisibility rules of a block."""


class EmptyBatch(CloudSegError):
    """A reduction over zero samples was requested."""


class EmptyDataset(DataError):
    """Training was requested on a dataset with no entries."""


class NonFiniteLoss(CloudSegError):
    """The training loss became NaN or infinite."""


class NonFiniteGradient(CloudSegError):
    """A parameter gradient became NaN or infinite."""


class CheckpointMismatch(CloudSegError):
    """A checkpoint's embedded network config conflicts with the requested one."""
