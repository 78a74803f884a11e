"""Exception types shared across the package.

Every error raised by oodkit's own checks derives from OodkitError so CLI
entry points can map library failures to a single exit code.
"""


class OodkitError(Exception):
    """Base class for all oodkit errors."""


class BundleError(OodkitError):
    """A bundle directory or embedding file is malformed."""


class BadMagicError(BundleError):
    """Embedding file does not start with the expected magic bytes."""


class UnsupportedVersionError(BundleError):
    """Embedding file declares a format version this reader does not know."""


class UnsupportedDtypeError(BundleError):
    """Embedding file declares a dtype code outside the supported set."""


class TruncatedPayloadError(BundleError):
    """Embedding file is shorter than its header says it should be."""


class NonFiniteDataError(BundleError):
    """Matrix payload contains NaN or Inf values."""


class ZeroRowError(OodkitError):
    """A row with zero norm cannot be L2-normalized."""


class ManifestMismatchError(BundleError):
    """manifest.json disagrees with the matrix actually stored on disk."""


class LabelRangeError(BundleError):
    """labels.json holds values outside the valid class index range."""


class DimensionMismatchError(OodkitError):
    """Two matrices that must share a dimension do not."""
