"""Exception types shared across the package."""


class VoxDepthError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatchError(VoxDepthError):
    """Two images that must share dimensions do not."""


class SpecMismatchError(VoxDepthError):
    """Voxel grids with different lattice parameters were combined."""


class EmptySceneError(VoxDepthError):
    """A scene description contains no primitives to render."""


class InsufficientValidDepthError(VoxDepthError):
    """Too few valid depth pixels to estimate camera motion."""


class EmptyWindowError(VoxDepthError):
    """A fusion window with zero frames was requested."""


class ImageTooSmallError(VoxDepthError):
    """Image below the minimum size for feature detection."""


class TooFewMatchesError(VoxDepthError):
    """Not enough good feature matches to fit a transform."""


class DegenerateConfigurationError(VoxDepthError):
    """Matched points are collinear; no affine transform recoverable."""


class EmptyMaskError(VoxDepthError):
    """A masked metric was requested with an all-zero mask."""


class RequiresGroundTruthError(VoxDepthError):
    """Operation needs ground-truth depth that the dataset lacks."""


class MissingManifestError(VoxDepthError):
    """Dataset directory has no manifest file."""


class MalformedManifestError(VoxDepthError):
    """Manifest file is missing a field or holds an invalid value."""


class MissingFrameFileError(VoxDepthError):
    """A file listed in the manifest does not exist on disk."""


class DecodeError(VoxDepthError):
    """An image file exists but cannot be decoded."""


class FrameIndexError(VoxDepthError, IndexError):
    """Frame index outside the sequence range."""


class HeaderMismatchError(VoxDepthError):
    """Metric record keys do not match the existing CSV header."""
