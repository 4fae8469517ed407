"""Exception hierarchy shared across the toolkit.

Every error raised by library code derives from :class:`LimbscanError` and
carries a short ``category`` slug that the CLI maps to exit codes.
"""


class LimbscanError(Exception):
    category = "internal"


class SpecGeometryError(LimbscanError):
    """Phantom layers cannot nest, or the fluid disc leaves the fat annulus."""

    category = "geometry"


class EmptySceneError(LimbscanError):
    """Contour extraction on a scene with no non-air cells."""

    category = "geometry"


class DegenerateContourError(LimbscanError):
    """Perturbation could not produce a simple polygon within the retry cap."""

    category = "geometry"


class StabilityError(LimbscanError):
    """Time step violates the 2-D Courant bound."""

    category = "simulation"


class OutOfDomainError(LimbscanError):
    """Source/receiver placed outside the usable simulation domain."""

    category = "simulation"


class SourceOutOfDomainError(LimbscanError):
    category = "geometry"


class NonpositiveSpeedError(LimbscanError):
    category = "geometry"


class ShapeMismatchError(LimbscanError):
    """Operands with incompatible raster geometry or sample counts."""

    category = "shape"


class InsufficientDataError(LimbscanError):
    category = "data"


class FitError(LimbscanError):
    """Calibration fit residual is too large to trust."""

    category = "data"


class DegenerateLabelsError(LimbscanError):
    """ROC requested on a dataset missing one of the two classes."""

    category = "data"


class FormatError(LimbscanError):
    """Corrupt or unrecognized raster/manifest file."""

    category = "format"
