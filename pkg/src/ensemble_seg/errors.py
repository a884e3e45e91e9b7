"""Exception hierarchy shared across the package."""


class SegError(Exception):
    """Base class for all package errors."""


class FormatError(SegError, ValueError):
    """A file is not a well-formed NIfTI-1 volume."""


class UnsupportedError(SegError, ValueError):
    """A well-formed file uses a feature outside the supported subset."""


class DataError(SegError, ValueError):
    """Voxel data violates a value invariant (non-finite, negative, out of range)."""


class ShapeError(SegError, ValueError):
    """Volumes that must be combined have different dims, spacing or channels."""


class DegenerateVoxelError(SegError, ValueError):
    """A probability voxel has no mass in any channel."""


class SpecError(SegError, ValueError):
    """A region or synthetic-case specification is invalid."""


class ConfigError(SegError, ValueError):
    """A configuration value is missing, unknown or out of range."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class PreconditionError(SegError, ValueError):
    """An operation precondition does not hold."""


class EmptyEnsembleError(SegError, ValueError):
    """An ensemble was requested with no members."""
