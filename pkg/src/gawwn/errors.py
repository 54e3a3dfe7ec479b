"""Exception taxonomy shared across the package."""


class GawwnError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(GawwnError):
    """Operand shapes are incompatible for the requested operation."""


class GeometryError(GawwnError):
    """Degenerate or impossible spatial geometry (empty box, negative extent)."""


class UsageError(GawwnError):
    """API called outside its contract (non-scalar backward, empty pool, ...)."""


class InputError(GawwnError):
    """User-supplied data is malformed (bad caption characters, bad request)."""


class FormatError(GawwnError):
    """On-disk data does not match the expected file format."""


class TrainingError(GawwnError):
    """Optimization failed in a way that cannot be recovered (NaN loss/grad)."""


class NumericsError(GawwnError):
    """A forward computation produced non-finite values from finite inputs."""
