"""Exception types shared across the package."""


class LradError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(LradError):
    """Operands have incompatible or unsupported shapes."""


class ConfigError(LradError):
    """A configuration value or combination is invalid."""


class DataFormatError(LradError):
    """An input file does not match its declared binary format."""


class NumericalError(LradError):
    """A numerical routine failed (non-convergence, non-finite values)."""
