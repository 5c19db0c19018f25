"""Exception types shared across the package."""


class ShapeMismatchError(ValueError):
    """Operand shapes violate an operation's contract."""


class FormatError(ValueError):
    """A file or byte stream does not match its declared format."""


class ConfigError(ValueError):
    """A configuration value or key is invalid."""


class NumericFailure(RuntimeError):
    """A computation produced a non-finite result."""
