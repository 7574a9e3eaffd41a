"""Exception hierarchy shared across the package."""


class BossError(Exception):
    """Base class for every error raised by this package."""


class StructuralError(BossError, ValueError):
    """Shapes or dimensions do not line up."""


class NumericError(BossError, ArithmeticError):
    """A NaN or infinity appeared where a finite value is required."""


class StateError(BossError, RuntimeError):
    """An operation was called out of order (e.g. backward before forward)."""


class SchemaError(BossError, ValueError):
    """A serialized model or config file is malformed."""


class UnsupportedLayerError(SchemaError):
    """A model file names a layer kind this package cannot build."""


class ConfigError(BossError, ValueError):
    """Invalid experiment or preset configuration."""


class BudgetError(BossError, ValueError):
    """A brute-force search was asked to enumerate more than it allows."""
