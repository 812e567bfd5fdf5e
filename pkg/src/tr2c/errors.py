"""Exception hierarchy shared by the library and the CLI."""


class TR2CError(Exception):
    """Base class for all package errors."""


class InvalidInputError(TR2CError, ValueError):
    """Malformed matrix, label vector, or shape mismatch."""


class InvalidPartitionError(InvalidInputError):
    pass


class InvalidConfigError(TR2CError, ValueError):
    """Bad hyperparameter value or unknown config key."""


class IngestionError(InvalidInputError):
    """A feature or label file could not be parsed."""


class NumericalError(TR2CError, ArithmeticError):
    """A non-finite value appeared during training or evaluation."""
