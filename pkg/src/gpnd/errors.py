"""Exception hierarchy shared by every module."""


class GPNDError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(GPNDError, ValueError):
    pass


class NumericalError(GPNDError, ArithmeticError):
    """A factorization failed even after jitter was added."""

    def __init__(self, message, params=None):
        super().__init__(message)
        self.params = params


class TrainingError(GPNDError, RuntimeError):
    """Raised when optimization produces a non-finite loss or gradient."""

    def __init__(self, message, epoch=None, snapshot=None):
        super().__init__(message)
        self.epoch = epoch
        self.snapshot = snapshot


class IngestionError(GPNDError):
    pass


class MissingFileError(IngestionError, FileNotFoundError):
    pass


class MissingColumnError(IngestionError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class EmptyDatasetError(IngestionError, ValueError):
    pass


class GenerationError(GPNDError, RuntimeError):
    """Rejection sampling for negative pairs hit its attempt cap."""


class ConfigError(GPNDError, ValueError):
    pass
