"""Exception types shared across the package."""


class GraphPhpaError(Exception):
    """Base class for all package errors."""


class ShapeError(GraphPhpaError, ValueError):
    """Operands have incompatible shapes; the message names both."""


class ValidationError(GraphPhpaError, ValueError):
    """An input violates a documented invariant."""


class EmptyDatasetError(GraphPhpaError, ValueError):
    """A dataset-producing operation would yield zero samples."""


class DivergenceError(GraphPhpaError, RuntimeError):
    """Training or evaluation produced a non-finite value."""

    def __init__(self, message: str, epoch: int | None = None):
        super().__init__(message)
        self.epoch = epoch


class TraceFormatError(GraphPhpaError, ValueError):
    """A trace file is malformed; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message)
        self.line = line


class ConfigError(GraphPhpaError, ValueError):
    """An experiment configuration document is invalid."""


class RunMismatchError(GraphPhpaError, ValueError):
    """Two runs being compared differ in a field that must match."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field
