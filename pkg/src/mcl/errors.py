"""Exception hierarchy; the CLI maps each family onto an exit code."""


class MclError(Exception):
    pass


class InvalidInputError(MclError, ValueError):
    pass


class DimensionError(MclError, ValueError):
    pass


class DataError(MclError):
    pass


class DataIOError(DataError):
    pass


class SchemaError(DataError):
    pass


class InvariantViolation(DataError, ValueError):
    pass


class NumericalAbort(MclError, FloatingPointError):
    """Raised when a non-finite loss or gradient shows up during training."""

    def __init__(self, message: str, epoch: int | None = None, batch: int | None = None,
                 objective: float | None = None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch
        self.objective = objective
