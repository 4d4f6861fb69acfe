"""Exception types raised across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of an operation."""


class DatasetIntegrityError(ValueError):
    """A dataset violates one of its structural invariants."""


class LoadError(DatasetIntegrityError):
    """A dataset file could not be parsed into a valid dataset."""


class ConfigError(ValueError):
    """An experiment or training configuration is invalid or infeasible."""


class ExperimentError(RuntimeError):
    """One split of an experiment failed; ``split`` holds its index."""

    def __init__(self, split: int, cause: BaseException):
        super().__init__(f"split {split} failed: {type(cause).__name__}: {cause}")
        self.split = split
        self.cause = cause
