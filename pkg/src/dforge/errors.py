"""Exception types raised across the package."""


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


class ConfigError(ValueError):
    """A configuration or spec value is invalid."""


class SpecError(ConfigError):
    """A network or projector spec violates its invariants."""


class FormatError(ValueError):
    """A binary file is malformed (bad magic, truncation, count mismatch)."""


class MetricError(ValueError):
    """A diagnostic metric is undefined for the given inputs."""


class ContractError(RuntimeError):
    """An API precondition was violated by the caller."""


class TrainingError(RuntimeError):
    """Training diverged (non-finite loss)."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch
