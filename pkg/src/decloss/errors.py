"""Exception types shared across the package."""


class DeclossError(Exception):
    """Base class for every error raised deliberately by this package."""


class DimensionError(DeclossError, ValueError):
    """Operand shapes are incompatible."""


class DomainError(DeclossError, ArithmeticError):
    """A value lies outside the domain of an operation (log of <= 0, division by 0, ...)."""


class ContractError(DeclossError, ValueError):
    """A documented precondition was violated."""


class DegeneratePartitionError(ContractError):
    """A contrastive row has an empty positive or negative set."""

    def __init__(self, row: int, missing: str):
        self.row = row
        self.missing = missing
        super().__init__(f"row {row} has no {missing} pairs; the batch cannot be partitioned")


class ConfigError(DeclossError, ValueError):
    """Invalid or unknown configuration."""


class FormatError(DeclossError, ValueError):
    """Unsupported or malformed file."""


class TrainingError(DeclossError, RuntimeError):
    """Training diverged."""

    def __init__(self, step: int, message: str):
        self.step = step
        super().__init__(f"step {step}: {message}")
