"""Exception taxonomy shared across the package."""


class StyleSwapError(Exception):
    """Base class for all package errors."""


class ConfigurationError(StyleSwapError, ValueError):
    """A config object or file violates one or more invariants.

    ``problems`` lists every violation found, not just the first.
    """

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class ShapeError(StyleSwapError, ValueError):
    """Tensor arguments do not have the contracted shape."""


class ArgumentError(StyleSwapError, ValueError):
    """A non-shape argument is invalid (missing role, bad index, ...)."""


class NumericError(StyleSwapError, ArithmeticError):
    """Non-finite values where finite ones are required."""


class DataError(StyleSwapError, ValueError):
    """Dataset is empty, unreadable, or malformed."""


class CheckpointError(StyleSwapError, RuntimeError):
    """Checkpoint file is unreadable or structurally invalid."""


class CheckpointVersionError(CheckpointError):
    """Checkpoint was written by an incompatible format version."""


class TrainingDiverged(StyleSwapError, RuntimeError):
    """A training step produced a non-finite loss; carries the last report."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
