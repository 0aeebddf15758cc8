"""Exception hierarchy shared by every revar module."""


class RevarError(Exception):
    """Base class for all library errors."""


class IngestError(RevarError):
    """A dataset directory is missing a required file."""


class FormatError(RevarError):
    """A dataset file is present but malformed."""


class EmptySplitError(RevarError):
    pass


class InsufficientNodesError(RevarError):
    pass


class InsufficientBudgetError(RevarError):
    pass


class InvalidSpecError(RevarError):
    pass


class EmptyClassError(RevarError):
    pass


class ShapeError(RevarError, ValueError):
    pass


class ContractError(RevarError):
    """A caller violated a documented precondition."""


class NumericError(RevarError, FloatingPointError):
    """NaN or inf showed up where a finite value is required."""

    def __init__(self, message, *, layer=None, parameter=None):
        super().__init__(message)
        self.layer = layer
        self.parameter = parameter


class DegenerateInput(RevarError):
    """Statistic is undefined for the given input (e.g. zero variance)."""


class ConfigError(RevarError, ValueError):
    pass
