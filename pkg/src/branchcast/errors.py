"""Exception hierarchy shared by all modules."""


class BranchcastError(Exception):
    """Base class for every error raised by this package."""


class FormatError(BranchcastError, ValueError):
    """Input text does not follow the expected file layout."""


class CorruptInputError(BranchcastError, ValueError):
    """Too many rows of an input file failed validation."""

    def __init__(self, message, offenders=()):
        super().__init__(message)
        self.offenders = list(offenders)


class EmptySeriesError(BranchcastError, ValueError):
    pass


class DomainError(BranchcastError, ValueError):
    """A value lies outside the domain of a transform."""


class DegenerateScaleError(BranchcastError, ValueError):
    pass


class ConfigurationError(BranchcastError, ValueError):
    pass


class DataError(BranchcastError, ValueError):
    """Not enough (or unusable) observations for the requested operation."""


class NumericalError(BranchcastError, ArithmeticError):
    """Normal equations could not be factorized."""

    def __init__(self, message, condition_estimate=float("nan")):
        super().__init__(message)
        self.condition_estimate = condition_estimate


class ScenarioInfeasibleError(BranchcastError, ValueError):
    """A series does not cover the windows a scenario needs."""


class EvaluationError(BranchcastError, ValueError):
    pass


class UndefinedComparisonError(EvaluationError):
    pass
