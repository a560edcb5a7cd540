"""Exception hierarchy shared by every module of the package."""


class AsmlError(Exception):
    """Base class for all package errors."""


class ZeroMassCondition(AsmlError, ValueError):
    """Conditioning on a partial realization that has no probability mass."""


class NotEnumerable(AsmlError, TypeError):
    """An exact computation was requested on a prior that can only be sampled."""


class EmptyTaskSet(AsmlError, ValueError):
    pass


class BudgetExceeded(AsmlError, RuntimeError):
    """A policy tried to re-select an item it has already selected."""


class InfeasibleBudget(AsmlError, ValueError):
    pass


class WrongRegime(AsmlError, ValueError):
    pass


class TooLarge(AsmlError, ValueError):
    """The instance exceeds the size guard of the brute-force oracle."""


class ParseError(AsmlError, ValueError):
    pass


class InconsistentObservation(AsmlError, ValueError):
    pass


class ConfigError(AsmlError, ValueError):
    pass
