"""Exception hierarchy shared by every routing module."""


class MomaError(Exception):
    """Base class for all errors raised by this package."""


class DataFormatError(MomaError, ValueError):
    """A file or record does not follow its documented format."""


class DuplicateIdError(MomaError, ValueError):
    pass


class UnknownModelError(MomaError, KeyError):
    pass


class DimensionError(MomaError, ValueError):
    pass


class DomainError(MomaError, ValueError):
    """A numeric argument lies outside the domain of the formula."""


class ConfigError(MomaError, ValueError):
    pass


class EmptyInputError(MomaError, ValueError):
    pass


class BudgetInfeasibleError(MomaError, ValueError):
    pass


class NoCandidateError(MomaError, LookupError):
    """No active agent survives the state/category filter."""


class EmptyAvailableError(MomaError, ValueError):
    pass


class BackendError(MomaError, RuntimeError):
    """A pluggable decision backend failed or returned unusable logits."""


class CapacityError(MomaError, ValueError):
    pass
