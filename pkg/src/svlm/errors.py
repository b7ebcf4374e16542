"""Exception hierarchy shared by all modules."""


class SVLMError(Exception):
    """Base class for every error raised by the package."""


class GridError(SVLMError, ValueError):
    pass


class NonPositiveWeight(GridError):
    pass


class AsymmetricCovariance(GridError):
    pass


class NotPSD(GridError):
    pass


class CauchySchwarzViolation(NotPSD):
    """|sigma(r, s)| exceeds sigma(r) sigma(s) for some pair of sites."""


class ExponentOutOfRange(GridError):
    pass


class MixedRegime(SVLMError, ValueError):
    """The memory field straddles more than one of the three regimes."""


class DomainError(SVLMError, ValueError):
    pass


class DegenerateNormalizer(DomainError):
    pass


class HorizonOverflow(SVLMError, ValueError):
    pass


class FactorizationFailure(SVLMError, ArithmeticError):
    pass


class TimeOutOfRange(SVLMError, ValueError):
    pass


class AlreadyNormalized(SVLMError, ValueError):
    pass


class UnderpoweredRun(SVLMError, ValueError):
    pass


class ConfigError(SVLMError, ValueError):
    pass
