"""Exception hierarchy shared by every module of the package."""


class SigmaLabError(Exception):
    """Base class; the CLI maps any subclass to exit status 1."""


class PoleError(SigmaLabError):
    pass


class PrecisionError(SigmaLabError):
    """Raised when precision escalation fails to reach the target tolerance."""


class DomainError(SigmaLabError):
    pass


class NotPrime(SigmaLabError):
    pass


class OverflowBudget(SigmaLabError):
    """Trial-division factorization exceeded its configured effort."""


class DivergenceError(SigmaLabError):
    pass


class TailTooLarge(SigmaLabError):
    pass


class TruncationError(SigmaLabError):
    pass


class InfeasibleSystem(SigmaLabError):
    pass


class RankError(SigmaLabError):
    pass


class BracketError(SigmaLabError):
    pass


class NotFactor(SigmaLabError):
    pass


class SmallC0(SigmaLabError):
    pass
