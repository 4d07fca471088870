"""Exception types raised across the toolkit."""


class RSSError(Exception):
    """Base class for all toolkit errors."""


class GridTooSmall(RSSError, ValueError):
    pass


class DimensionMismatch(RSSError, ValueError):
    pass


class SingularMatrix(RSSError, ArithmeticError):
    pass


class SolveFailure(RSSError, RuntimeError):
    pass


class MaxIterationsExceeded(SolveFailure):
    pass


class NoConvergence(RSSError, RuntimeError):
    pass


class NotConverged(NoConvergence):
    pass


class ZeroPreconditioner(RSSError, ValueError):
    pass


class HypothesisViolated(RSSError, ValueError):
    """A theorem's standing assumption does not hold for the given inputs."""


class AllUnstable(RSSError, RuntimeError):
    pass


class BlowUp(RSSError, FloatingPointError):
    pass
