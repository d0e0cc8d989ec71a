"""Exception hierarchy shared by the numerical modules."""


class TFCHError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(TFCHError, ValueError):
    pass


class UsageError(TFCHError):
    pass


class SingularKernelError(TFCHError):
    pass


class DomainError(TFCHError, ValueError):
    """An operator was applied outside its domain (e.g. nonzero-mean field for the inverse Laplacian)."""


class NumericalError(TFCHError):
    def __init__(self, message, iterations=None):
        super().__init__(message)
        self.iterations = iterations


class SolverError(NumericalError):
    def __init__(self, message, iterations=None, residual=None):
        super().__init__(message, iterations)
        self.residual = residual


class SplittingError(TFCHError):
    pass


class StepRestrictionError(TFCHError):
    def __init__(self, message, tau=None, bound=None):
        super().__init__(message)
        self.tau = tau
        self.bound = bound
