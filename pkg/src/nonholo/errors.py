"""Exceptions raised by the integrators and factorizations."""


class NonholoError(Exception):
    """Base class for errors raised by this package."""


class DimensionError(NonholoError, ValueError):
    pass


class SolverDiverged(NonholoError):
    """The implicit solve hit ``max_iter`` or produced non-finite values.

    ``step`` is filled in by the integration loops so callers know where a
    trajectory broke down.
    """

    def __init__(self, message, residual=float("nan"), iterations=0, step=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations
        self.step = step

    def __str__(self):
        base = super().__str__()
        if self.step is not None:
            return f"{base} (at step {self.step})"
        return base


class SingularJacobian(NonholoError):
    pass


class RankDeficient(NonholoError):
    """A Householder pivot column (or reflector) has vanishing norm."""


class SingularReducedMetric(NonholoError):
    """The reduced metric X^T g X is not invertible; the basis is broken."""


class IncompatibleMethod(NonholoError, ValueError):
    """The requested method cannot run on the requested system."""
