"""Exception types raised across the package."""


class FracHeatError(Exception):
    """Base class for all package errors."""


class PoleError(FracHeatError, ValueError):
    """Gamma evaluated at a non-positive integer."""


class DomainError(FracHeatError, ValueError):
    """A parameter lies outside the supported range."""


class DimensionMismatch(FracHeatError, ValueError):
    pass


class ConvergenceError(FracHeatError, ArithmeticError):
    """A numerical scheme could not certify its tolerance."""


class TruncationError(FracHeatError, ArithmeticError):
    """Frequency-domain truncation estimate exceeds the tolerance."""


class SingularTime(FracHeatError, ValueError):
    pass


class NotPositiveDefinite(FracHeatError, ArithmeticError):
    pass


class CapExceeded(FracHeatError, MemoryError):
    """Requested grid or iteration count exceeds a configured cap."""


class NegativeMoment(FracHeatError, ValueError):
    pass


class NoConvergence(FracHeatError, ArithmeticError):
    """Picard iteration did not reach the tolerance within ``max_iter``."""

    def __init__(self, max_iter, residuals):
        self.max_iter = max_iter
        self.residuals = list(residuals)
        last = self.residuals[-1] if self.residuals else float("nan")
        super().__init__(f"no convergence after {max_iter} iterations (last update {last:.3e})")
