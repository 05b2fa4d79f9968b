"""Exception hierarchy shared by the estimation modules."""


class SAEError(Exception):
    """Base class for all package errors."""


class ZeroScaleError(SAEError, ValueError):
    """A robust scale estimate collapsed to zero."""


class ConvergenceError(SAEError, RuntimeError):
    """An iterative solver did not converge."""

    def __init__(self, msg, diagnostics=None):
        super().__init__(msg)
        self.diagnostics = diagnostics


class RankDeficientError(SAEError, ValueError):
    """The design matrix does not have full column rank."""


class EstimationError(SAEError, ValueError):
    """An estimator was asked for something it cannot produce."""


class InputError(SAEError, ValueError):
    """Malformed input data or configuration."""
