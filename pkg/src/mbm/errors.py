class MBMError(Exception):
    """Base class for all errors raised by the package."""


class ParameterError(MBMError, ValueError):
    pass


class NumericError(MBMError, ArithmeticError):
    """A non-finite value appeared during a computation.

    ``trial`` carries the optimizer trial index when the failure happened
    inside an iterative loop, else None.
    """

    def __init__(self, message, trial=None):
        super().__init__(message)
        self.trial = trial
