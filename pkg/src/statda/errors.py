"""Exception types raised across the package."""


class StatDAError(Exception):
    """Base class for all package errors."""


class ContractError(StatDAError, ValueError):
    """Inputs violate an operation's preconditions (shapes, signs, ranges)."""


class InvalidParametersError(ContractError):
    pass


class InsufficientSamplesError(ContractError):
    pass


class ConfigurationError(ContractError):
    pass


class AlignmentError(ContractError):
    pass


class NumericalError(StatDAError, ArithmeticError):
    pass


class DivergenceError(NumericalError):
    """A trajectory produced non-finite values.

    Attributes
    ----------
    t : float or None
        Simulation time at which divergence was detected.
    step : int or None
        Step index.
    index : int or None
        Offending particle index, if known.
    """

    def __init__(self, message, t=None, step=None, index=None):
        super().__init__(message)
        self.t = t
        self.step = step
        self.index = index


class FilterDivergenceError(DivergenceError):
    pass


class CalibrationError(StatDAError, RuntimeError):
    pass
