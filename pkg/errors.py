"""
Exception hierarchy shared by every module of the toolkit
"""


class EntranceDiffusionError(Exception):
    pass


class ParameterError(EntranceDiffusionError, ValueError):
    """A ProcessSpec (or an operation argument) violates a family invariant"""
    pass


class SpecFormatError(ParameterError):
    """Malformed ProcessSpec JSON: bad syntax, unknown family or unknown keys"""
    pass


class DomainError(EntranceDiffusionError, ValueError):
    """A point lies outside (or on the boundary of) the state space"""
    pass


class HorizonError(EntranceDiffusionError, ValueError):
    """A time lies at or past the finite horizon T of a bridge-type family"""
    pass


class UnsupportedFamilyError(EntranceDiffusionError):
    pass


class UnsupportedMomentError(EntranceDiffusionError):
    pass


class QuadratureError(EntranceDiffusionError):
    """Adaptive quadrature did not converge; the best estimate is attached"""

    def __init__(self, message: str, best_estimate: float, abs_error_estimate: float):
        super().__init__(message)
        self.best_estimate = best_estimate
        self.abs_error_estimate = abs_error_estimate
