"""Exception hierarchy.

Hypothesis violations (singular contact, irregular switching) are errors,
never negative certificates.
"""


class L1ControlError(Exception):
    """Base class for every error raised by this package."""


class DomainError(L1ControlError, ValueError):
    """Evaluation outside the phase space (collision q = 0, p_v = 0, ...)."""


class PropagationError(L1ControlError):
    """Base class for failures while integrating an extremal."""


class StepFailure(PropagationError):
    """The adaptive integrator could not meet its tolerance."""


class SingularContact(PropagationError):
    """A switching with |H01| below the regularity threshold."""

    def __init__(self, message, t=None, h01=None):
        super().__init__(message)
        self.t = t
        self.h01 = h01


class ChatteringSuspected(PropagationError):
    """Switchings accumulate (Fuller phenomenon); not synthesized."""


class SingularEscape(PropagationError):
    """A singular arc drifted off the order-two locus."""


class FeedbackOutOfRange(PropagationError):
    """The singular feedback left the admissible throttle interval [0, 1]."""


class RegularityViolation(L1ControlError):
    """Jump matrix requested at a non-regular switching."""


class Inconclusive(L1ControlError):
    """Determinant test too close to the noise floor to certify."""

    def __init__(self, message, t=None, details=None):
        super().__init__(message)
        self.t = t
        self.details = details or {}


class BracketDegenerate(L1ControlError):
    """On-locus point with vanishing H10001 (order higher than two)."""


class NoConvergence(L1ControlError):
    """Newton iteration did not reach the tolerance."""

    def __init__(self, message, best=None, diagnostics=None):
        super().__init__(message)
        self.best = best
        self.diagnostics = diagnostics or {}


class SingularJacobian(NoConvergence):
    """Shooting Jacobian is not invertible."""


class StallAtLambda(L1ControlError):
    """Homotopy step size underflow."""

    def __init__(self, message, lam=None, p0=None):
        super().__init__(message)
        self.lam = lam
        self.p0 = p0
