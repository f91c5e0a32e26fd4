"""Exception hierarchy for the diffusion-wave laboratory."""


class DiffwaveError(Exception):
    """Base class for all errors raised by this package."""


class NoConvergence(DiffwaveError):
    """Shooting failed to bracket or to reach the far-field tolerance."""


class NonMonotone(DiffwaveError):
    """The profile slope changed sign although the end states differ."""


class InsufficientTail(DiffwaveError):
    """Too few nodes (or no decaying tail) in a Gaussian fit window."""


class NonPositiveTemperature(DiffwaveError):
    """The corrected temperature dropped to zero or below (epsilon too large)."""


class GridTooNarrow(DiffwaveError):
    """The computational domain truncates the wave."""


class PositivityLoss(DiffwaveError):
    """A cell lost positive specific volume or temperature during a step."""

    def __init__(self, message, tau=None):
        super().__init__(message)
        self.tau = tau


class IdentityViolation(DiffwaveError):
    """A structural identity of the perturbation variables failed."""


class NoAdmissibleN(DiffwaveError):
    """No characteristic weight exponent satisfies the positivity inequality."""


class DegenerateFit(DiffwaveError):
    """A rate fit was requested on numerically zero or too few data."""


class SignViolation(DiffwaveError):
    """Velocity or temperature gradient changed sign inside the creep window."""


class ParseError(DiffwaveError):
    """Malformed configuration document or override."""


class ValidationError(DiffwaveError):
    """A configuration value is unknown or outside its documented range."""
