"""Exceptions raised by the G-BSDE lab."""


class GBsdeError(Exception):
    """Base class for every error raised by the lab."""


class NonFinite(GBsdeError):
    """A generator, payoff or coefficient produced a NaN or infinity."""


class InvalidSpec(GBsdeError):
    """A problem failed one or more sampled validity checks.

    The full ValidationReport is kept on ``report`` so callers can list
    every violated invariant, not only the first one.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class PropertyViolation(GBsdeError):
    """An approximant property failed beyond its documented slack."""

    def __init__(self, message, witness=None, margin=None):
        super().__init__(message)
        self.witness = witness
        self.margin = margin


class InvalidLadder(GBsdeError):
    """An n-ladder is empty, not strictly increasing, or has n <= L."""


class FixedPointDiverged(GBsdeError):
    """The implicit y-coupling iteration did not converge."""


class DomainTooSmall(GBsdeError):
    """Boundary extrapolation carries too much weight at the origin."""


class SchemeConditionError(GBsdeError):
    """The time step breaks the monotonicity condition of the scheme."""


class BudgetExceeded(GBsdeError):
    """A scenario tree would exceed its node budget."""


class NotLinear(GBsdeError):
    """A generator failed the sampled linearity test."""


class CflViolation(GBsdeError):
    """An explicit finite-difference grid breaks the CFL bound."""


class InconsistentConfigs(GBsdeError):
    """Two solver configurations describe different problems."""


class UnknownProblem(GBsdeError):
    """A catalog lookup used a name that is not registered."""


class ConfigError(GBsdeError):
    """An experiment configuration is malformed."""
