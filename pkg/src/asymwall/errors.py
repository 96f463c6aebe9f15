"""Exception hierarchy shared across the toolkit."""


class AsymwallError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(AsymwallError):
    """A parameter fell outside its documented range."""


class NoSignChange(AsymwallError):
    """The column-averaged second component never crosses zero.

    Carries the partially filled admissibility report in ``report``.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class NonFinite(AsymwallError):
    """NaN or Inf encountered during descent; ``last_iterate`` holds the field."""

    def __init__(self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


class NotConverged(AsymwallError):
    """Residuals above tolerance at the iteration cap; ``last_iterate`` holds the field."""

    def __init__(self, message, last_iterate=None, report=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.report = report


class SolverFailure(AsymwallError):
    """A linear solve did not reach its target residual."""


class EigSolverFailure(AsymwallError):
    """An eigenvalue iteration stagnated."""


class DegenerateBoundary(AsymwallError):
    """The in-plane vector nearly vanishes on the strip boundary."""


class RootBracketFailure(AsymwallError):
    """1D root finding could not bracket a sign change."""


class StepFailure(AsymwallError):
    """ODE step size underflowed while chasing the drift tolerance."""


class EscapedDomain(AsymwallError):
    """A characteristic left the guard box; indicates bad seeding."""


class CoverageGap(AsymwallError):
    """A grid node was not reached by any characteristic."""


class BlendViolation(AsymwallError):
    """|grad psi| reached 1 inside an interpolation strip."""


class NegativeRadicand(AsymwallError):
    """1 - |grad psi|^2 dropped below -1e-12; signals a blending bug."""


class NoBifurcation(AsymwallError):
    """Relative thickness too small: only the trivial branch exists."""


class NegativeArgument(AsymwallError):
    """Closed-form branch evaluated below the critical angle."""


class SeriesDomainError(AsymwallError):
    """Cosine-series profile hit the degenerate point |a0| = sqrt(2)."""
