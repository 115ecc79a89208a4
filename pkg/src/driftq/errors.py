"""Exception types shared across the package."""


class DriftqError(Exception):
    """Base class for all package errors."""


class ValidationError(DriftqError):
    """Instance parameters violate a structural constraint."""


class DomainError(DriftqError):
    """An argument lies outside the domain an operation is defined on."""


class UnboundedError(DriftqError):
    """The conjugate of the activation cost is unbounded below, so no
    finite lower bound on the achievable cost rate exists."""


class BlowUpError(DriftqError):
    """A numerically integrated trajectory left the overflow guard band."""


class InconclusiveError(DriftqError):
    """Integration reached the end of the domain without the trajectory
    either turning decreasing or entering the linear tail regime."""


class BracketError(DriftqError):
    """The analytic bisection bracket failed to straddle the target; this
    signals an implementation bug or an instance outside the theory."""


class ConfigError(DriftqError):
    """A simulation configuration value is unusable."""


class SolverError(DriftqError):
    """A numeric routine failed to reach its stopping tolerance."""
