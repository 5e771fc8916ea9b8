"""Exception taxonomy shared across the package.

Each stage of the pipeline raises a subclass of FlowError; the command line
front end maps them onto exit codes by stage (config 1, solver 2, modulation 3,
analysis 4).
"""


class FlowError(Exception):
    """Base class for all package-specific failures."""


class ConfigError(FlowError):
    """Malformed or inconsistent run configuration."""


# --- domain / geometry ---------------------------------------------------

class NonConvexDomain(FlowError):
    """Barrier support function has non-positive curvature radius somewhere."""


class PointNotOnBoundary(FlowError):
    """A point claimed to sit on the barrier fails the support-function test."""


class ConvexityLost(FlowError):
    """Discrete curvature of the evolving arc became non-positive."""


class ContactMismatch(FlowError):
    """Arc endpoints are off the barrier by more than the contact tolerance."""


class InvalidArc(FlowError):
    """Support-arc container violates its basic invariants (grid size, ordering)."""


# --- solver ---------------------------------------------------------------

class StepRejected(FlowError):
    """A time step violated the per-step safety thresholds."""


class ContactSolveFailed(FlowError):
    """Newton iteration for contact-consistent initial data did not converge."""


class InsufficientData(FlowError):
    """Not enough samples for the requested estimate or fit."""


class InconsistentFit(FlowError):
    """Two independent estimators disagree beyond the allowed spread."""


# --- modulation -----------------------------------------------------------

class DegenerateDenominator(FlowError):
    """Scale solve hit a non-positive denominator."""


class NoRealRoot(FlowError):
    """Translation solve has no real root."""


class AmbiguousRoot(FlowError):
    """Translation solve has two nearly coincident roots."""


# --- analysis -------------------------------------------------------------

class DomainNotInterior(FlowError):
    """Arc angle interval is not inside (0, pi) where an extension needs room."""


class SpectralMismatch(FlowError):
    """Quadrature and spectral evaluations of the quadratic form disagree."""


class NonPositiveData(FlowError):
    """Log-linear fit requested on data that is not strictly positive."""


# --- oracle ---------------------------------------------------------------

class SpacingCollapse(FlowError):
    """Front-tracking polyline spacing collapsed below resolution."""


class NoOverlap(FlowError):
    """Trajectories to compare share no common time range."""
