"""Exception types shared across the package."""


class OthrTrackError(Exception):
    """Base class for all package-specific errors."""


class GeometryError(OthrTrackError):
    """Geometrically inconsistent inputs (e.g. arcsine argument outside [-1, 1])."""


class CoverageError(OthrTrackError):
    """A reflection point falls outside the ionosphere grid extent."""


class NotPositiveDefiniteError(OthrTrackError):
    """A matrix required to be positive definite failed factorization."""


class EventCapError(OthrTrackError):
    """Association event enumeration exceeded the configured hard cap."""


class LgbpError(OthrTrackError):
    """Belief propagation produced a non-positive marginal precision."""


class ConfigError(OthrTrackError):
    """Invalid or unknown configuration content."""
