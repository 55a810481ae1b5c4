"""Exception types shared across the package.

Everything derives from ``ValueError`` so callers that only care about
"bad input" can catch that; the CLI maps the config/validation family to
exit code 1 and everything else to 2.
"""


class SkypolError(ValueError):
    """Base class for all package-specific errors."""


class DomainError(SkypolError):
    """An argument lies outside the documented domain of an operation."""


class ProjectionError(SkypolError):
    """Stereographic projection evaluated at its point at infinity."""


class DegenerateConfigError(SkypolError):
    """A neutral-point configuration the polarization field cannot use."""


class HorizonError(SkypolError):
    """A sky direction at or below the horizon where tan(zenith) blows up."""


class CoefficientError(SkypolError):
    """Luminance coefficients that violate their validity constraints."""


class NoOverlapError(SkypolError):
    """Two images share no valid pixels, so they cannot be compared."""


class DegenerateImageError(SkypolError):
    """An image without enough valid pixels for sector statistics."""


class ConfigError(SkypolError):
    """An experiment configuration that fails validation."""
