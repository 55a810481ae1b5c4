"""Combined four-neutral-point polarization field and analytic sky luminance.

The polarization side is a complex rational field ``w`` whose four zeros are
the neutral points of the sky; its argument gives the angle of polarization
and its modulus, blended with pluggable atmospheric factors, the degree of
polarization.  Luminance comes from a nine-coefficient analytic model with a
circumsolar anisotropy term.  Everything is expressed in the sun-following
frame of :mod:`skypol.geometry`.

The three atmospheric factors (ground depolarization, spectral weight,
turbidity ceiling) have no authoritative closed form here; the defaults are
documented placeholders chosen to satisfy the monotonicity contracts, and
they are injected so alternative families can be swapped in.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np

from .errors import (
    CoefficientError,
    DegenerateConfigError,
    DomainError,
    HorizonError,
)
from .geometry import SkyDirection, angular_separation, sky_to_complex

__all__ = [
    "SkyParams",
    "NeutralPoints",
    "AtmosphericFunctions",
    "HosekCoefficients",
    "SkySample",
    "default_neutral_offset",
    "place_neutral_points",
    "berry_w",
    "aop",
    "dop",
    "chi",
    "li",
    "evector",
    "sample_sky",
]


@dataclass(frozen=True)
class SkyParams:
    """Sun position and atmosphere state driving all three sky rasters.

    ``sun_zenith`` and ``sun_azimuth`` are geographic-frame degrees (azimuth
    compass-style from north toward east); ``turbidity`` is dimensionless,
    ``albedo`` a ground-reflectance fraction, ``wavelength`` in nanometers.
    """

    sun_zenith: float
    sun_azimuth: float = 0.0
    turbidity: float = 4.0
    albedo: float = 0.1
    wavelength: float = 450.0

    def __post_init__(self):
        if not 0.0 <= self.sun_zenith <= 90.0:
            raise DomainError(f"sun zenith {self.sun_zenith} outside [0, 90]")
        if not -180.0 <= self.sun_azimuth <= 180.0:
            raise DomainError(f"sun azimuth {self.sun_azimuth} outside [-180, 180]")
        if not 1.0 <= self.turbidity <= 10.0:
            raise DomainError(f"turbidity {self.turbidity} outside [1, 10]")
        if not 0.0 <= self.albedo <= 1.0:
            raise DomainError(f"albedo {self.albedo} outside [0, 1]")
        if not 320.0 <= self.wavelength <= 720.0:
            raise DomainError(f"wavelength {self.wavelength} outside [320, 720] nm")

    @property
    def sun_altitude(self) -> float:
        return 90.0 - self.sun_zenith


@dataclass(frozen=True)
class NeutralPoints:
    """The two independent neutral points; the other two are their antipodes.

    ``upper`` sits above the sun on the solar meridian, ``lower`` below it.
    Antipodal partners are ``-1/conj(.)`` in the stereographic plane.
    """

    upper: complex
    lower: complex

    def __post_init__(self):
        if self.upper == self.lower:
            raise DegenerateConfigError("the two neutral points coincide")

    @property
    def upper_antipode(self) -> complex:
        return -1.0 / self.upper.conjugate()

    @property
    def lower_antipode(self) -> complex:
        return -1.0 / self.lower.conjugate()

    def all_four(self) -> tuple[complex, complex, complex, complex]:
        return (self.upper, self.lower, self.upper_antipode, self.lower_antipode)


def default_neutral_offset(turbidity: float, wavelength: float) -> float:
    """Angular offset of the neutral points from the sun, degrees.

    Placeholder rule: ``clamp(15 + 2*(T - 3), 5, 30)``, independent of
    wavelength.  Injected through configuration wherever it is consumed.
    """
    return min(30.0, max(5.0, 15.0 + 2.0 * (turbidity - 3.0)))


DeltaRule = Callable[[float, float], float]


def place_neutral_points(
    p: SkyParams, delta_rule: Optional[DeltaRule] = None
) -> NeutralPoints:
    """Put the two visible-side neutral points on the solar meridian.

    The upper point sits ``delta`` degrees above the sun (reflected through
    the zenith onto the anti-solar meridian when the sun is higher than
    ``delta``), the lower one ``delta`` degrees below.

    The projections are built directly on the imaginary axis, which is where
    :func:`~skypol.geometry.sky_to_complex` places the solar meridian up to
    rounding; exact axis placement keeps the field evaluation well behaved.
    """
    delta = (delta_rule or default_neutral_offset)(p.turbidity, p.wavelength)
    upper_zenith = p.sun_zenith - delta
    # tan(zenith/2) on the solar meridian: azimuth 0 maps to +i r, azimuth
    # 180 (reflection through the zenith) to -i r.
    upper = complex(0.0, math.tan(math.radians(abs(upper_zenith)) / 2.0))
    if upper_zenith < 0.0:
        upper = -upper
    lower = complex(0.0, math.tan(math.radians(p.sun_zenith + delta) / 2.0))
    return NeutralPoints(upper, lower)


def berry_w(zeta: complex, points: NeutralPoints) -> complex:
    """The complex polarization field with zeros at the four neutral points.

    ``w = -4 (z-z1)(z-z2)(z+1/z1*)(z+1/z2*) /
    ((1+|z|^2)^2 |z1+1/z1*| |z2+1/z2*|)``.
    """
    z1, z2 = points.upper, points.lower
    if z1 == 0 or z2 == 0:
        raise DegenerateConfigError("neutral point at the zenith: 1/conj(z) undefined")
    c1 = 1.0 / z1.conjugate()
    c2 = 1.0 / z2.conjugate()
    num = (zeta - z1) * (zeta - z2) * (zeta + c1) * (zeta + c2)
    den = (1.0 + abs(zeta) ** 2) ** 2 * abs(z1 + c1) * abs(z2 + c2)
    return -4.0 * num / den


def aop(zeta: complex, points: NeutralPoints) -> float:
    """Angle of polarization: the argument of ``w`` in degrees, (-180, 180].

    Returns NaN at the neutral points, where the angle is undefined; the
    angle carries mod-180 semantics, so consumers compare through
    :func:`skypol.geometry.xi1`.
    """
    w = berry_w(zeta, points)
    if w == 0:
        return math.nan
    return math.degrees(cmath.phase(w))


def _ground_default(theta_deg, albedo):
    """Ground depolarization placeholder: 1 - albedo, zenith-independent."""
    return 1.0 - albedo


def _spectral_default(gamma_deg, theta_deg, wavelength):
    """Spectral weight placeholder: sin^2(gamma) ramped across the band."""
    g = np.radians(gamma_deg)
    return np.sin(g) ** 2 * (0.5 + 0.5 * (wavelength - 320.0) / 400.0)


def _spectral_default_from_cos(cos_gamma, wavelength):
    """Same as :func:`_spectral_default`, fed cos(gamma) directly."""
    return (1.0 - np.asarray(cos_gamma) ** 2) * (
        0.5 + 0.5 * (wavelength - 320.0) / 400.0
    )


def _max_dop_default(turbidity):
    """Turbidity ceiling placeholder: exp(-(T - 1) / 10)."""
    return math.exp(-(turbidity - 1.0) / 10.0)


@dataclass(frozen=True)
class AtmosphericFunctions:
    """Pluggable atmospheric factors entering the degree of polarization.

    ``ground(theta_deg, albedo)`` must be strictly decreasing in albedo and
    map into [0, 1]; ``spectral(gamma_deg, theta_deg, wavelength)`` maps into
    [0, 1]; ``max_dop(turbidity)`` must be strictly decreasing in turbidity
    and map into (0, 1].  All three must accept numpy arrays for the angle
    arguments.  ``spectral_from_cos(cos_gamma, wavelength)``, when provided,
    must equal ``spectral`` evaluated at the corresponding angle; the
    renderer uses it to skip an arccos/sin round trip on the hot path.
    """

    ground: Callable = _ground_default
    spectral: Callable = _spectral_default
    max_dop: Callable = _max_dop_default
    spectral_from_cos: Optional[Callable] = _spectral_default_from_cos

    @classmethod
    def default(cls) -> "AtmosphericFunctions":
        return cls()


def dop(
    zeta: complex,
    d: SkyDirection,
    gamma_deg: float,
    p: SkyParams,
    af: AtmosphericFunctions,
    points: Optional[NeutralPoints] = None,
) -> float:
    """Degree of polarization at one sky point, clamped to [0, 1].

    ``|w| * (theta * ground + (pi/2 - theta) * spectral) * max_dop`` with the
    blend weights in radians.  Exactly zero at the four neutral points.
    """
    if points is None:
        points = place_neutral_points(p)
    w = berry_w(zeta, points)
    theta = math.radians(d.zenith)
    e = af.ground(d.zenith, p.albedo)
    s = af.spectral(gamma_deg, d.zenith, p.wavelength)
    raw = abs(w) * (theta * e + (math.pi / 2.0 - theta) * s) * af.max_dop(p.turbidity)
    return min(1.0, max(0.0, raw))


def chi(h: float, gamma_deg) -> float:
    """Circumsolar anisotropy kernel ``(1 + cos^2 g) / (1 + h^2 - 2h cos g)^1.5``."""
    cg = np.cos(np.radians(gamma_deg))
    den = 1.0 + h * h - 2.0 * h * cg
    if np.any(den <= 0.0):
        raise DomainError(f"anisotropy denominator non-positive for h={h}")
    out = (1.0 + cg**2) / den**1.5
    if np.ndim(gamma_deg) == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class HosekCoefficients:
    """Nine adjustable luminance coefficients.

    ``b`` must be negative so the horizon exponential stays bounded, and the
    resulting luminance must be positive over the visible hemisphere; both
    are checked at construction (the latter on a 1-degree grid).
    """

    a: float
    b: float
    c: float
    d: float
    e: float
    f: float
    g: float
    h: float
    i: float

    def __post_init__(self):
        if self.b >= 0.0:
            raise CoefficientError(f"b must be negative, got {self.b}")
        theta = np.arange(0.0, 90.5, 1.0)
        gamma = np.arange(0.0, 180.5, 1.0)
        tt, gg = np.meshgrid(theta, gamma, indexing="ij")
        values = _li_grid(np.radians(tt), np.radians(gg), self)
        if not np.all(values > 0.0):
            raise CoefficientError("luminance not positive over the hemisphere grid")

    @classmethod
    def for_conditions(cls, turbidity: float, albedo: float) -> "HosekCoefficients":
        """The package's single documented record, modulated by (T, albedo).

        The ambient term brightens with albedo and the circumsolar decay
        amplitude grows with turbidity so that model-error perturbations of
        either parameter are observable in the luminance channel.
        """
        return cls(
            a=0.35,
            b=-0.12,
            c=0.35 + 0.25 * albedo,
            d=1.2 * (1.0 + 0.08 * (turbidity - 3.0)),
            e=-2.0,
            f=0.35,
            g=0.45,
            h=0.8,
            i=0.25,
        )


def _li_grid(theta_rad, gamma_rad, c: HosekCoefficients):
    """Vectorized luminance on radian grids; no positivity check."""
    cos_t = np.cos(theta_rad)
    cos_g = np.cos(gamma_rad)
    den = 1.0 + c.h * c.h - 2.0 * c.h * cos_g
    chi_term = (1.0 + cos_g**2) / den**1.5
    first = 1.0 + c.a * np.exp(c.b / (cos_t + 0.01))
    second = (
        c.c
        + c.d * np.exp(c.e * gamma_rad)
        + c.f * cos_g**2
        + c.g * chi_term
        + c.i * np.sqrt(np.maximum(cos_t, 0.0))
    )
    return first * second


def li(d: SkyDirection, gamma_deg: float, c: HosekCoefficients) -> float:
    """Relative sky radiance at one point; strictly positive.

    ``(1 + a e^{b/(cos th + 0.01)}) (c + d e^{e g} + f cos^2 g + g_coef
    chi(h, g) + i sqrt(cos th))`` with ``g`` in radians inside the
    exponential.
    """
    if not 0.0 <= d.zenith <= 90.0:
        raise DomainError(f"zenith {d.zenith} outside [0, 90]")
    value = float(_li_grid(math.radians(d.zenith), math.radians(gamma_deg), c))
    if value <= 0.0:
        raise CoefficientError(f"non-positive luminance {value}")
    return value


def evector(d: SkyDirection, aop_deg: float) -> np.ndarray:
    """Polarization E-vector in the sun-following frame.

    ``(sin A, cos A, -(sin A sin az + cos A cos az) tan zenith)``; orthogonal
    to the viewing direction by construction.  Raises at the horizon where
    tan blows up.
    """
    if d.zenith >= 90.0:
        raise HorizonError(f"zenith {d.zenith} at or below the horizon")
    a = math.radians(aop_deg)
    az = math.radians(d.azimuth)
    sa, ca = math.sin(a), math.cos(a)
    return np.array(
        [sa, ca, -(sa * math.sin(az) + ca * math.cos(az)) * math.tan(math.radians(d.zenith))]
    )


class SkySample(NamedTuple):
    aop: float
    dop: float
    li: float


def sample_sky(
    d: SkyDirection,
    p: SkyParams,
    af: AtmosphericFunctions,
    c: HosekCoefficients,
    points: Optional[NeutralPoints] = None,
    delta_rule: Optional[DeltaRule] = None,
) -> SkySample:
    """All three sky quantities at one direction; deterministic in its inputs."""
    if not 0.0 <= d.zenith < 90.0:
        raise DomainError(f"zenith {d.zenith} outside [0, 90)")
    if points is None:
        points = place_neutral_points(p, delta_rule)
    zeta = sky_to_complex(d)
    sun = SkyDirection(p.sun_zenith, 0.0)
    gamma = angular_separation(d, sun)
    return SkySample(
        aop=aop(zeta, points),
        dop=dop(zeta, d, gamma, p, af, points=points),
        li=li(d, gamma, c),
    )
