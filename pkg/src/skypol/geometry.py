"""Coordinate frames, Euler rotations, the complex sky projection, cyclic wraps.

Conventions used consistently across the package:

* Geographic frame: right-handed East-North-Zenith (X east, Y north, Z up).
* Sun-following frame: Y points along the horizontal solar azimuth, Z at the
  zenith, X = Y x Z.  Sky-direction azimuths are measured from the +Y (solar)
  axis toward +X, so the sun itself always sits at azimuth 0.
* Complex sky plane: stereographic projection from the nadir,
  ``zeta = tan(zenith/2) * exp(i*mu)`` with ``mu`` measured from the X axis
  toward the Y axis, i.e. ``mu = 90 deg - azimuth``.  The zenith maps to 0,
  the antipode of a direction maps to ``-1/conj(zeta)``, and the sun lies on
  the positive imaginary axis.
* Euler sequence: Z-Y-X (yaw -> pitch -> roll), body-to-geographic,
  right-handed.  A +90 deg yaw maps unit-X to unit-Y.
* Public angles are degrees; radians appear only inside trig kernels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, HorizonError, ProjectionError

__all__ = [
    "Attitude",
    "SkyDirection",
    "wrap_aop_diff",
    "wrap_yaw_diff",
    "xi1",
    "xi2",
    "wrap_degrees",
    "wrap_half_open",
    "attitude_to_rotation",
    "sun_frame_rotation",
    "sky_to_complex",
    "complex_to_sky",
    "sky_to_unit",
    "unit_to_sky",
    "antipode",
    "angular_separation",
]


@dataclass(frozen=True)
class Attitude:
    """Camera attitude as Z-Y-X Euler angles in degrees.

    ``yaw`` must lie in [-180, 180].  Pitch/roll feasibility depends on the
    camera field of view (the whole image must stay above the horizon) and is
    checked against a FOV via :meth:`feasible`.
    """

    yaw: float
    pitch: float
    roll: float

    def __post_init__(self):
        object.__setattr__(self, "yaw", float(self.yaw))
        object.__setattr__(self, "pitch", float(self.pitch))
        object.__setattr__(self, "roll", float(self.roll))
        if not -180.0 <= self.yaw <= 180.0:
            raise DomainError(f"yaw {self.yaw} outside [-180, 180]")

    def feasible(self, fov_deg: float) -> bool:
        """True when every ray of a ``fov_deg`` camera stays above the horizon."""
        budget = 90.0 - fov_deg / 2.0
        return (
            abs(self.pitch) <= budget
            and abs(self.roll) <= budget
            and abs(self.pitch) + abs(self.roll) <= budget
        )

    def require_feasible(self, fov_deg: float) -> "Attitude":
        if not self.feasible(fov_deg):
            raise DomainError(
                f"attitude ({self.yaw}, {self.pitch}, {self.roll}) infeasible "
                f"for FOV {fov_deg} (tilt budget {90.0 - fov_deg / 2.0:.3f} deg)"
            )
        return self

    def as_array(self) -> np.ndarray:
        return np.array([self.yaw, self.pitch, self.roll], dtype=float)


@dataclass(frozen=True)
class SkyDirection:
    """A viewing direction: zenith angle and sun-frame azimuth, degrees.

    Azimuth is measured from the solar (+Y) axis toward +X.  Zenith angles in
    (90, 180] denote below-horizon directions; they are legal for the complex
    projection but rejected by operations that only make sense on the visible
    hemisphere.
    """

    zenith: float
    azimuth: float

    def __post_init__(self):
        if not 0.0 <= self.zenith <= 180.0:
            raise DomainError(f"zenith {self.zenith} outside [0, 180]")
        if not -180.0 <= self.azimuth <= 180.0:
            raise DomainError(f"azimuth {self.azimuth} outside [-180, 180]")


def xi1(x):
    """Cyclic fold for polarization-angle differences: [-180, 180] -> [0, 90].

    Accepts scalars or arrays; no domain check.  Equals the four-branch
    piecewise map ``180+x | -x | x | 180-x`` on the four quarters of the
    input interval.
    """
    ax = np.abs(x)
    return np.where(ax <= 90.0, ax, 180.0 - ax)


def xi2(x):
    """Cyclic fold for yaw differences: [-360, 360] -> [0, 180]."""
    ax = np.abs(x)
    return np.where(ax <= 180.0, ax, 360.0 - ax)


def wrap_aop_diff(x: float) -> float:
    """Fold an angle-of-polarization difference into [0, 90] degrees.

    Raises :class:`DomainError` outside [-180, 180].
    """
    if not -180.0 <= x <= 180.0:
        raise DomainError(f"AOP difference {x} outside [-180, 180]")
    return float(xi1(x))


def wrap_yaw_diff(x: float) -> float:
    """Fold a yaw difference into [0, 180] degrees.

    Raises :class:`DomainError` outside [-360, 360].
    """
    if not -360.0 <= x <= 360.0:
        raise DomainError(f"yaw difference {x} outside [-360, 360]")
    return float(xi2(x))


def wrap_degrees(x):
    """Wrap to the smallest-magnitude representative in [-180, 180].

    Branch-free and array-friendly; used for signed yaw displacements.
    """
    return x - 360.0 * np.rint(x / 360.0)


def wrap_half_open(x):
    """Wrap into (-180, 180] (the storage interval of AOP rasters)."""
    y = np.mod(np.asarray(x, dtype=float) + 180.0, 360.0) - 180.0
    y = np.where(y == -180.0, 180.0, y)
    if np.ndim(x) == 0:
        return float(y)
    return y


def _rot_z(deg: float) -> np.ndarray:
    c, s = math.cos(math.radians(deg)), math.sin(math.radians(deg))
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _rot_y(deg: float) -> np.ndarray:
    c, s = math.cos(math.radians(deg)), math.sin(math.radians(deg))
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _rot_x(deg: float) -> np.ndarray:
    c, s = math.cos(math.radians(deg)), math.sin(math.radians(deg))
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def attitude_to_rotation(a: Attitude) -> np.ndarray:
    """Body-to-geographic rotation matrix for the Z-Y-X Euler sequence.

    ``attitude_to_rotation(Attitude(0, 0, 0))`` is the identity; a +90 deg
    yaw maps unit-X (east) onto unit-Y (north).
    """
    return _rot_z(a.yaw) @ _rot_y(a.pitch) @ _rot_x(a.roll)


def sun_frame_rotation(solar_azimuth_deg: float) -> np.ndarray:
    """Geographic -> sun-following rotation for a given solar azimuth.

    Solar azimuth is compass-style: measured from north (+Y geographic)
    toward east (+X geographic).  Rows of the returned matrix are the
    sun-frame axes expressed in geographic coordinates.
    """
    c = math.cos(math.radians(solar_azimuth_deg))
    s = math.sin(math.radians(solar_azimuth_deg))
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def sky_to_unit(d: SkyDirection) -> np.ndarray:
    """Unit vector of a sky direction in its own (sun-following) frame."""
    th = math.radians(d.zenith)
    az = math.radians(d.azimuth)
    return np.array(
        [math.sin(th) * math.sin(az), math.sin(th) * math.cos(az), math.cos(th)]
    )


def unit_to_sky(v) -> SkyDirection:
    """Inverse of :func:`sky_to_unit` for a (not necessarily unit) 3-vector."""
    x, y, z = (float(c) for c in v)
    h = math.hypot(x, y)
    if h == 0.0 and z == 0.0:
        raise DomainError("zero vector has no direction")
    zenith = math.degrees(math.atan2(h, z))
    azimuth = math.degrees(math.atan2(x, y)) if h != 0.0 else 0.0
    return SkyDirection(zenith, azimuth)


def sky_to_complex(d: SkyDirection) -> complex:
    """Stereographic projection of a sky direction from the nadir.

    ``zeta = tan(zenith/2) * exp(i * (90 deg - azimuth))``; the zenith maps
    to 0 and directions below the horizon land outside the unit circle.
    Raises :class:`ProjectionError` at zenith angle 180 (point at infinity).
    """
    if d.zenith >= 180.0:
        raise ProjectionError("zenith angle 180 projects to infinity")
    r = math.tan(math.radians(d.zenith) / 2.0)
    mu = math.radians(90.0 - d.azimuth)
    return complex(r * math.cos(mu), r * math.sin(mu))


def complex_to_sky(zeta: complex) -> SkyDirection:
    """Exact inverse of :func:`sky_to_complex` on finite inputs."""
    if not (math.isfinite(zeta.real) and math.isfinite(zeta.imag)):
        raise DomainError("projection point must be finite")
    r = abs(zeta)
    zenith = math.degrees(2.0 * math.atan(r))
    if r == 0.0:
        return SkyDirection(0.0, 0.0)
    mu = math.degrees(math.atan2(zeta.imag, zeta.real))
    return SkyDirection(zenith, wrap_half_open(90.0 - mu))


def antipode(d: SkyDirection) -> SkyDirection:
    """The diametrically opposite direction on the sphere."""
    return SkyDirection(180.0 - d.zenith, wrap_half_open(d.azimuth + 180.0))


def angular_separation(a: SkyDirection, b: SkyDirection) -> float:
    """Great-circle angle between two directions, degrees in [0, 180].

    Spherical law of cosines:
    ``cos g = cos(za) cos(zb) + sin(za) sin(zb) cos(aza - azb)``.
    """
    za, zb = math.radians(a.zenith), math.radians(b.zenith)
    da = math.radians(a.azimuth - b.azimuth)
    cg = math.cos(za) * math.cos(zb) + math.sin(za) * math.sin(zb) * math.cos(da)
    return math.degrees(math.acos(max(-1.0, min(1.0, cg))))


def draw_feasible_attitude(rng: np.random.Generator, fov_deg: float) -> Attitude:
    """Uniform draw from the feasible attitude set of a ``fov_deg`` camera.

    Yaw is uniform on [-180, 180]; pitch/roll are drawn uniformly on the
    tilt box and rejection-sampled onto the |pitch|+|roll| budget.
    """
    budget = 90.0 - fov_deg / 2.0
    yaw = float(rng.uniform(-180.0, 180.0))
    while True:
        pitch = float(rng.uniform(-budget, budget))
        roll = float(rng.uniform(-budget, budget))
        if abs(pitch) + abs(roll) <= budget:
            return Attitude(yaw, pitch, roll)


def horizon_check(zenith_deg) -> None:
    """Raise :class:`HorizonError` for directions at or below the horizon."""
    if np.any(np.asarray(zenith_deg) >= 90.0):
        raise HorizonError("direction at or below the horizon")
