"""Hypothetical fisheye polarization camera over the analytic sky.

Renders co-registered AOP / DOP / LI rasters for a camera at a given
attitude, injects per-channel Gaussian measurement noise, computes the
opposite-sector luminance ratios used for final-solution disambiguation,
and reads/writes the raster interchange formats (PFM float maps plus a
plain-text PGM validity mask).

The render path is deliberately allocation-free per evaluation: a
:class:`RenderContext` precomputes the pixel ray bundle and the sky-field
constants for one camera/sky configuration and then evaluates whole images
for arbitrary attitudes out of reusable buffers.  Template-matching fitness
runs through the same kernel, so a rendered image compared against itself
matches bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np

from .errors import DegenerateConfigError, DegenerateImageError, DomainError
from .geometry import Attitude, attitude_to_rotation, sun_frame_rotation, wrap_half_open
from .skymodel import (
    AtmosphericFunctions,
    DeltaRule,
    HosekCoefficients,
    NeutralPoints,
    SkyParams,
    _li_grid,
    place_neutral_points,
)

__all__ = [
    "CameraModel",
    "ImageSet",
    "NoiseSpec",
    "RenderContext",
    "RenderSample",
    "pixel_to_ray",
    "render",
    "add_noise",
    "sector_ratios",
    "write_pfm",
    "read_pfm",
    "write_pgm",
    "read_pgm",
    "save_image_set",
    "load_image_set",
]

_DEG = 180.0 / math.pi
_HALF_PI = math.pi / 2.0


@dataclass(frozen=True)
class CameraModel:
    """Equidistant fisheye camera: off-axis angle linear in radial pixel distance.

    ``rows``/``cols`` follow the sensor datasheet labeling (rows x cols
    raster).  The principal point sits at the raster center and the
    inscribed circle of the raster maps to the half field of view.
    """

    fov: float = 107.95
    rows: int = 2048
    cols: int = 2448
    projection: str = "equidistant"

    def __post_init__(self):
        if not 0.0 < self.fov < 180.0:
            raise DomainError(f"FOV {self.fov} outside (0, 180)")
        if self.rows < 8 or self.cols < 8:
            raise DomainError("raster must be at least 8x8 pixels")
        if self.projection != "equidistant":
            raise DomainError(f"unsupported projection {self.projection!r}")

    @property
    def r_max(self) -> float:
        """Inscribed-circle radius in pixels."""
        return min(self.rows, self.cols) / 2.0

    def scaled(self, divisor: int) -> "CameraModel":
        """Same lens at a raster shrunk by an integer divisor."""
        if divisor < 1:
            raise DomainError(f"scale divisor {divisor} must be >= 1")
        return replace(self, rows=self.rows // divisor, cols=self.cols // divisor)


def _centered_coords(cam: CameraModel):
    """Per-pixel image-plane offsets: u along +columns, v along -rows (up)."""
    u = np.arange(cam.cols, dtype=float) - (cam.cols - 1) / 2.0
    v = (cam.rows - 1) / 2.0 - np.arange(cam.rows, dtype=float)
    return np.meshgrid(u, v, indexing="xy")


def pixel_to_ray(px, cam: CameraModel) -> Optional[np.ndarray]:
    """Unit ray in the camera frame for a (row, col) pixel coordinate.

    Returns None for pixels beyond the inscribed circle (outside the FOV);
    raises IndexError for coordinates outside the raster.  Fractional
    coordinates are allowed; pixel centers sit at integer indices.
    """
    row, col = float(px[0]), float(px[1])
    if not (0.0 <= row < cam.rows and 0.0 <= col < cam.cols):
        raise IndexError(f"pixel {px} outside {cam.rows}x{cam.cols} raster")
    u = col - (cam.cols - 1) / 2.0
    v = (cam.rows - 1) / 2.0 - row
    r = math.hypot(u, v)
    if r > cam.r_max:
        return None
    theta = math.radians(cam.fov / 2.0) * r / cam.r_max
    if r == 0.0:
        return np.array([0.0, 0.0, 1.0])
    s = math.sin(theta) / r
    return np.array([u * s, v * s, math.cos(theta)])


@dataclass
class ImageSet:
    """Co-registered AOP / DOP / LI rasters plus their shared validity mask.

    AOP is stored in (-180, 180] degrees with mod-180 semantics (values 180
    apart are the same polarization state) and NaN where undefined; DOP lies
    in [0, 1] and LI is nonnegative on valid pixels.  Invalid pixels hold
    NaN in all three channels.
    """

    aop: np.ndarray
    dop: np.ndarray
    li: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        shapes = {self.aop.shape, self.dop.shape, self.li.shape, self.mask.shape}
        if len(shapes) != 1:
            raise DomainError(f"channel shapes differ: {shapes}")

    @property
    def rows(self) -> int:
        return self.aop.shape[0]

    @property
    def cols(self) -> int:
        return self.aop.shape[1]


@dataclass(frozen=True)
class NoiseSpec:
    """Zero-mean Gaussian measurement noise scaled to each channel's range.

    ``level`` multiplies (channel max - channel min) over valid pixels; by
    default that product is the noise *variance* (the literal sensor-spec
    reading), with ``as_stddev`` switching to the dimensionally conventional
    interpretation.
    """

    enabled: bool = True
    level: float = 0.05
    as_stddev: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.level < 0.0:
            raise DomainError(f"noise level {self.level} must be >= 0")


class RenderSample(NamedTuple):
    """Flat per-valid-pixel channel values for one attitude."""

    dop: np.ndarray
    aop: np.ndarray
    li: Optional[np.ndarray]
    invalid: Optional[np.ndarray]  # below-horizon pixels, None when all valid


class _Workspace:
    """Reusable buffers for the render kernel (one per context; not shared)."""

    def __init__(self, n: int):
        self.xyz = np.empty((3, n))
        self.e3 = np.empty((3, n))
        self.exy = np.empty((2, n))
        for name in (
            "inv zr zi t1 t2 az hr hi tmp tmp2 blend wabs th thd cg dop aop"
        ).split():
            setattr(self, name, np.empty(n))


class RenderContext:
    """Camera + sky configuration with precomputed state for fast rendering.

    Not safe for concurrent use from multiple threads (the evaluation
    buffers are shared); build one context per worker.
    """

    def __init__(
        self,
        camera: CameraModel,
        params: SkyParams,
        af: Optional[AtmosphericFunctions] = None,
        coeffs: Optional[HosekCoefficients] = None,
        points: Optional[NeutralPoints] = None,
        delta_rule: Optional[DeltaRule] = None,
    ):
        self.camera = camera
        self.params = params
        self.af = af if af is not None else AtmosphericFunctions.default()
        self.coeffs = (
            coeffs
            if coeffs is not None
            else HosekCoefficients.for_conditions(params.turbidity, params.albedo)
        )
        self.points = (
            points if points is not None else place_neutral_points(params, delta_rule)
        )

        # Pixel ray bundle inside the FOV disc (flattened row-major indices).
        u, v = _centered_coords(camera)
        r = np.hypot(u, v)
        fov_ok = r <= camera.r_max
        self.valid_index = np.flatnonzero(fov_ok.ravel())
        theta = np.radians(camera.fov / 2.0) * r.ravel()[self.valid_index] / camera.r_max
        uu = u.ravel()[self.valid_index]
        vv = v.ravel()[self.valid_index]
        rr = np.maximum(r.ravel()[self.valid_index], np.finfo(float).tiny)
        sin_t = np.sin(theta)
        rays = np.empty((3, self.valid_index.size))
        rays[0] = sin_t * uu / rr
        rays[1] = sin_t * vv / rr
        rays[2] = np.cos(theta)
        center = r.ravel()[self.valid_index] == 0.0
        rays[0][center] = 0.0
        rays[1][center] = 0.0
        rays[2][center] = 1.0
        self.rays = np.ascontiguousarray(rays)

        # Sun-frame transform and sun direction (sun-frame coordinates).
        self.frame = sun_frame_rotation(params.sun_azimuth)
        zen = math.radians(params.sun_zenith)
        self.sun_y = math.sin(zen)
        self.sun_z = math.cos(zen)

        # Polarization-field constants.  Neutral points produced by the
        # placement rule sit exactly on the imaginary axis, where the quartic
        # splits into two real-coefficient quadratics; arbitrary points fall
        # back to a Horner evaluation of the expanded numerator.
        z1, z2 = self.points.upper, self.points.lower
        if z1 == 0 or z2 == 0:
            raise DegenerateConfigError("neutral point at the zenith")
        c1 = 1.0 / z1.conjugate()
        c2 = 1.0 / z2.conjugate()
        self.w_scale = -4.0 / (abs(z1 + c1) * abs(z2 + c2))
        self._meridian = z1.real == 0.0 and z2.real == 0.0
        if self._meridian:
            t1, t2 = z1.imag, z2.imag
            self._q1 = 1.0 / t1 - t1
            self._q2 = 1.0 / t2 - t2
        else:
            self._poly = np.poly([z1, z2, -c1, -c2])[1:]  # monic: keep c3..c0

        self.m_dop = float(self.af.max_dop(params.turbidity))
        self._ws = _Workspace(self.valid_index.size)

    # -- kernel -----------------------------------------------------------

    def sample_valid_pixels(self, a: Attitude, include_li: bool = False) -> RenderSample:
        """Evaluate DOP, image-plane AOP (and optionally LI) for one attitude.

        Values are float64 over the FOV-disc pixels in row-major order.
        Pixels whose ray lands at or below the horizon are reported through
        ``invalid`` and carry NaN channel values.
        """
        ws = self._ws
        m = self.frame @ attitude_to_rotation(a)
        np.dot(m, self.rays, out=ws.xyz)
        x, y, z = ws.xyz[0], ws.xyz[1], ws.xyz[2]

        invalid = None
        if z.min() <= 0.0:
            invalid = z <= 0.0

        # Stereographic projection without trig: zeta = (x + i y) / (1 + z).
        np.add(z, 1.0, out=ws.inv)
        np.divide(1.0, ws.inv, out=ws.inv)
        np.multiply(x, ws.inv, out=ws.zr)
        np.multiply(y, ws.inv, out=ws.zi)
        zr, zi = ws.zr, ws.zi
        np.multiply(zr, zr, out=ws.t1)
        np.multiply(zi, zi, out=ws.t2)
        np.add(ws.t1, ws.t2, out=ws.az)

        wi, wr = ws.e3[0], ws.e3[1]  # field components land in the e-vector stack
        if self._meridian:
            # (z^2 + i q1 z + 1)(z^2 + i q2 z + 1) with real q1, q2
            z2r, z2i = ws.tmp, ws.tmp2
            np.subtract(ws.t1, ws.t2, out=z2r)
            np.multiply(zr, zi, out=z2i)
            z2i *= 2.0
            p1r, p1i, p2r, p2i = ws.hr, ws.hi, ws.blend, ws.wabs  # scratch reuse
            np.multiply(zi, self._q1, out=p1r)
            np.subtract(z2r, p1r, out=p1r)
            p1r += 1.0
            np.multiply(zr, self._q1, out=p1i)
            p1i += z2i
            np.multiply(zi, self._q2, out=p2r)
            np.subtract(z2r, p2r, out=p2r)
            p2r += 1.0
            np.multiply(zr, self._q2, out=p2i)
            p2i += z2i
            np.multiply(p1r, p2r, out=wr)
            np.multiply(p1i, p2i, out=ws.th)
            wr -= ws.th
            np.multiply(p1r, p2i, out=wi)
            np.multiply(p1i, p2r, out=ws.th)
            wi += ws.th
        else:
            c3, c2, c1, c0 = self._poly
            hr, hi = ws.hr, ws.hi
            np.add(zr, c3.real, out=hr)
            np.add(zi, c3.imag, out=hi)
            for ck in (c2, c1, c0):
                np.multiply(hr, zr, out=ws.tmp)
                np.multiply(hi, zi, out=ws.tmp2)
                ws.tmp -= ws.tmp2
                np.multiply(hr, zi, out=ws.tmp2)
                ws.tmp2 += hi * zr
                np.add(ws.tmp, ck.real, out=hr)
                np.add(ws.tmp2, ck.imag, out=hi)
            wr[...] = hr
            wi[...] = hi

        # w = w_scale * numerator / (1 + |zeta|^2)^2
        np.add(ws.az, 1.0, out=ws.tmp)
        np.multiply(ws.tmp, ws.tmp, out=ws.tmp)
        np.divide(self.w_scale, ws.tmp, out=ws.tmp)
        wr *= ws.tmp
        wi *= ws.tmp
        np.multiply(wr, wr, out=ws.wabs)
        np.multiply(wi, wi, out=ws.tmp)
        ws.wabs += ws.tmp
        np.sqrt(ws.wabs, out=ws.wabs)

        # Zenith angle and sun separation (as cosine).
        np.clip(z, -1.0, 1.0, out=ws.th)
        np.arccos(ws.th, out=ws.th)
        np.multiply(ws.th, _DEG, out=ws.thd)
        np.multiply(y, self.sun_y, out=ws.cg)
        np.multiply(z, self.sun_z, out=ws.tmp)
        ws.cg += ws.tmp
        np.clip(ws.cg, -1.0, 1.0, out=ws.cg)

        # DOP blend: |w| * (theta*E + (pi/2 - theta)*S) * m_dop
        e_term = self.af.ground(ws.thd, self.params.albedo)
        if self.af.spectral_from_cos is not None:
            s_term = self.af.spectral_from_cos(ws.cg, self.params.wavelength)
        else:
            gamma_deg = np.degrees(np.arccos(ws.cg))
            s_term = self.af.spectral(gamma_deg, ws.thd, self.params.wavelength)
        np.subtract(_HALF_PI, ws.th, out=ws.blend)
        ws.blend *= s_term
        np.multiply(ws.th, e_term, out=ws.tmp)
        ws.blend += ws.tmp
        ws.blend *= self.m_dop
        np.multiply(ws.wabs, ws.blend, out=ws.dop)
        np.clip(ws.dop, 0.0, 1.0, out=ws.dop)

        # Image-plane AOP: rotate the E-vector into the camera frame, drop
        # the boresight component, measure from the pixel-row axis.  The
        # sun-frame E-vector is proportional to (Im w, Re w, -(Im w x +
        # Re w y)/z), so no sky-AOP trig is needed.
        ez = ws.e3[2]
        np.multiply(wi, x, out=ez)
        np.multiply(wr, y, out=ws.tmp)
        ez += ws.tmp
        np.divide(ez, z, out=ez)
        np.negative(ez, out=ez)
        np.dot(np.ascontiguousarray(m[:, :2].T), ws.e3, out=ws.exy)
        np.arctan2(ws.exy[1], ws.exy[0], out=ws.aop)
        ws.aop *= _DEG

        dop_out = ws.dop.copy()
        aop_out = ws.aop.copy()
        if ws.wabs.min() == 0.0:
            aop_out[ws.wabs == 0.0] = np.nan
        li_out = None
        if include_li:
            gamma_rad = np.arccos(ws.cg)
            li_out = _li_grid(ws.th.copy(), gamma_rad, self.coeffs)
        if invalid is not None:
            dop_out[invalid] = np.nan
            aop_out[invalid] = np.nan
            if li_out is not None:
                li_out[invalid] = np.nan
        return RenderSample(dop_out, aop_out, li_out, invalid)

    def render(self, a: Attitude) -> ImageSet:
        """Full ImageSet for one attitude; requires a feasible attitude."""
        a.require_feasible(self.camera.fov)
        sample = self.sample_valid_pixels(a, include_li=True)
        if sample.invalid is not None:
            depth = self._ws.xyz[2][sample.invalid].min()
            if depth < -1e-9:
                raise RuntimeError(
                    f"internal consistency error: pixel {math.degrees(math.asin(-depth)):.4f} "
                    "deg below the horizon for a feasible attitude"
                )
        shape = (self.camera.rows, self.camera.cols)
        n = shape[0] * shape[1]
        rasters = []
        for flat in (sample.aop, sample.dop, sample.li):
            full = np.full(n, np.nan)
            full[self.valid_index] = flat
            rasters.append(full.reshape(shape))
        mask = np.zeros(n, dtype=bool)
        valid = np.ones(self.valid_index.size, dtype=bool)
        if sample.invalid is not None:
            valid &= ~sample.invalid
        mask[self.valid_index] = valid
        return ImageSet(rasters[0], rasters[1], rasters[2], mask.reshape(shape))


def render(
    a: Attitude,
    p: SkyParams,
    cam: CameraModel,
    af: Optional[AtmosphericFunctions] = None,
    c: Optional[HosekCoefficients] = None,
    points: Optional[NeutralPoints] = None,
    delta_rule: Optional[DeltaRule] = None,
) -> ImageSet:
    """One-shot render; builds a transient :class:`RenderContext`."""
    return RenderContext(cam, p, af, c, points, delta_rule).render(a)


def add_noise(img: ImageSet, spec: NoiseSpec) -> ImageSet:
    """Per-channel zero-mean Gaussian noise scaled to each channel's range.

    Channel streams are independent counter-based generators derived from
    ``spec.seed`` (0=AOP, 1=DOP, 2=LI) drawn over the full raster in
    row-major order, so the result is independent of any evaluation
    schedule.  AOP is re-wrapped into (-180, 180], DOP re-clamped to [0, 1],
    LI floored at 0; undefined pixels stay undefined.
    """
    if not spec.enabled or spec.level == 0.0:
        return img
    shape = img.aop.shape
    out = []
    for channel, values in enumerate((img.aop, img.dop, img.li)):
        finite = values[img.mask]
        finite = finite[np.isfinite(finite)]
        if finite.size == 0:
            out.append(values.copy())
            continue
        spread = float(finite.max() - finite.min())
        if spread == 0.0:
            out.append(values.copy())
            continue
        sd = spec.level * spread if spec.as_stddev else math.sqrt(spec.level * spread)
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([spec.seed, channel])))
        noisy = values + sd * rng.standard_normal(shape)
        out.append(noisy)
    noisy_aop = wrap_half_open(out[0])
    noisy_aop = np.where(np.isnan(out[0]), np.nan, noisy_aop)
    noisy_dop = np.clip(out[1], 0.0, 1.0)
    noisy_li = np.maximum(out[2], 0.0)
    return ImageSet(noisy_aop, noisy_dop, noisy_li, img.mask.copy())


class _RasterDims:
    """Duck-typed stand-in so _centered_coords works for bare rasters."""

    def __init__(self, rows: int, cols: int):
        self.rows = rows
        self.cols = cols


def sector_ratios(img: ImageSet) -> np.ndarray:
    """Opposite-sector luminance ratios of the eight 45-degree sectors.

    Sectors are numbered 1..8 counterclockwise from the pixel-row axis about
    the raster center; the result is ``sum(LI_n) / sum(LI_{n+4})`` for
    n = 1..4.  Raises :class:`DegenerateImageError` when a sector has no
    valid pixels or zero total luminance.
    """
    u, v = _centered_coords(_RasterDims(img.rows, img.cols))
    angle = np.degrees(np.arctan2(v, u)) % 360.0
    sector = np.floor(angle / 45.0).astype(int)
    sector = np.clip(sector, 0, 7)
    ok = img.mask & np.isfinite(img.li)
    sums = np.zeros(8)
    for s in range(8):
        sel = ok & (sector == s)
        if not sel.any():
            raise DegenerateImageError(f"sector {s + 1} has no valid pixels")
        sums[s] = img.li[sel].sum()
    if np.any(sums[4:] == 0.0):
        raise DegenerateImageError("opposite sector has zero total luminance")
    return sums[:4] / sums[4:]


# -- raster interchange ----------------------------------------------------


def write_pfm(path, arr: np.ndarray) -> None:
    """Grayscale little-endian PFM (bottom-up rows, float32)."""
    arr = np.asarray(arr, dtype=np.float32)
    if arr.ndim != 2:
        raise DomainError("PFM export expects a 2-D raster")
    with open(path, "wb") as fh:
        fh.write(b"Pf\n")
        fh.write(f"{arr.shape[1]} {arr.shape[0]}\n".encode())
        fh.write(b"-1.0\n")
        fh.write(np.flipud(arr).astype("<f4").tobytes())


def read_pfm(path) -> np.ndarray:
    """Read a grayscale PFM written by :func:`write_pfm` (float64 result)."""
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        if magic != b"Pf":
            raise DomainError(f"not a grayscale PFM: magic {magic!r}")
        dims = fh.readline().split()
        cols, rows = int(dims[0]), int(dims[1])
        scale = float(fh.readline())
        dtype = "<f4" if scale < 0 else ">f4"
        data = np.frombuffer(fh.read(rows * cols * 4), dtype=dtype)
    return np.flipud(data.reshape(rows, cols)).astype(float)


def write_pgm(path, mask: np.ndarray) -> None:
    """Plain-text PGM (P2) with 255 for valid pixels and 0 elsewhere."""
    mask = np.asarray(mask)
    with open(path, "w") as fh:
        fh.write(f"P2\n{mask.shape[1]} {mask.shape[0]}\n255\n")
        for row in mask:
            fh.write(" ".join("255" if m else "0" for m in row) + "\n")


def read_pgm(path) -> np.ndarray:
    """Read a plain-text PGM into a boolean mask."""
    with open(path) as fh:
        tokens = [t for line in fh for t in line.split("#")[0].split()]
    if tokens[0] != "P2":
        raise DomainError(f"not a plain PGM: magic {tokens[0]!r}")
    cols, rows = int(tokens[1]), int(tokens[2])
    values = np.array(tokens[4 : 4 + rows * cols], dtype=int)
    return (values != 0).reshape(rows, cols)


def save_image_set(stem, img: ImageSet) -> list:
    """Write ``<stem>.{aop,dop,li}.pfm`` and ``<stem>.mask.pgm``."""
    stem = Path(stem)
    paths = [
        stem.with_name(stem.name + ".aop.pfm"),
        stem.with_name(stem.name + ".dop.pfm"),
        stem.with_name(stem.name + ".li.pfm"),
        stem.with_name(stem.name + ".mask.pgm"),
    ]
    write_pfm(paths[0], img.aop)
    write_pfm(paths[1], img.dop)
    write_pfm(paths[2], img.li)
    write_pgm(paths[3], img.mask)
    return paths


def load_image_set(stem) -> ImageSet:
    """Read an image set written by :func:`save_image_set`."""
    stem = Path(stem)
    aop = read_pfm(stem.with_name(stem.name + ".aop.pfm"))
    dop = read_pfm(stem.with_name(stem.name + ".dop.pfm"))
    li = read_pfm(stem.with_name(stem.name + ".li.pfm"))
    mask = read_pgm(stem.with_name(stem.name + ".mask.pgm"))
    for raster in (aop, dop, li):
        raster[~mask] = np.nan
    return ImageSet(aop, dop, li, mask)
