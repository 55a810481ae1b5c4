"""Camera model, render transport, noise injection, sector statistics, raster IO."""

import math

import numpy as np
import pytest

from skypol.errors import DegenerateImageError, DomainError
from skypol.geometry import (
    Attitude,
    attitude_to_rotation,
    sun_frame_rotation,
    unit_to_sky,
    wrap_degrees,
    xi1,
)
from skypol.imager import (
    CameraModel,
    ImageSet,
    NoiseSpec,
    RenderContext,
    add_noise,
    load_image_set,
    pixel_to_ray,
    read_pfm,
    read_pgm,
    render,
    save_image_set,
    sector_ratios,
    write_pfm,
    write_pgm,
)
from skypol.skymodel import (
    AtmosphericFunctions,
    HosekCoefficients,
    SkyParams,
    evector,
    place_neutral_points,
    sample_sky,
)

AF = AtmosphericFunctions.default()


def make_context(scale=16, sun_zenith=50.0, sun_azimuth=30.0, turbidity=4.5, albedo=0.2):
    params = SkyParams(
        sun_zenith=sun_zenith,
        sun_azimuth=sun_azimuth,
        turbidity=turbidity,
        albedo=albedo,
        wavelength=500.0,
    )
    camera = CameraModel().scaled(scale)
    return RenderContext(camera, params)


class TestCameraModel:
    def test_defaults(self):
        cam = CameraModel()
        assert (cam.fov, cam.rows, cam.cols) == (107.95, 2048, 2448)
        assert cam.r_max == 1024.0

    def test_scaled(self):
        cam = CameraModel().scaled(16)
        assert (cam.rows, cam.cols) == (128, 153)

    def test_validation(self):
        with pytest.raises(DomainError):
            CameraModel(fov=180.0)
        with pytest.raises(DomainError):
            CameraModel(rows=4)
        with pytest.raises(DomainError):
            CameraModel(projection="orthographic")


class TestPixelToRay:
    def test_center_is_boresight(self):
        cam = CameraModel(rows=65, cols=65)
        assert np.allclose(pixel_to_ray((32, 32), cam), [0.0, 0.0, 1.0])

    def test_inscribed_circle_edge(self):
        cam = CameraModel()
        ray = pixel_to_ray((cam.rows / 2 - 0.5, cam.cols / 2 - 0.5 + cam.r_max), cam)
        off_axis = math.degrees(math.acos(ray[2]))
        assert off_axis == pytest.approx(cam.fov / 2.0, abs=1e-9)

    def test_corner_invalid(self):
        cam = CameraModel()
        assert pixel_to_ray((0, 0), cam) is None

    def test_out_of_bounds(self):
        cam = CameraModel()
        with pytest.raises(IndexError):
            pixel_to_ray((-1, 0), cam)
        with pytest.raises(IndexError):
            pixel_to_ray((0, cam.cols), cam)

    def test_unit_norm(self):
        cam = CameraModel().scaled(16)
        rng = np.random.default_rng(0)
        for _ in range(100):
            ray = pixel_to_ray(
                (rng.uniform(0, cam.rows - 1), rng.uniform(0, cam.cols - 1)), cam
            )
            if ray is not None:
                assert np.linalg.norm(ray) == pytest.approx(1.0, abs=1e-12)


class TestRender:
    def test_center_pixel_matches_direct_sky_sample(self):
        # odd raster so the boresight hits an exact pixel center; at zero
        # attitude that pixel looks at the zenith
        params = SkyParams(sun_zenith=50.0, sun_azimuth=20.0)
        camera = CameraModel(rows=65, cols=77)
        ctx = RenderContext(camera, params)
        img = ctx.render(Attitude(0.0, 0.0, 0.0))
        zen = sample_sky(
            unit_to_sky([0.0, 0.0, 1.0]), params, ctx.af, ctx.coeffs, points=ctx.points
        )
        assert img.dop[32, 38] == pytest.approx(zen.dop, abs=1e-12)
        assert img.li[32, 38] == pytest.approx(zen.li, rel=1e-12)
        # the image-plane angle at the boresight comes from the projected
        # E-vector; compare through the sun-frame scalar route
        e = evector(unit_to_sky([0.0, 0.0, 1e-12]), zen.aop)  # zenith direction
        m = ctx.frame @ attitude_to_rotation(Attitude(0.0, 0.0, 0.0))
        e_cam = m.T @ e
        expected = math.degrees(math.atan2(e_cam[1], e_cam[0]))
        assert float(xi1(wrap_degrees(img.aop[32, 38] - expected))) < 1e-9

    def test_matches_scalar_transport_on_random_pixels(self):
        # every raster value must equal the per-pixel scalar route:
        # pixel -> ray -> rotate -> sky sample -> project the E-vector
        ctx = make_context(scale=16)
        att = Attitude(20.0, 10.0, -8.0)
        img = ctx.render(att)
        rot = attitude_to_rotation(att)
        m = ctx.frame @ rot
        rng = np.random.default_rng(42)
        rows, cols = np.nonzero(img.mask)
        picks = rng.choice(rows.size, size=200, replace=False)
        for k in picks:
            r, c = int(rows[k]), int(cols[k])
            ray = pixel_to_ray((r, c), ctx.camera)
            d = unit_to_sky(m @ ray)
            s = sample_sky(d, ctx.params, ctx.af, ctx.coeffs, points=ctx.points)
            assert img.dop[r, c] == pytest.approx(s.dop, abs=1e-9)
            assert img.li[r, c] == pytest.approx(s.li, rel=1e-9)
            if s.dop > 1e-9 and not math.isnan(s.aop):
                e_cam = m.T @ evector(d, s.aop)
                expected = math.degrees(math.atan2(e_cam[1], e_cam[0]))
                assert float(xi1(wrap_degrees(img.aop[r, c] - expected))) < 1e-6

    def test_mod180_semantics_through_projection(self):
        # flipping the sky polarization angle by 180 flips the E-vector,
        # which leaves the image-plane angle unchanged mod 180
        ctx = make_context()
        rng = np.random.default_rng(3)
        m = ctx.frame @ attitude_to_rotation(Attitude(15.0, 5.0, 5.0))
        for _ in range(100):
            d = unit_to_sky(m @ np.array([0.0, 0.0, 1.0]))
            aop_deg = float(rng.uniform(-180, 180))
            e1 = m.T @ evector(d, aop_deg)
            e2 = m.T @ evector(d, wrap_degrees(aop_deg + 180.0))
            a1 = math.degrees(math.atan2(e1[1], e1[0]))
            a2 = math.degrees(math.atan2(e2[1], e2[0]))
            assert float(xi1(wrap_degrees(a1 - a2))) < 1e-9

    def test_rotational_symmetry_with_sun_at_zenith(self):
        params = SkyParams(sun_zenith=0.0, sun_azimuth=0.0)
        camera = CameraModel().scaled(16)
        img = RenderContext(camera, params).render(Attitude(0.0, 0.0, 0.0))
        flipped = np.rot90(img.dop, 2)
        both = img.mask & np.rot90(img.mask, 2)
        assert np.allclose(img.dop[both], flipped[both], atol=1e-9)

    def test_neutral_point_produces_dop_hole(self):
        params = SkyParams(sun_zenith=45.0, sun_azimuth=0.0, turbidity=4.0)
        camera = CameraModel().scaled(16)
        ctx = RenderContext(camera, params)
        img = ctx.render(Attitude(0.0, 0.0, 0.0))
        # the upper neutral point (zenith angle 28, on the solar meridian)
        # sits inside the 54-degree half FOV
        hole = np.nanargmin(np.where(img.mask, img.dop, np.nan))
        r, c = divmod(int(hole), camera.cols)
        ray = pixel_to_ray((r, c), camera)
        d = unit_to_sky(ctx.frame @ ray)
        pts = place_neutral_points(params)
        from skypol.geometry import complex_to_sky, angular_separation

        np_dir = complex_to_sky(pts.upper)
        assert angular_separation(d, np_dir) < 1.5
        assert img.dop[r, c] < 0.05

    def test_deterministic(self):
        ctx = make_context(scale=32)
        att = Attitude(-40.0, 6.0, 3.0)
        a = ctx.render(att)
        b = ctx.render(att)
        assert np.array_equal(a.dop, b.dop, equal_nan=True)
        assert np.array_equal(a.aop, b.aop, equal_nan=True)
        assert np.array_equal(a.li, b.li, equal_nan=True)

    def test_one_shot_render_matches_context(self):
        params = SkyParams(sun_zenith=40.0, sun_azimuth=-60.0)
        camera = CameraModel().scaled(32)
        att = Attitude(10.0, -5.0, 5.0)
        a = render(att, params, camera)
        b = RenderContext(camera, params).render(att)
        assert np.array_equal(a.dop, b.dop, equal_nan=True)

    def test_infeasible_attitude_rejected(self):
        ctx = make_context(scale=32)
        with pytest.raises(DomainError):
            ctx.render(Attitude(0.0, 30.0, 30.0))

    def test_mask_and_channel_invariants(self):
        ctx = make_context(scale=16)
        img = ctx.render(Attitude(0.0, 36.0, 0.025))  # at the tilt budget
        assert img.mask.any()
        assert np.all(np.isfinite(img.dop[img.mask]))
        assert np.all((img.dop[img.mask] >= 0.0) & (img.dop[img.mask] <= 1.0))
        assert np.all(img.li[img.mask] > 0.0)
        assert np.all(np.isnan(img.dop[~img.mask]))


class TestNoise:
    def make_image(self):
        return make_context(scale=32).render(Attitude(12.0, 4.0, -6.0))

    def test_level_zero_identity(self):
        img = self.make_image()
        assert add_noise(img, NoiseSpec(level=0.0, seed=1)) is img
        assert add_noise(img, NoiseSpec(enabled=False, seed=1)) is img

    def test_constant_channel_unchanged(self):
        n = 16
        ones = np.ones((n, n))
        mask = np.ones((n, n), dtype=bool)
        img = ImageSet(ones * 10.0, ones * 0.5, ones * 2.0, mask)
        noisy = add_noise(img, NoiseSpec(level=0.05, seed=3))
        assert np.array_equal(noisy.dop, img.dop)
        assert np.array_equal(noisy.li, img.li)

    def test_deterministic_given_seed(self):
        img = self.make_image()
        a = add_noise(img, NoiseSpec(level=0.05, seed=99))
        b = add_noise(img, NoiseSpec(level=0.05, seed=99))
        assert np.array_equal(a.aop, b.aop, equal_nan=True)
        assert np.array_equal(a.dop, b.dop, equal_nan=True)
        assert np.array_equal(a.li, b.li, equal_nan=True)
        c = add_noise(img, NoiseSpec(level=0.05, seed=100))
        assert not np.array_equal(a.dop, c.dop, equal_nan=True)

    def far_from_floor_image(self):
        # high-mean luminance so the zero floor never binds on the noise
        rng = np.random.default_rng(21)
        li = rng.uniform(1000.0, 1100.0, size=(64, 64))
        return synthetic_image(li)

    def test_variance_of_range_scaling(self):
        img = self.far_from_floor_image()
        spread = float(img.li.max() - img.li.min())
        noisy = add_noise(img, NoiseSpec(level=0.05, seed=5))
        diff = noisy.li - img.li
        assert np.std(diff) == pytest.approx(math.sqrt(0.05 * spread), rel=0.05)

    def test_stddev_interpretation_switch(self):
        img = self.far_from_floor_image()
        spread = float(img.li.max() - img.li.min())
        noisy = add_noise(img, NoiseSpec(level=0.05, as_stddev=True, seed=5))
        diff = noisy.li - img.li
        assert np.std(diff) == pytest.approx(0.05 * spread, rel=0.05)

    def test_channel_constraints_after_noise(self):
        img = self.make_image()
        noisy = add_noise(img, NoiseSpec(level=0.2, seed=7))
        assert np.all((noisy.dop[noisy.mask] >= 0.0) & (noisy.dop[noisy.mask] <= 1.0))
        assert np.all(noisy.li[noisy.mask] >= 0.0)
        aop = noisy.aop[noisy.mask]
        assert np.all((aop > -180.0) & (aop <= 180.0))


def synthetic_image(li, mask=None):
    li = np.asarray(li, dtype=float)
    if mask is None:
        mask = np.ones_like(li, dtype=bool)
    zeros = np.zeros_like(li)
    return ImageSet(zeros.copy(), zeros.copy(), li, mask)


def sector_of(rows, cols):
    u = np.arange(cols) - (cols - 1) / 2.0
    v = (rows - 1) / 2.0 - np.arange(rows)
    uu, vv = np.meshgrid(u, v, indexing="xy")
    angle = np.degrees(np.arctan2(vv, uu)) % 360.0
    return np.floor(angle / 45.0).astype(int)


class TestSectorRatios:
    def test_uniform_image(self):
        img = synthetic_image(np.ones((32, 32)))
        assert np.allclose(sector_ratios(img), np.ones(4))

    def test_doubled_first_sector(self):
        sector = sector_of(33, 33)
        li = np.ones((33, 33))
        li[sector == 0] = 2.0
        counts = [(sector == s).sum() for s in range(8)]
        expected = np.array(
            [2.0 * counts[0] / counts[4], 1.0, 1.0, 1.0]
        )
        assert np.allclose(sector_ratios(synthetic_image(li)), expected)

    def test_brute_force_oracle_on_rendered_image(self):
        img = make_context(scale=32, sun_azimuth=75.0).render(Attitude(25.0, 8.0, -10.0))
        sector = sector_of(img.rows, img.cols)
        sums = np.zeros(8)
        for r in range(img.rows):
            for c in range(img.cols):
                if img.mask[r, c] and np.isfinite(img.li[r, c]):
                    sums[sector[r, c]] += img.li[r, c]
        assert np.allclose(sector_ratios(img), sums[:4] / sums[4:], rtol=1e-12)

    def test_empty_sector_error(self):
        li = np.ones((16, 16))
        mask = np.zeros((16, 16), dtype=bool)
        mask[8, 12] = True  # only one sector populated
        with pytest.raises(DegenerateImageError):
            sector_ratios(synthetic_image(li, mask))

    def test_zero_luminance_error(self):
        with pytest.raises(DegenerateImageError):
            sector_ratios(synthetic_image(np.zeros((16, 16))))


class TestRasterIO:
    def test_pfm_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        arr = rng.normal(size=(13, 7)).astype(np.float32).astype(float)
        arr[2, 3] = np.nan
        path = tmp_path / "map.pfm"
        write_pfm(path, arr)
        back = read_pfm(path)
        assert back.shape == arr.shape
        assert np.array_equal(back, arr, equal_nan=True)

    def test_pgm_round_trip(self, tmp_path):
        rng = np.random.default_rng(1)
        mask = rng.uniform(size=(9, 11)) > 0.4
        path = tmp_path / "mask.pgm"
        write_pgm(path, mask)
        assert np.array_equal(read_pgm(path), mask)

    def test_image_set_round_trip(self, tmp_path):
        img = make_context(scale=32).render(Attitude(5.0, 2.0, -2.0))
        stem = tmp_path / "scene"
        paths = save_image_set(stem, img)
        assert [p.name for p in paths] == [
            "scene.aop.pfm",
            "scene.dop.pfm",
            "scene.li.pfm",
            "scene.mask.pgm",
        ]
        back = load_image_set(stem)
        assert np.array_equal(back.mask, img.mask)
        # float32 storage: compare at single precision
        assert np.allclose(
            back.dop[back.mask], img.dop[img.mask], atol=1e-6
        )
        assert np.all(np.isnan(back.aop[~back.mask]))

    def test_shape_mismatch_rejected(self):
        with pytest.raises(DomainError):
            ImageSet(
                np.zeros((4, 4)), np.zeros((4, 4)), np.zeros((4, 5)),
                np.ones((4, 4), dtype=bool),
            )
