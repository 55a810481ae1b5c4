"""Sky model: neutral-point field, DOP blend, luminance, E-vector."""

import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from skypol.errors import CoefficientError, DegenerateConfigError, DomainError, HorizonError
from skypol.geometry import SkyDirection, angular_separation, complex_to_sky, sky_to_complex, sky_to_unit
from skypol.skymodel import (
    AtmosphericFunctions,
    HosekCoefficients,
    NeutralPoints,
    SkyParams,
    aop,
    berry_w,
    chi,
    default_neutral_offset,
    dop,
    evector,
    li,
    place_neutral_points,
    sample_sky,
)

AF = AtmosphericFunctions.default()


def random_params(rng):
    return SkyParams(
        sun_zenith=float(rng.uniform(0.0, 90.0)),
        sun_azimuth=float(rng.uniform(-180.0, 180.0)),
        turbidity=float(rng.uniform(3.0, 7.0)),
        albedo=float(rng.uniform(0.1, 0.4)),
        wavelength=float(rng.uniform(320.0, 720.0)),
    )


class TestSkyParams:
    def test_validation(self):
        with pytest.raises(DomainError):
            SkyParams(sun_zenith=91.0)
        with pytest.raises(DomainError):
            SkyParams(sun_zenith=45.0, turbidity=0.5)
        with pytest.raises(DomainError):
            SkyParams(sun_zenith=45.0, wavelength=300.0)

    def test_sun_altitude(self):
        assert SkyParams(sun_zenith=60.0).sun_altitude == 30.0


class TestNeutralPoints:
    def test_default_offset_rule(self):
        assert default_neutral_offset(3.0, 450.0) == 15.0
        assert default_neutral_offset(7.0, 450.0) == 23.0
        assert default_neutral_offset(1.0, 450.0) == 11.0
        assert default_neutral_offset(10.0, 450.0) == 29.0

    def test_placement_on_meridian(self):
        # sun zenith 45, T=4 -> delta 17: points at zenith angles 28 and 62
        pts = place_neutral_points(SkyParams(sun_zenith=45.0, turbidity=4.0))
        up = complex_to_sky(pts.upper)
        low = complex_to_sky(pts.lower)
        assert up.zenith == pytest.approx(28.0, abs=1e-9)
        assert up.azimuth == pytest.approx(0.0, abs=1e-9)
        assert low.zenith == pytest.approx(62.0, abs=1e-9)
        assert low.azimuth == pytest.approx(0.0, abs=1e-9)
        assert pts.upper.real == 0.0 and pts.lower.real == 0.0

    def test_reflection_through_zenith(self):
        # sun at the zenith: the two points straddle it, 2*delta apart
        pts = place_neutral_points(SkyParams(sun_zenith=0.0, turbidity=4.0))
        up = complex_to_sky(pts.upper)
        low = complex_to_sky(pts.lower)
        assert up.zenith == pytest.approx(17.0, abs=1e-9)
        assert abs(up.azimuth) == pytest.approx(180.0, abs=1e-9)
        assert low.zenith == pytest.approx(17.0, abs=1e-9)
        assert low.azimuth == pytest.approx(0.0, abs=1e-9)

    def test_antipodes(self):
        pts = place_neutral_points(SkyParams(sun_zenith=45.0))
        assert pts.upper_antipode == -1.0 / pts.upper.conjugate()
        assert len(pts.all_four()) == 4

    def test_coincident_points_rejected(self):
        with pytest.raises(DegenerateConfigError):
            NeutralPoints(0.3j, 0.3j)


class TestBerryField:
    def test_vanishes_at_all_four_points(self):
        pts = place_neutral_points(SkyParams(sun_zenith=45.0))
        for zeta in pts.all_four():
            assert berry_w(zeta, pts) == 0.0

    def test_frozen_oracle(self):
        # straight-line evaluation at zeta=1 with points +-0.2i gives exactly -1
        # (numerator 1.04 * 26, denominator 4 * 5.2 * 5.2); high-precision
        # oracle value -1.0 + 0i
        pts = NeutralPoints(0.2j, -0.2j)
        w = berry_w(1.0 + 0.0j, pts)
        assert w == pytest.approx(-1.0 + 0.0j, abs=1e-14)

    def test_degenerate_zero_point(self):
        with pytest.raises(DegenerateConfigError):
            berry_w(0.5 + 0.0j, NeutralPoints(0.0j, 0.3j))

    def test_nonzero_away_from_points(self):
        rng = np.random.default_rng(3)
        pts = place_neutral_points(random_params(rng))
        zeros = pts.all_four()
        count = 0
        while count < 10000:
            zeta = complex(rng.uniform(-3, 3), rng.uniform(-3, 3))
            if min(abs(zeta - z) for z in zeros) < 1e-8:
                continue
            assert abs(berry_w(zeta, pts)) > 0.0
            count += 1


class TestAop:
    def test_arg_of_negative_real(self):
        pts = NeutralPoints(0.2j, -0.2j)
        assert aop(1.0 + 0.0j, pts) == pytest.approx(180.0, abs=1e-12)

    def test_arg_of_positive_real(self):
        # rotating the previous configuration's input by 90 degrees flips signs:
        # verify against cmath on a few probes instead of hunting a special case
        pts = place_neutral_points(SkyParams(sun_zenith=40.0))
        rng = np.random.default_rng(5)
        for _ in range(50):
            zeta = complex(rng.uniform(-2, 2), rng.uniform(-2, 2))
            w = berry_w(zeta, pts)
            assert aop(zeta, pts) == pytest.approx(math.degrees(cmath.phase(w)), abs=1e-12)

    def test_undefined_at_neutral_point(self):
        pts = place_neutral_points(SkyParams(sun_zenith=45.0))
        assert math.isnan(aop(pts.upper, pts))


class TestAtmosphericDefaults:
    def test_ground_monotone_in_albedo(self):
        assert AF.ground(40.0, 0.1) > AF.ground(40.0, 0.4)

    def test_max_dop_monotone_in_turbidity(self):
        assert AF.max_dop(3.0) > AF.max_dop(7.0)

    def test_ranges(self):
        gammas = np.linspace(0.0, 180.0, 181)
        s = AF.spectral(gammas, 45.0, 720.0)
        assert np.all((0.0 <= s) & (s <= 1.0))
        assert 0.0 <= AF.ground(10.0, 0.5) <= 1.0
        assert 0.0 < AF.max_dop(10.0) <= 1.0

    def test_spectral_cos_hook_consistent(self):
        gammas = np.linspace(0.0, 180.0, 361)
        direct = AF.spectral(gammas, 30.0, 550.0)
        hook = AF.spectral_from_cos(np.cos(np.radians(gammas)), 550.0)
        assert np.allclose(direct, hook, atol=1e-12)


class TestDop:
    def test_zero_at_neutral_point(self):
        p = SkyParams(sun_zenith=45.0)
        pts = place_neutral_points(p)
        d = complex_to_sky(pts.upper)
        gamma = angular_separation(d, SkyDirection(p.sun_zenith, 0.0))
        assert dop(pts.upper, d, gamma, p, AF, points=pts) == 0.0

    def test_turbidity_monotonicity(self):
        # same pixel, same geometry: higher turbidity strictly lowers DOP
        d = SkyDirection(50.0, 70.0)
        zeta = sky_to_complex(d)
        pts = place_neutral_points(SkyParams(sun_zenith=45.0, turbidity=4.0))
        lo = dop(zeta, d, 80.0, SkyParams(sun_zenith=45.0, turbidity=3.0), AF, points=pts)
        hi = dop(zeta, d, 80.0, SkyParams(sun_zenith=45.0, turbidity=7.0), AF, points=pts)
        assert lo > hi

    def test_frozen_oracle(self):
        # zenith 60, azimuth 80, gamma 90, sun zenith 45, T=4, rho=0.1,
        # lambda=450; straight-line high-precision evaluation of the blend
        p = SkyParams(sun_zenith=45.0, turbidity=4.0, albedo=0.1, wavelength=450.0)
        d = SkyDirection(60.0, 80.0)
        value = dop(sky_to_complex(d), d, 90.0, p, AF)
        assert value == pytest.approx(0.76302832225292536, abs=1e-12)

    def test_clamped_to_unit_interval(self):
        rng = np.random.default_rng(11)
        p = SkyParams(sun_zenith=45.0, turbidity=3.0, albedo=0.1, wavelength=720.0)
        pts = place_neutral_points(p)
        for _ in range(300):
            d = SkyDirection(float(rng.uniform(0, 89.9)), float(rng.uniform(-180, 180)))
            g = angular_separation(d, SkyDirection(p.sun_zenith, 0.0))
            v = dop(sky_to_complex(d), d, g, p, AF, points=pts)
            assert 0.0 <= v <= 1.0

    def test_preclamp_maximum_regression(self):
        # recorded once over the reference configuration grid (sun zenith 45,
        # T=4, rho=0.1, lambda=450; 1-degree grid); pinned against refactors
        p = SkyParams(sun_zenith=45.0, turbidity=4.0, albedo=0.1, wavelength=450.0)
        pts = place_neutral_points(p)
        m = AF.max_dop(p.turbidity)
        sun = SkyDirection(p.sun_zenith, 0.0)
        best = 0.0
        for zen in range(0, 90):
            for az in range(-179, 181):
                d = SkyDirection(float(zen), float(az))
                g = angular_separation(d, sun)
                theta = math.radians(d.zenith)
                raw = (
                    abs(berry_w(sky_to_complex(d), pts))
                    * (theta * AF.ground(d.zenith, p.albedo)
                       + (math.pi / 2 - theta) * AF.spectral(g, d.zenith, p.wavelength))
                    * m
                )
                best = max(best, raw)
        assert best == pytest.approx(1.0441819099924738, abs=1e-9)


class TestChi:
    def test_isotropic_at_right_angle(self):
        assert chi(0.0, 90.0) == pytest.approx(1.0, abs=1e-12)

    def test_isotropic_forward(self):
        assert chi(0.0, 0.0) == pytest.approx(2.0, abs=1e-12)

    def test_forward_lobe(self):
        # (1 - 0.8)^2 = 0.04 -> 2 / 0.04^1.5 = 250
        assert chi(0.8, 0.0) == pytest.approx(250.0, rel=1e-12)

    def test_denominator_error(self):
        with pytest.raises(DomainError):
            chi(1.0, 0.0)


class TestLuminance:
    def test_constant_record(self):
        c = HosekCoefficients(a=0.0, b=-0.1, c=1.0, d=0.0, e=0.0, f=0.0, g=0.0, h=0.0, i=0.0)
        for zen, gam in [(0.0, 0.0), (45.0, 90.0), (89.0, 170.0)]:
            assert li(SkyDirection(zen, 0.0), gam, c) == pytest.approx(1.0, abs=1e-12)

    def test_cosine_squared_record(self):
        c = HosekCoefficients(a=0.0, b=-0.1, c=0.0, d=0.0, e=0.0, f=1.0, g=0.0, h=0.0, i=0.0)
        assert li(SkyDirection(30.0, 0.0), 0.0, c) == pytest.approx(1.0, abs=1e-12)

    def test_default_record_frozen_oracle(self):
        c = HosekCoefficients.for_conditions(4.0, 0.1)
        value = li(SkyDirection(45.0, 0.0), 45.0, c)
        assert value == pytest.approx(3.7462180943729284, rel=1e-12)

    def test_b_sign_enforced(self):
        with pytest.raises(CoefficientError):
            HosekCoefficients(a=0.0, b=0.1, c=1.0, d=0.0, e=0.0, f=0.0, g=0.0, h=0.0, i=0.0)

    def test_negative_grid_rejected(self):
        with pytest.raises(CoefficientError):
            HosekCoefficients(a=0.0, b=-0.1, c=-5.0, d=0.0, e=0.0, f=1.0, g=0.0, h=0.0, i=0.0)

    def test_positive_over_grid(self):
        c = HosekCoefficients.for_conditions(5.0, 0.3)
        rng = np.random.default_rng(2)
        for _ in range(500):
            zen = float(rng.uniform(0, 90))
            gam = float(rng.uniform(0, 180))
            assert li(SkyDirection(zen, 0.0), gam, c) > 0.0

    def test_modulation_by_conditions(self):
        base = HosekCoefficients.for_conditions(4.0, 0.1)
        hazier = HosekCoefficients.for_conditions(6.0, 0.1)
        brighter = HosekCoefficients.for_conditions(4.0, 0.4)
        assert hazier.d > base.d
        assert brighter.c > base.c

    def test_zenith_domain(self):
        c = HosekCoefficients.for_conditions(4.0, 0.1)
        with pytest.raises(DomainError):
            li(SkyDirection(95.0, 0.0), 10.0, c)


class TestEvector:
    def test_zenith_aop_zero(self):
        assert np.allclose(evector(SkyDirection(0.0, 0.0), 0.0), [0.0, 1.0, 0.0])

    def test_zenith_aop_ninety(self):
        assert np.allclose(evector(SkyDirection(0.0, 0.0), 90.0), [1.0, 0.0, 0.0])

    def test_horizon_error(self):
        with pytest.raises(HorizonError):
            evector(SkyDirection(90.0, 0.0), 10.0)

    @given(
        st.floats(0.0, 89.99),
        st.floats(-180.0, 180.0),
        st.floats(-180.0, 180.0),
    )
    @settings(max_examples=500, deadline=None)
    def test_orthogonal_to_view_direction(self, zenith, azimuth, aop_deg):
        d = SkyDirection(zenith, azimuth)
        assert abs(float(np.dot(evector(d, aop_deg), sky_to_unit(d)))) < 1e-12


class TestSampleSky:
    COEFFS = HosekCoefficients.for_conditions(4.0, 0.1)

    def test_dop_zero_at_neutral_direction(self):
        p = SkyParams(sun_zenith=45.0)
        pts = place_neutral_points(p)
        # exactly at the point the field is exactly zero
        d = complex_to_sky(pts.upper)
        gamma = angular_separation(d, SkyDirection(p.sun_zenith, 0.0))
        assert dop(pts.upper, d, gamma, p, AF, points=pts) == 0.0
        assert math.isnan(aop(pts.upper, pts))
        # through the direction round trip only the tolerance survives
        s = sample_sky(d, p, AF, self.COEFFS, points=pts)
        assert s.dop < 1e-12

    def test_deterministic(self):
        p = SkyParams(sun_zenith=45.0)
        d = SkyDirection(33.0, -120.0)
        a = sample_sky(d, p, AF, self.COEFFS)
        b = sample_sky(d, p, AF, self.COEFFS)
        assert a == b

    def test_reference_configuration_pattern(self):
        # reference sky (sun zenith 45, T=4, lambda=450, rho=0.1): DOP peaks
        # about 90 degrees from the sun and vanishes toward the neutral points
        p = SkyParams(sun_zenith=45.0, turbidity=4.0, albedo=0.1, wavelength=450.0)
        pts = place_neutral_points(p)
        sun = SkyDirection(p.sun_zenith, 0.0)
        best_gamma, best_dop = None, -1.0
        for zen in range(0, 90, 2):
            for az in range(-180, 180, 5):
                d = SkyDirection(float(zen), float(az))
                s = sample_sky(d, p, AF, self.COEFFS, points=pts)
                g = angular_separation(d, sun)
                if s.dop > best_dop:
                    best_dop, best_gamma = s.dop, g
        assert 75.0 <= best_gamma <= 105.0
        assert best_dop > 0.5

    def test_domain(self):
        p = SkyParams(sun_zenith=45.0)
        with pytest.raises(DomainError):
            sample_sky(SkyDirection(90.0, 0.0), p, AF, self.COEFFS)
