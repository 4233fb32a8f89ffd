"""Densities, rates, cache-occupancy bounds, and the non-repeated conditioning."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from d2d_offload import analytic as an
from d2d_offload.domain import ExplicitPopularity, TabulatedSpeed, UniformSpeed, ZipfPopularity
from d2d_offload.errors import DegenerateInputError, DivergenceError, DomainError

from conftest import make_scenario

SPEED = UniformSpeed(6, 16)
LAMBDA_T = 1 / 3


class TestSpatialDensity:
    def test_reference_value(self):
        rho = an.spatial_density(LAMBDA_T, SPEED)
        assert rho == pytest.approx(LAMBDA_T * np.log(16 / 6) / 10, rel=1e-13)
        assert rho == pytest.approx(0.032694, abs=1e-6)

    def test_linearity(self):
        assert an.spatial_density(2 * LAMBDA_T, SPEED) == pytest.approx(
            2 * an.spatial_density(LAMBDA_T, SPEED), rel=1e-13)

    def test_single_speed_limit(self):
        v = 12.0
        rho = an.spatial_density(1.0, UniformSpeed(v, v * (1 + 1e-9)))
        assert rho == pytest.approx(1.0 / v, rel=1e-6)

    def test_zero_arrivals(self):
        assert an.spatial_density(0.0, SPEED) == 0.0

    def test_support_touching_zero_diverges(self):
        sp = TabulatedSpeed(np.array([-5.0, 0.0, 5.0]), np.array([0.2, 0.2, 0.2]))
        with pytest.raises(DivergenceError):
            an.spatial_density(1.0, sp)
        with pytest.raises(DivergenceError):
            an.encounter_rate(10.0, 1.0, sp)

    @given(v_a=st.floats(0.5, 30), width=st.floats(0.1, 40), lam=st.floats(0.01, 5))
    @settings(max_examples=100, deadline=None)
    def test_closed_form_matches_quadrature(self, v_a, width, lam):
        sp = UniformSpeed(v_a, v_a + width)
        closed = an.spatial_density(lam, sp)
        quad = an.spatial_density_integral(lam, sp)
        assert quad == pytest.approx(closed, rel=1e-9)

    def test_tabulated_path_matches_uniform(self):
        # a fine tabulation of the uniform law reproduces the closed form
        mags = np.linspace(6, 16, 2001)
        sp = TabulatedSpeed.from_one_sided(mags, np.ones_like(mags))
        rho_tab = an.spatial_density(LAMBDA_T, sp)
        assert rho_tab == pytest.approx(an.spatial_density(LAMBDA_T, SPEED), rel=1e-6)


class TestEncounterRate:
    def test_at_lower_edge_equals_arrival_rate(self):
        assert an.encounter_rate(6.0, LAMBDA_T, SPEED) == pytest.approx(LAMBDA_T, rel=1e-12)
        assert an.encounter_rate(-6.0, LAMBDA_T, SPEED) == pytest.approx(LAMBDA_T, rel=1e-12)

    def test_at_upper_edge(self):
        assert an.encounter_rate(16.0, LAMBDA_T, SPEED) == pytest.approx(0.5231089349, rel=1e-9)

    def test_static_point_sees_arrival_rate(self):
        # |0 - v|/|v| = 1, so the rate collapses to lambda_t (quadrature path)
        assert an.encounter_rate(0.0, LAMBDA_T, SPEED) == pytest.approx(LAMBDA_T, rel=1e-9)

    def test_closed_form_not_used_outside_its_domain(self):
        # the closed form evaluated at |v*| < v_a would give lambda_t*v_b/(v_b-v_a)
        wrong = LAMBDA_T * 16 / 10
        got = an.encounter_rate(0.0, LAMBDA_T, SPEED)
        assert abs(got - wrong) > 0.1

    @given(v_star=st.floats(6, 16), v_a=st.floats(1, 20), width=st.floats(0.5, 30),
           lam=st.floats(0.01, 5))
    @settings(max_examples=100, deadline=None)
    def test_closed_form_matches_quadrature_on_overlap(self, v_star, v_a, width, lam):
        sp = UniformSpeed(v_a, v_a + width)
        v = v_a + (v_star - 6) / 10 * width   # map into [v_a, v_b]
        closed = an.encounter_rate(v, lam, sp)
        quad = an.encounter_rate_integral(v, lam, sp)
        assert quad == pytest.approx(closed, rel=1e-9)

    def test_zero_arrivals(self):
        assert an.encounter_rate(10.0, 0.0, SPEED) == 0.0


class TestContentRequestRate:
    def test_degenerate_library(self):
        pop = ExplicitPopularity(np.array([1.0]))
        assert an.content_request_rate(1, pop, 0.25) == 0.25

    def test_zipf_reference(self):
        pop = ZipfPopularity(1.1, 10_000)
        z = np.arange(1, 10_001, dtype=float)
        h = np.sum(z ** -1.1)       # direct-summation oracle
        rate = an.content_request_rate(1, pop, 1 / 6)
        assert rate == pytest.approx(1 / (6 * h), rel=1e-12)
        assert rate == pytest.approx(0.02524, abs=5e-5)

    def test_no_requests(self):
        pop = ZipfPopularity(1.1, 10)
        assert an.content_request_rate(3, pop, 0.0) == 0.0

    def test_out_of_support(self):
        pop = ZipfPopularity(1.1, 10)
        with pytest.raises(DomainError):
            an.content_request_rate(11, pop, 1.0)


class TestCacheBounds:
    def test_never_requested(self):
        assert an.cache_probability_bounds(0.0, 600, 20) == (0.0, 0.0)

    def test_vanishing_window(self):
        lam = 0.05
        lower, upper = an.cache_probability_bounds(lam, 20 + 1e-12, 20)
        assert lower == pytest.approx(0.0, abs=1e-12)
        assert upper == pytest.approx(1 - np.exp(-lam * 20), rel=1e-9)

    def test_popular_content_saturates(self):
        lower, _ = an.cache_probability_bounds(0.02524, 600, 20)
        assert lower == pytest.approx(1.0, abs=1e-6)

    @given(lam=st.floats(0, 10), tau_c=st.floats(0, 50))
    @settings(max_examples=100, deadline=None)
    def test_ordering(self, lam, tau_c):
        tau_s = tau_c + 30.0
        lower, upper = an.cache_probability_bounds(lam, tau_s, tau_c)
        assert lower <= upper
        if lam * tau_c > 1e-9 and lam * tau_s < 30:
            assert lower < upper          # strict away from float saturation
        elif lam * tau_c <= 1e-9:
            assert upper - lower <= 1e-8


class TestThinnedQuantities:
    def test_content_density(self):
        rho = an.spatial_density(LAMBDA_T, SPEED)
        assert an.content_density(rho, 0.0, 600, 20) == 0.0
        assert an.content_density(rho, 1e9, 600, 20) == pytest.approx(rho, rel=1e-12)
        rho_z = an.content_density(rho, 0.02524, 600, 20)
        assert rho_z == pytest.approx(rho, rel=1e-5)   # cache probability ~ 1

    def test_content_encounter_rate_chain(self):
        pop = ZipfPopularity(1.1, 10_000)
        lam_e = an.encounter_rate(16.0, LAMBDA_T, SPEED)
        lam_z = an.content_request_rate(1000, pop, 1 / 6)
        got = an.content_encounter_rate(lam_e, lam_z, 600, 20)
        q = 1 - np.exp(-lam_z * 580)
        assert got == pytest.approx(lam_e * q, rel=1e-12)
        assert got == pytest.approx(3.82e-3, abs=2e-5)
        assert an.content_encounter_rate(lam_e, 0.0, 600, 20) == 0.0
        assert an.content_encounter_rate(lam_e, 1e9, 600, 20) == pytest.approx(lam_e)

    def test_upper_bound_switch(self):
        rho = an.spatial_density(LAMBDA_T, SPEED)
        lam_z = 1e-4
        lo = an.content_density(rho, lam_z, 600, 20)
        hi = an.content_density(rho, lam_z, 600, 20, use_upper=True)
        assert lo < hi


class TestNonRepeatedConditioning:
    def test_all_uncached(self):
        pop = ZipfPopularity(1.0, 50)
        assert an.prob_non_repeated(pop, np.zeros(50)) == pytest.approx(1.0, abs=1e-12)

    def test_common_cache_probability_factors(self):
        pop = ExplicitPopularity(np.full(4, 0.25))
        assert an.prob_non_repeated(pop, np.full(4, 0.3)) == pytest.approx(0.7, rel=1e-12)
        cond = an.popularity_given_non_repeated_vector(pop, np.full(4, 0.3))
        assert np.allclose(cond, 0.25, rtol=1e-12)

    def test_reference_scenario_value(self):
        scenario = make_scenario(n_contents=10_000)
        pmf = scenario.popularity.pmf_vector
        q = 1 - np.exp(-pmf * scenario.lambda_Z * (scenario.tau_s - scenario.tau_c))
        expected = float(np.sum(pmf * (1 - q)))          # direct summation oracle
        assert an.prob_non_repeated(scenario.popularity, q) == pytest.approx(expected, rel=1e-12)
        assert expected == pytest.approx(0.5303765, abs=1e-6)

    def test_conditioning_shifts_mass_to_unpopular(self):
        scenario = make_scenario(n_contents=10_000)
        pmf = scenario.popularity.pmf_vector
        q = 1 - np.exp(-pmf * scenario.lambda_Z * (scenario.tau_s - scenario.tau_c))
        cond = an.popularity_given_non_repeated_vector(scenario.popularity, q)
        assert cond.sum() == pytest.approx(1.0, abs=1e-10)
        assert cond[0] < pmf[0]
        assert an.popularity_given_non_repeated(1, scenario.popularity, q) == pytest.approx(cond[0])

    def test_surely_cached_content_gets_zero_weight(self):
        pop = ExplicitPopularity(np.array([0.5, 0.5]))
        cond = an.popularity_given_non_repeated_vector(pop, np.array([1.0, 0.2]))
        assert cond[0] == 0.0
        assert cond[1] == pytest.approx(1.0)

    def test_degenerate_all_cached(self):
        pop = ExplicitPopularity(np.array([0.5, 0.5]))
        with pytest.raises(DegenerateInputError):
            an.popularity_given_non_repeated_vector(pop, np.ones(2))

    def test_length_mismatch(self):
        pop = ExplicitPopularity(np.array([0.5, 0.5]))
        with pytest.raises(DomainError):
            an.prob_non_repeated(pop, np.zeros(3))
