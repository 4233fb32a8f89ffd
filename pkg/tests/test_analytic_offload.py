"""Offloading probabilities: immediate, delayed, breakdown, library aggregate."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from d2d_offload import analytic as an
from d2d_offload.domain import ExplicitPopularity, UniformSpeed
from d2d_offload.errors import DomainError

from conftest import make_scenario


class TestImmediate:
    def test_zero_range(self):
        assert an.prob_offload_immediate(0.0, 0.05) == 0.0

    def test_reference_value(self):
        p = an.prob_offload_immediate(100.0, 0.032694)
        assert p == pytest.approx(1 - np.exp(-2 * 100 * 0.032694), rel=1e-12)
        assert p == pytest.approx(0.99856, abs=1e-5)

    def test_dense_holders_saturate(self):
        assert an.prob_offload_immediate(10.0, 1e6) == pytest.approx(1.0)

    @given(d1=st.floats(0, 500), d2=st.floats(0, 500), rho=st.floats(0, 1))
    @settings(max_examples=100, deadline=None)
    def test_monotone_in_range(self, d1, d2, rho):
        lo, hi = sorted((d1, d2))
        assert an.prob_offload_immediate(lo, rho) <= an.prob_offload_immediate(hi, rho) + 1e-15

    def test_negative_inputs(self):
        with pytest.raises(DomainError):
            an.prob_offload_immediate(-1.0, 0.1)
        with pytest.raises(DomainError):
            an.prob_offload_immediate(1.0, -0.1)


class TestEncounterProbability:
    def test_no_patience_no_encounter(self):
        scenario = make_scenario(n_contents=10_000, tau_c=0.0, tau_s=600.0)
        assert an.prob_encounter_given_speed(1000, 16.0, scenario) == 0.0

    def test_popular_content_certain(self):
        scenario = make_scenario(n_contents=10_000)
        p = an.prob_encounter_given_speed(1, 16.0, scenario)
        lam_e = an.encounter_rate(16.0, scenario.lambda_t, scenario.speed)
        lam_1 = an.content_request_rate(1, scenario.popularity, scenario.lambda_Z)
        q = 1 - np.exp(-lam_1 * 580)
        assert p == pytest.approx(1 - np.exp(-lam_e * q * 20), rel=1e-12)
        assert p == pytest.approx(1.0, abs=1e-4)

    def test_unpopular_content(self):
        scenario = make_scenario(n_contents=10_000)
        p = an.prob_encounter_given_speed(1000, 16.0, scenario)
        assert p == pytest.approx(0.0736, abs=2e-4)


class TestDelayed:
    def test_zero_timeout(self):
        scenario = make_scenario(n_contents=10_000, tau_c=0.0)
        assert an.prob_offload_delayed(100.0, 1000, scenario) == 0.0

    def test_saturated_immediate_kills_delayed(self):
        # z=1 in the reference scenario has cache probability ~1 everywhere
        scenario = make_scenario(n_contents=10_000)
        p = an.prob_offload_delayed(5000.0, 1, scenario)
        assert p < 1e-12

    def test_reference_value_against_independent_quadrature(self):
        scenario = make_scenario(n_contents=10_000)
        got = an.prob_offload_delayed(100.0, 1000, scenario)

        # independent evaluation with raw formulas
        pmf = scenario.popularity.pmf_vector
        lam_z = pmf[999] * scenario.lambda_Z
        q = 1 - np.exp(-lam_z * 580)
        rho = scenario.lambda_t * np.log(16 / 6) / 10
        p_imm = 1 - np.exp(-2 * 100 * rho * q)

        def lam_e(v):
            return scenario.lambda_t / 10 * (v * (np.log(v) - np.log(6) - 1) + 16)

        enc, _ = integrate.quad(lambda v: (1 - np.exp(-lam_e(v) * q * 20)) / 10, 6, 16,
                                epsabs=1e-14, epsrel=1e-12)
        expected = (1 - p_imm) * enc
        assert got == pytest.approx(expected, rel=1e-9)
        assert got == pytest.approx(0.0543592433, abs=1e-8)


class TestBreakdown:
    def test_degenerate_all_infrastructure(self):
        scenario = make_scenario(n_contents=10_000, tau_c=0.0)
        bd = an.offload_breakdown_for_content(0.0, 1000, scenario)
        assert (bd.p_off_imm, bd.p_off_del, bd.p_non_off) == (0.0, 0.0, 1.0)

    def test_reference_scenario_popular_content(self):
        scenario = make_scenario(n_contents=10_000)
        bd = an.offload_breakdown_for_content(100.0, 1, scenario)
        assert bd.p_non_off < 2e-3
        assert bd.p_off_imm + bd.p_off_del + bd.p_non_off == pytest.approx(1.0, abs=1e-12)

    @given(d_max=st.floats(0, 400), z=st.integers(1, 50),
           lam_Z=st.floats(0.001, 2.0), tau_c=st.floats(0.1, 50))
    @settings(max_examples=100, deadline=None)
    def test_complement_identity(self, d_max, z, lam_Z, tau_c):
        scenario = make_scenario(n_contents=50, lambda_Z=lam_Z,
                                 tau_c=tau_c, tau_s=tau_c + 200.0)
        bd = an.offload_breakdown_for_content(d_max, z, scenario)
        assert abs(bd.p_off_imm + bd.p_off_del + bd.p_non_off - 1.0) <= 1e-12
        assert 0 <= bd.p_off_imm <= 1 and 0 <= bd.p_off_del <= 1 and 0 <= bd.p_non_off <= 1


class TestLibraryAggregate:
    def test_degenerate_inputs_give_zero(self):
        scenario = make_scenario(n_contents=100, tau_c=0.0)
        assert an.prob_offload_given_nr(0.0, scenario) == 0.0

    def test_single_content_library_matches_per_content(self):
        pop = ExplicitPopularity(np.array([1.0]))
        scenario = make_scenario(popularity=pop, lambda_Z=0.01)
        bd = an.offload_breakdown_for_content(120.0, 1, scenario)
        agg = an.prob_offload_given_nr(120.0, scenario)
        assert agg == pytest.approx(bd.p_off_imm + bd.p_off_del, rel=1e-9)

    def test_aggregate_equals_scalar_chain_small_library(self):
        pop = ExplicitPopularity(np.array([0.4, 0.3, 0.2, 0.07, 0.03]))
        scenario = make_scenario(popularity=pop, lambda_Z=0.05)
        pmf = pop.pmf_vector
        q = 1 - np.exp(-pmf * scenario.lambda_Z * 580)
        cond = an.popularity_given_non_repeated_vector(pop, q)
        expected = sum(
            cond[z - 1] * (lambda bd: bd.p_off_imm + bd.p_off_del)(
                an.offload_breakdown_for_content(80.0, z, scenario))
            for z in range(1, 6)
        )
        assert an.prob_offload_given_nr(80.0, scenario) == pytest.approx(expected, rel=1e-9)

    def test_nondecreasing_in_range(self, desk_scenario):
        classes = an.summarize_library(desk_scenario)
        vals = [an.prob_offload_given_nr(d, desk_scenario, classes=classes)
                for d in np.arange(0, 301, 20)]
        assert np.all(np.diff(vals) >= -1e-15)
        assert all(0 <= v <= 1 for v in vals)

    def test_aggregate_breakdown_sums_to_one(self, desk_scenario):
        bd = an.aggregate_breakdown(150.0, desk_scenario)
        assert bd.p_off_imm + bd.p_off_del + bd.p_non_off == pytest.approx(1.0, abs=1e-12)
        assert bd.p_offload == pytest.approx(
            an.prob_offload_given_nr(150.0, desk_scenario), rel=1e-12)

    def test_bucketed_aggregation_close_to_exact(self, desk_scenario):
        exact = an.prob_offload_given_nr(100.0, desk_scenario)
        bucketed = an.prob_offload_given_nr(100.0, desk_scenario, lambda_buckets=300)
        assert bucketed == pytest.approx(exact, rel=1e-4)
