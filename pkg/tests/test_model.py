"""Model layer: transition laws, truncated expectations, critical levels."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from meanrev import (
    CriticalLevels,
    Degeneracy,
    EntryThresholds,
    Family,
    MarketSpec,
    ModelSpec,
    Problem,
    Side,
    classify_degenerate,
    critical_levels,
    mean_m,
    sample_transition,
    transition_law,
    truncated_affine_expectation,
)
from meanrev.errors import ModelDomainError, UnsupportedLawError


@pytest.fixture(scope="module")
def ou():
    return ModelSpec(Family.OU, mu=16.0, theta=0.54, sigma=0.16)


@pytest.fixture(scope="module")
def cir():
    return ModelSpec(Family.CIR, mu=2.0, theta=0.5, sigma=0.8)


class TestSpecs:
    def test_family_state_spaces(self, ou, cir):
        assert ou.state_space.lo == -math.inf and ou.state_space.hi == math.inf
        assert cir.state_space.lo == 0.0
        igbm = ModelSpec(Family.IGBM, mu=1.0, theta=1.0, sigma=0.3)
        assert igbm.state_space.lo == 0.0
        jac = ModelSpec(Family.JACOBI, mu=1.0, theta=0.5, sigma=0.3, a=0.0, b=1.0)
        assert jac.state_space.lo == 0.0 and jac.state_space.hi == 1.0

    def test_feller_condition_rejected(self):
        with pytest.raises(ModelDomainError):
            ModelSpec(Family.CIR, mu=0.1, theta=0.5, sigma=0.8)

    def test_theta_inside_state_space(self):
        with pytest.raises(ModelDomainError):
            ModelSpec(Family.JACOBI, mu=1.0, theta=1.5, sigma=0.3, a=0.0, b=1.0)
        with pytest.raises(ModelDomainError):
            ModelSpec(Family.OU, mu=-1.0, theta=0.5, sigma=0.3)

    def test_market_validation(self):
        with pytest.raises(ModelDomainError):
            MarketSpec(r=-0.01, c=0.01, T=1.0, T_prime=1.0)
        with pytest.raises(ModelDomainError):
            MarketSpec(r=0.01, c=0.01, T=0.0, T_prime=1.0)


class TestMean:
    def test_zero_elapsed_is_identity(self, ou):
        assert mean_m(ou, 0.0, 0.37) == pytest.approx(0.37, abs=0)

    def test_theta_is_fixed_point(self, ou):
        for s in (0.0, 0.3, 5.0):
            assert mean_m(ou, s, 0.54) == pytest.approx(0.54, abs=1e-15)

    def test_mean_against_monte_carlo(self, ou):
        # sample mean of 1e6 exact transitions vs the closed form, 3 SE
        rng = np.random.default_rng(101)
        law = transition_law(ou, 0.1, 0.50)
        draws = sample_transition(law, rng, size=1_000_000)
        se = draws.std() / math.sqrt(len(draws))
        assert abs(draws.mean() - mean_m(ou, 0.1, 0.50)) < 3 * se

    def test_long_run_limit(self, ou):
        assert abs(mean_m(ou, 100.0 / ou.mu, 2.0) - ou.theta) < 1e-10

    def test_domain_error(self, cir):
        with pytest.raises(ModelDomainError):
            mean_m(cir, 0.1, -0.5)


class TestTransitionLaw:
    def test_density_normalizes(self, ou, cir):
        law = transition_law(ou, 0.2, 0.5)
        total, _ = integrate.quad(lambda y: float(law.pdf(y)), -2.0, 3.0)
        assert abs(total - 1.0) < 1e-8
        law_c = transition_law(cir, 0.4, 0.6)
        total_c, _ = integrate.quad(lambda y: float(law_c.pdf(y)), 0.0, 20.0, limit=200)
        assert abs(total_c - 1.0) < 1e-8

    def test_first_moment_matches_mean(self, ou, cir):
        for model, x in ((ou, 0.47), (cir, 0.8)):
            law = transition_law(model, 0.25, x)
            lo = max(model.state_space.lo, float(law.mean) - 40 * math.sqrt(float(law.variance)))
            hi = float(law.mean) + 40 * math.sqrt(float(law.variance))
            first, _ = integrate.quad(lambda y: y * float(law.pdf(y)), lo, hi, limit=300)
            assert abs(first - mean_m(model, 0.25, x)) < 1e-10

    def test_cir_density_against_histogram(self, cir):
        # binned histogram of 1e6 exact draws vs the density, within sampling error
        rng = np.random.default_rng(77)
        law = transition_law(cir, 0.3, 0.6)
        draws = sample_transition(law, rng, size=1_000_000)
        edges = np.linspace(0.0, 2.5, 51)
        counts, _ = np.histogram(draws, edges)
        probs = np.diff(law.cdf(edges))
        expected = probs * len(draws)
        sampling_sd = np.sqrt(np.maximum(expected * (1.0 - probs), 1.0))
        assert np.max(np.abs(counts - expected) / sampling_sd) < 5.0

    def test_unsupported_families(self):
        igbm = ModelSpec(Family.IGBM, mu=1.0, theta=1.0, sigma=0.3)
        with pytest.raises(UnsupportedLawError):
            transition_law(igbm, 0.1, 1.0)

    def test_requires_positive_elapsed(self, ou):
        with pytest.raises(ModelDomainError):
            transition_law(ou, 0.0, 0.5)


class TestTruncatedExpectation:
    def test_lower_endpoint_gives_full_expectation(self, ou):
        law = transition_law(ou, 0.2, 0.5)
        got = truncated_affine_expectation(law, 1.5, -2.0, -math.inf, Side.ABOVE)
        assert got == pytest.approx(1.5 - 2.0 * mean_m(ou, 0.2, 0.5), abs=1e-12)

    def test_upper_endpoint_gives_zero(self, ou, cir):
        for model, x in ((ou, 0.5), (cir, 0.7)):
            law = transition_law(model, 0.2, x)
            assert truncated_affine_expectation(law, 1.5, -2.0, math.inf, Side.ABOVE) == 0.0

    @pytest.mark.parametrize("family", ["OU", "CIR"])
    def test_against_quadrature(self, ou, cir, family):
        model = ou if family == "OU" else cir
        x = 0.5 if family == "OU" else 0.65
        z = 0.55 if family == "OU" else 0.6
        law = transition_law(model, 0.15, x)
        a0, a1 = 0.3, -1.7
        got = truncated_affine_expectation(law, a0, a1, z, Side.ABOVE)
        hi = float(law.mean) + 40 * math.sqrt(float(law.variance))
        ref, _ = integrate.quad(
            lambda y: (a0 + a1 * y) * float(law.pdf(y)), z, hi, limit=300
        )
        assert abs(got - ref) < 1e-9

    @settings(max_examples=60, deadline=None)
    @given(
        a0=st.floats(-2, 2),
        a1=st.floats(-3, 3),
        z=st.floats(0.3, 0.8),
        s=st.floats(0.01, 2.0),
        x=st.floats(0.35, 0.75),
    )
    def test_above_below_additivity(self, a0, a1, z, s, x):
        model = ModelSpec(Family.OU, mu=16.0, theta=0.54, sigma=0.16)
        law = transition_law(model, s, x)
        above = truncated_affine_expectation(law, a0, a1, z, Side.ABOVE)
        below = truncated_affine_expectation(law, a0, a1, z, Side.BELOW)
        assert abs(above + below - (a0 + a1 * mean_m(model, s, x))) < 1e-10

    def test_cir_additivity(self, cir):
        law = transition_law(cir, 0.5, 0.45)
        for z in (0.1, 0.5, 1.2):
            above = truncated_affine_expectation(law, 0.7, 1.3, z, Side.ABOVE)
            below = truncated_affine_expectation(law, 0.7, 1.3, z, Side.BELOW)
            assert abs(above + below - (0.7 + 1.3 * mean_m(cir, 0.5, 0.45))) < 1e-10


class TestSampling:
    def test_short_horizon_concentrates(self, ou):
        rng = np.random.default_rng(3)
        law = transition_law(ou, 1e-10, 0.5)
        draws = sample_transition(law, rng, size=10_000)
        assert np.max(np.abs(draws - 0.5)) < 1e-3

    def test_ou_standardized_moments(self, ou):
        rng = np.random.default_rng(4)
        law = transition_law(ou, 0.2, 0.5)
        draws = sample_transition(law, rng, size=1_000_000)
        z = (draws - float(law.mean)) / float(law.sd)
        n = len(z)
        skew = (z**3).mean()
        kurt = (z**4).mean() - 3.0
        # moment estimators standardized with the law's own mean/sd:
        # var(z^3 mean) = E[z^6]/n = 15/n, var(z^4 mean) = (E[z^8]-9)/n = 96/n
        assert abs(skew) < 3 * math.sqrt(15.0 / n)
        assert abs(kurt) < 3 * math.sqrt(96.0 / n)

    def test_cir_draws_positive(self, cir):
        rng = np.random.default_rng(5)
        law = transition_law(cir, 0.3, 0.4)
        draws = sample_transition(law, rng, size=200_000)
        assert np.all(draws > 0.0)

    def test_moments_match_law(self, ou):
        rng = np.random.default_rng(6)
        law = transition_law(ou, 0.35, 0.6)
        draws = sample_transition(law, rng, size=1_000_000)
        n = len(draws)
        se_mean = math.sqrt(float(law.variance) / n)
        assert abs(draws.mean() - float(law.mean)) < 3 * se_mean
        se_var = float(law.variance) * math.sqrt(2.0 / (n - 1))
        assert abs(draws.var() - float(law.variance)) < 3 * se_var


class TestCriticalLevels:
    def test_paper_values_six_decimals(self, ou):
        market = MarketSpec(r=0.01, c=0.01, T=1.0, T_prime=1.0)
        levels = critical_levels(ou, market)
        assert round(levels.x_star_upper, 6) == 0.539669
        assert round(levels.x_star_lower, 6) == 0.539656

    def test_zero_cost_levels_coincide(self, ou):
        market = MarketSpec(r=0.01, c=0.0, T=1.0, T_prime=1.0)
        levels = critical_levels(ou, market)
        expected = ou.mu * ou.theta / (ou.mu + market.r)
        assert levels.x_star_upper == levels.x_star_lower == expected

    def test_sigma_independence_exact(self):
        market = MarketSpec(r=0.01, c=0.01, T=1.0, T_prime=1.0)
        a = critical_levels(ModelSpec(Family.OU, 16.0, 0.54, 0.16), market)
        b = critical_levels(ModelSpec(Family.OU, 16.0, 0.54, 0.32), market)
        assert a == b

    @settings(max_examples=40, deadline=None)
    @given(sig1=st.floats(0.05, 1.0), sig2=st.floats(0.05, 1.0))
    def test_sigma_independence_property(self, sig1, sig2):
        market = MarketSpec(r=0.02, c=0.03, T=1.0, T_prime=0.5)
        a = critical_levels(ModelSpec(Family.OU, 4.0, 1.1, sig1), market)
        b = critical_levels(ModelSpec(Family.OU, 4.0, 1.1, sig2), market)
        assert a == b


class TestClassification:
    def test_ou_never_degenerate(self, ou):
        market = MarketSpec(r=0.01, c=0.01, T=1.0, T_prime=1.0)
        th = EntryThresholds(0.5545, 0.5255, 0.54)
        for problem in Problem:
            assert (
                classify_degenerate(problem, ou, market, th) is Degeneracy.NON_DEGENERATE
            )

    def test_exit_long_stop_immediately(self):
        # critical level below the interval: always better to cash out now
        model = ModelSpec(Family.JACOBI, mu=1.0, theta=0.65, sigma=0.1, a=0.6, b=1.0)
        market = MarketSpec(r=50.0, c=0.0, T=1.0, T_prime=1.0)
        assert critical_levels(model, market).x_star_upper <= 0.6
        assert (
            classify_degenerate(Problem.EXIT_LONG, model, market)
            is Degeneracy.STOP_IMMEDIATELY
        )

    def test_exit_long_wait_until_deadline(self):
        # huge cost pushes the critical level above the interval
        model = ModelSpec(Family.JACOBI, mu=1.0, theta=0.7, sigma=0.1, a=0.6, b=1.0)
        market = MarketSpec(r=1.0, c=2.0, T=1.0, T_prime=1.0)
        assert critical_levels(model, market).x_star_upper >= 1.0
        assert (
            classify_degenerate(Problem.EXIT_LONG, model, market)
            is Degeneracy.WAIT_UNTIL_DEADLINE
        )

    def test_exit_short_branches(self):
        model = ModelSpec(Family.JACOBI, mu=1.0, theta=0.65, sigma=0.1, a=0.6, b=1.0)
        market = MarketSpec(r=50.0, c=0.0, T=1.0, T_prime=1.0)
        assert (
            classify_degenerate(Problem.EXIT_SHORT, model, market)
            is Degeneracy.WAIT_UNTIL_DEADLINE
        )
        market2 = MarketSpec(r=1.0, c=2.0, T=1.0, T_prime=1.0)
        model2 = ModelSpec(Family.JACOBI, mu=1.0, theta=0.9, sigma=0.1, a=0.2, b=0.95)
        assert critical_levels(model2, market2).x_star_lower <= 0.2
        assert (
            classify_degenerate(Problem.EXIT_SHORT, model2, market2)
            is Degeneracy.WAIT_UNTIL_DEADLINE
        )

    def test_entry_branches(self):
        model = ModelSpec(Family.JACOBI, mu=1.0, theta=0.65, sigma=0.1, a=0.6, b=1.0)
        market = MarketSpec(r=0.01, c=0.001, T=1.0, T_prime=1.0)
        # break-even below the interval floor: entering never pays early
        th = EntryThresholds(break_even_long=0.5)
        assert (
            classify_degenerate(Problem.ENTRY_LONG, model, market, th)
            is Degeneracy.WAIT_UNTIL_DEADLINE
        )
        th3 = EntryThresholds(break_even_short=1.5)
        assert (
            classify_degenerate(Problem.ENTRY_SHORT, model, market, th3)
            is Degeneracy.WAIT_UNTIL_DEADLINE
        )
        # short-entry immediate case: high rates push the critical level and
        # break-even below the floor (the long-side mirror is unreachable
        # because its critical level always sits below theta, hence below b)
        market_hi = MarketSpec(r=100.0, c=0.0, T=1.0, T_prime=1.0)
        th4 = EntryThresholds(break_even_short=0.1)
        assert (
            classify_degenerate(Problem.ENTRY_SHORT, model, market_hi, th4)
            is Degeneracy.STOP_IMMEDIATELY
        )

    def test_entry_requires_thresholds(self):
        model = ModelSpec(Family.OU, mu=16.0, theta=0.54, sigma=0.16)
        market = MarketSpec(r=0.01, c=0.01, T=1.0, T_prime=1.0)
        with pytest.raises(ModelDomainError):
            classify_degenerate(Problem.ENTRY_LONG, model, market)

    def test_classification_is_total(self):
        market = MarketSpec(r=0.5, c=0.2, T=1.0, T_prime=1.0)
        model = ModelSpec(Family.JACOBI, mu=1.0, theta=0.65, sigma=0.1, a=0.6, b=0.7)
        th = EntryThresholds(0.65, 0.66, 0.64)
        for problem in Problem:
            out = classify_degenerate(problem, model, market, th)
            assert isinstance(out, Degeneracy)
