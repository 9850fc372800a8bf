"""Policy densities, entropy, moments, and sampling against quadrature oracles."""

import math

import numpy as np
import pytest

from regime_q.errors import AnsatzViolationError
from regime_q.policies import (
    ActionInterval,
    GaussianPolicy,
    MomentTable,
    gaussian_policy,
    gibbs_density,
    quadratic_moments,
    quadratic_normalizer,
    quadratic_policy,
    sample_action,
    squared_density_integral,
    squared_density_term,
    tsallis_entropy,
    tsallis_power_density,
)
from regime_q.quadrature import simpson_integrate, simpson_nodes

IV = ActionInterval(-5.0, 5.0)


class TestEntropy:
    def test_unit_argument_vanishes(self):
        assert tsallis_entropy(1.0, 2.0) == 0.0
        assert tsallis_entropy(1.0, 1.0) == 0.0

    def test_order_two_is_one_minus_z(self):
        assert abs(tsallis_entropy(0.3, 2.0) - 0.7) < 1e-15

    def test_order_one_is_log(self):
        assert abs(tsallis_entropy(math.exp(-1.0), 1.0) - 1.0) < 1e-15

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            tsallis_entropy(0.0, 2.0)
        with pytest.raises(ValueError):
            tsallis_entropy(1.0, 0.5)

    @pytest.mark.parametrize("eps", [1e-2, 1e-3])
    def test_continuity_at_order_one(self, eps):
        z = np.linspace(0.1, 10.0, 50)
        gap = np.abs(tsallis_entropy(z, 1.0 + eps) - tsallis_entropy(z, 1.0))
        # |l_{1+eps} - l_1| <= C eps uniformly on [0.1, 10]
        assert np.all(gap <= 3.0 * eps)


class TestIntervalAndMoments:
    def test_moment_table_formula(self):
        mt = MomentTable.for_interval(ActionInterval(-2.0, 3.0))
        for n in range(5):
            want = (3.0 ** (n + 1) - (-2.0) ** (n + 1)) / (n + 1)
            assert abs(mt[n] - want) < 1e-12

    def test_symmetric_odd_moments_vanish(self):
        mt = MomentTable.for_interval(IV)
        assert mt[1] == 0.0 and mt[3] == 0.0

    def test_bad_interval_rejected(self):
        with pytest.raises(ValueError):
            ActionInterval(2.0, -2.0)


class TestGaussianPolicy:
    def test_zero_sharpe_centers_at_zero(self):
        pol = gaussian_policy(0.0, 0.2, 1.0, 1.0, 1.0, 2.0, 0.5)
        assert pol.mean == 0.0

    def test_hand_evaluated_mean_and_variance(self):
        pol = gaussian_policy(0.95, 0.2, 1.0, 1.0, 1.0, 0.0, 0.5)
        assert abs(pol.mean + 4.75) < 1e-12
        assert abs(pol.variance - 6.25) < 1e-12

    def test_terminal_variance(self):
        pol = gaussian_policy(0.5, 0.2, 1.0, 1.0, 2.0, -1.5, 0.5)
        assert abs(pol.variance - 0.5 / (2 * 0.04)) < 1e-12

    def test_nonpositive_curvature_rejected(self):
        with pytest.raises(AnsatzViolationError):
            gaussian_policy(0.5, 0.2, 0.0, 1.0, 1.0, 1.0, 0.5)

    def test_density_normalized_over_reals(self):
        pol = gaussian_policy(0.9, 0.25, 0.7, 0.9, 1.3, -1.7, 0.5)
        lo = pol.mean - 12 * math.sqrt(pol.variance)
        hi = pol.mean + 12 * math.sqrt(pol.variance)
        grid = simpson_nodes(lo, hi)
        assert abs(simpson_integrate(pol.pdf(grid), lo, hi) - 1.0) < 1e-8


class TestQuadraticPolicy:
    def test_uniform_normalizer(self):
        psi = quadratic_normalizer(0.0, 0.0, 0.5, IV)
        assert abs(psi - 0.1) < 1e-14
        pol = quadratic_policy(0.0, 0.0, 0.5, IV)
        np.testing.assert_allclose(pol.pdf(np.array([-4.0, 0.0, 4.0])), 0.1, rtol=1e-12)

    def test_curved_normalizer_integrates_to_one(self):
        psi = quadratic_normalizer(0.0, 1.0, 0.5, IV)
        assert abs(psi - (1.0 - 250.0 / 3.0) / 10.0) < 1e-12
        pol = quadratic_policy(0.0, 1.0, 0.5, IV)
        # the clipped density has kinks, so the oracle uses a fine trapezoid
        grid = np.linspace(IV.a_min, IV.a_max, 400_001)
        assert abs(np.trapezoid(pol.pdf(grid), grid) - 1.0) < 1e-8

    def test_normalizer_ignores_slope_on_symmetric_interval(self):
        assert quadratic_normalizer(0.7, 0.3, 0.5, IV) == quadratic_normalizer(0.0, 0.3, 0.5, IV)

    def test_clamped_density_still_normalized(self):
        pol = quadratic_policy(0.1, 0.12, 0.5, IV)  # deep negative midsection
        assert pol.clamped
        grid = np.linspace(IV.a_min, IV.a_max, 400_001)
        assert abs(np.trapezoid(pol.pdf(grid), grid) - 1.0) < 1e-8

    def test_uniform_moments(self):
        pol = quadratic_policy(0.0, 0.0, 0.5, IV)
        e1, e2 = quadratic_moments(pol)
        assert abs(e1) < 1e-14
        assert abs(e2 - 25.0 / 3.0) < 1e-12

    @pytest.mark.parametrize("seed", range(100))
    def test_moments_match_quadrature(self, seed):
        rng = np.random.default_rng(seed)
        gam = rng.uniform(0.2, 2.0)
        k2 = rng.uniform(0.0, 2.0 * gam / 90.0)
        k1 = rng.uniform(-1.0, 1.0) * gam / 20.0
        pol = quadratic_policy(k1, k2, gam, IV)
        grid = np.linspace(IV.a_min, IV.a_max, 400_001)
        dens = pol.pdf(grid)
        e1_q = np.trapezoid(grid * dens, grid)
        e2_q = np.trapezoid(grid**2 * dens, grid)
        e1, e2 = quadratic_moments(pol)
        assert abs(e1 - e1_q) < 1e-8
        assert abs(e2 - e2_q) < 1e-8

    def test_clamped_moments_match_quadrature(self):
        pol = quadratic_policy(-0.137, 0.128, 0.5, IV)
        assert pol.clamped
        grid = np.linspace(IV.a_min, IV.a_max, 400_001)
        dens = pol.pdf(grid)
        e1, e2 = quadratic_moments(pol)
        assert abs(e1 - np.trapezoid(grid * dens, grid)) < 1e-8
        assert abs(e2 - np.trapezoid(grid**2 * dens, grid)) < 1e-8


class TestSquaredDensity:
    def test_unit_length_interval_baseline_vanishes(self):
        iv = ActionInterval(-0.5, 0.5)
        pol = quadratic_policy(0.0, 0.0, 0.5, iv)
        assert abs(squared_density_term(pol)) < 1e-14

    def test_uniform_value(self):
        pol = quadratic_policy(0.0, 0.0, 0.5, IV)
        assert abs(squared_density_term(pol) + 0.45) < 1e-12

    @pytest.mark.parametrize("seed", range(20))
    def test_close_to_exact_for_small_coefficients(self, seed):
        rng = np.random.default_rng(200 + seed)
        gam = 0.5
        k2 = rng.uniform(0.0, 0.008)
        k1 = rng.uniform(-0.02, 0.02)
        pol = quadratic_policy(k1, k2, gam, IV)
        exact = -gam * (1.0 - squared_density_integral(pol))
        approx = squared_density_term(pol)
        assert abs(approx - exact) <= 0.05 * max(abs(exact), 1e-3)

    def test_exact_identity_under_positivity(self):
        pol = quadratic_policy(0.01, 0.002, 0.5, IV)
        assert not pol.clamped
        exact = -0.5 * (1.0 - squared_density_integral(pol))
        assert abs(squared_density_term(pol) - exact) < 1e-12

    def test_square_integral_matches_quadrature(self):
        pol = quadratic_policy(-0.137, 0.128, 0.5, IV)
        grid = np.linspace(IV.a_min, IV.a_max, 400_001)
        dens = pol.pdf(grid)
        want = np.trapezoid(dens * dens, grid)
        assert abs(squared_density_integral(pol) - want) < 1e-8


class TestSampling:
    def test_degenerate_gaussian_returns_mean(self):
        pol = GaussianPolicy(mean=1.25, variance=1e-30, interval=IV)
        rng = np.random.default_rng(0)
        assert abs(sample_action(pol, rng) - 1.25) < 1e-6

    def test_uniform_policy_sample_mean(self):
        pol = quadratic_policy(0.0, 0.0, 0.5, IV)
        rng = np.random.default_rng(1)
        n = 100_000
        draws = np.array([sample_action(pol, rng) for _ in range(n)])
        se = draws.std(ddof=1) / math.sqrt(n)
        assert abs(draws.mean()) < 3 * se

    def test_gaussian_sample_variance(self):
        pol = GaussianPolicy(mean=1.0, variance=4.0, interval=ActionInterval(-1e6, 1e6))
        rng = np.random.default_rng(2)
        draws = pol.mean + math.sqrt(pol.variance) * rng.standard_normal(100_000)
        assert abs(draws.var(ddof=1) - 4.0) < 0.05 * 4.0

    def test_quadratic_sampler_ks(self):
        pol = quadratic_policy(0.02, 0.004, 0.5, IV)
        rng = np.random.default_rng(3)
        n = 100_000
        draws = np.sort([sample_action(pol, rng) for _ in range(n)])
        grid = np.linspace(IV.a_min, IV.a_max, 4001)
        pdf = pol.pdf(grid)
        cdf = np.concatenate([[0.0], np.cumsum(0.5 * (pdf[1:] + pdf[:-1]) * np.diff(grid))])
        cdf /= cdf[-1]
        emp = np.searchsorted(draws, grid, side="right") / n
        ks = np.max(np.abs(emp - cdf))
        assert ks < 1.6276 / math.sqrt(n)  # 1% critical value

    def test_gaussian_sampler_clamps_into_interval(self):
        pol = GaussianPolicy(mean=0.0, variance=100.0, interval=IV)
        rng = np.random.default_rng(4)
        draws = np.array([sample_action(pol, rng) for _ in range(500)])
        assert draws.min() >= IV.a_min and draws.max() <= IV.a_max


class TestGibbsAndPowerFamilies:
    def test_constant_exponent_gives_uniform(self):
        grid, dens = gibbs_density(lambda a: np.full_like(a, 2.0), 0.5, IV)
        np.testing.assert_allclose(dens, 0.1, rtol=1e-10)

    def test_concave_exponent_peaks_at_argmax(self):
        grid, dens = gibbs_density(lambda a: -((a - 1.3) ** 2), 0.5, IV)
        assert abs(grid[np.argmax(dens)] - 1.3) < 0.01

    def test_power_family_approaches_gibbs_near_order_one(self):
        def q(a):
            return -0.3 * (a - 0.5) ** 2

        _, gibbs = gibbs_density(q, 0.5, IV)
        _, near = tsallis_power_density(q, 0.5, 1.0 + 1e-3, IV)
        assert np.max(np.abs(near - gibbs)) < 1e-2

    def test_power_family_is_normalized(self):
        _, dens = tsallis_power_density(lambda a: -0.2 * a * a, 0.7, 2.0, IV)
        assert abs(simpson_integrate(dens, IV.a_min, IV.a_max) - 1.0) < 1e-8

    def test_nonfinite_exponent_rejected(self):
        with pytest.raises(ValueError):
            gibbs_density(lambda a: np.where(a > 0, np.inf, 0.0), 0.5, IV)
