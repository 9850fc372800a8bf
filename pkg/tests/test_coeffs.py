"""Coefficient solvers against closed forms, series oracles, and self-consistency."""

import math

import numpy as np
import pytest

from regime_q.coeffs import (
    _expm_series,
    general_matrix_exp_times_vector,
    lagrange_w,
    matrix_exp,
    regime_matrix_exp,
    solve_p1,
    solve_p2,
    solve_phi_b,
)
from regime_q.errors import ConfigError, DegenerateHorizonError
from regime_q.policies import ActionInterval

SYM = np.array([[-1.0, 1.0], [1.0, -1.0]])
GEN2 = np.array([[-1.8, 1.8], [2.0, -2.0]])
IV = ActionInterval(-5.0, 5.0)

P1_RHO = np.array([0.95, -0.25 / 0.3])
P1_SIG = np.array([0.2, 0.3])
P1_R = np.array([0.01, 0.05])

P2_RHO = np.array([0.733, -0.428])
P2_SIG = np.array([0.15, 0.35])
P2_R = np.array([0.02, 0.025])


class TestMatrixExp:
    def test_zero_time_is_identity(self):
        np.testing.assert_allclose(regime_matrix_exp(SYM, 0.0), np.eye(2), atol=1e-14)

    def test_symmetric_closed_form(self):
        # exp(Q tau) = 1/2 [[1+e^{-2tau}, 1-e^{-2tau}], ...] at e^{-2tau}=1/2
        got = regime_matrix_exp(SYM, math.log(2.0) / 2.0)
        np.testing.assert_allclose(got, [[0.75, 0.25], [0.25, 0.75]], atol=1e-12)

    def test_rows_are_distributions(self):
        p = regime_matrix_exp(GEN2, 0.31)
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(p >= 0.0)

    @pytest.mark.parametrize("seed", range(100))
    def test_matches_series(self, seed):
        rng = np.random.default_rng(seed)
        lam = rng.uniform(0.05, 1.0, size=2)
        q = np.array([[-lam[0], lam[0]], [lam[1], -lam[1]]])
        tau = rng.uniform(0.0, 2.0)
        got = regime_matrix_exp(q, tau)
        want = _expm_series(q * tau, terms=30)
        assert np.max(np.abs(got - want)) <= 1e-12

    def test_invalid_generator_rejected(self):
        with pytest.raises(ConfigError):
            regime_matrix_exp(np.array([[-1.0, 0.5], [1.0, -1.0]]), 0.1)
        with pytest.raises(ConfigError):
            regime_matrix_exp(np.array([[1.0, -1.0], [-1.0, 1.0]]), 0.1)


class TestExpTimesVector:
    def test_zero_matrix(self):
        v = np.array([1.5, -0.5])
        np.testing.assert_allclose(general_matrix_exp_times_vector(np.zeros((2, 2)), v), v)

    def test_scalar_diagonal(self):
        v = np.array([2.0, 3.0])
        got = general_matrix_exp_times_vector(np.diag([0.7, 0.7]), v)
        np.testing.assert_allclose(got, math.exp(0.7) * v, rtol=1e-13)

    @pytest.mark.parametrize("seed", range(20))
    def test_random_matches_series(self, seed):
        rng = np.random.default_rng(300 + seed)
        m = rng.uniform(-1.0, 1.0, size=(2, 2))
        v = rng.uniform(-1.0, 1.0, size=2)
        got = general_matrix_exp_times_vector(m, v)
        want = _expm_series(m) @ v
        assert np.max(np.abs(got - want)) < 1e-12

    def test_defective_matrix_falls_back_to_series(self):
        m = np.array([[0.0, 1.0], [0.0, 0.0]])  # nilpotent: exp = I + m
        got = matrix_exp(m)
        np.testing.assert_allclose(got, np.eye(2) + m, atol=1e-12)


class TestOrderOneSystem:
    def test_terminal_conditions(self):
        tab = solve_p1(P1_RHO, P1_SIG, P1_R, SYM, 0.5, 1.0, 25)
        np.testing.assert_allclose(tab.A[-1], 1.0, atol=1e-12)
        np.testing.assert_allclose(tab.B[-1], 1.0, atol=1e-12)
        np.testing.assert_allclose(tab.C[-1], 0.0, atol=1e-12)
        np.testing.assert_allclose(tab.D[-1], 0.0, atol=1e-12)

    def test_single_regime_closed_form(self):
        # decoupled limit: A' = (rho^2 - 2r) A backward from 1
        tab = solve_p1(np.array([0.95, 0.95]), np.array([0.2, 0.2]),
                       np.array([0.01, 0.01]), np.zeros((2, 2)), 0.5, 1.0, 25)
        want = math.exp(-(0.95**2 - 2 * 0.01))
        assert abs(tab.A[0, 0] - want) < 1e-10

    def test_equal_regimes_are_symmetric(self):
        tab = solve_p1(np.array([0.95, 0.95]), np.array([0.2, 0.2]),
                       np.array([0.01, 0.01]), SYM, 0.5, 1.0, 25)
        np.testing.assert_allclose(tab.A[:, 0], tab.A[:, 1], atol=1e-12)
        np.testing.assert_allclose(tab.B[:, 0], tab.B[:, 1], atol=1e-12)

    def test_positivity(self):
        tab = solve_p1(P1_RHO, P1_SIG, P1_R, SYM, 0.5, 1.0, 25)
        assert np.all(tab.A > 0.0)

    def test_grid_doubling(self):
        a = solve_p1(P1_RHO, P1_SIG, P1_R, SYM, 0.5, 1.0, 25)
        b = solve_p1(P1_RHO, P1_SIG, P1_R, SYM, 0.5, 1.0, 50)
        for name in ("A", "B", "C", "D"):
            assert np.max(np.abs(getattr(b, name)[0] - getattr(a, name)[0])) <= 1e-4

    def test_transition_matrix_duality(self):
        # fundamental-matrix route equals direct backward integration
        tab = solve_p1(P1_RHO, P1_SIG, P1_R, SYM, 0.5, 1.0, 25)
        phi = solve_phi_b(P1_RHO, P1_R, SYM, 1.0, 25)
        assert np.max(np.abs(phi @ np.ones(2) - tab.B)) <= 1e-8

    def test_ode_residuals_from_stored_values(self):
        tab = solve_p1(P1_RHO, P1_SIG, P1_R, SYM, 0.5, 1.0, 25)
        gen = SYM
        q12, q21 = gen[0, 1], gen[1, 0]
        p_diag = P1_RHO**2 - 2.0 * P1_R
        res_a = tab.A_dot - (tab.A * p_diag - tab.A @ gen.T)
        bdiff = tab.B[:, 1] - tab.B[:, 0]
        n_vec = np.stack([q12 * tab.A[:, 1] / tab.A[:, 0] * bdiff,
                          q21 * tab.A[:, 0] / tab.A[:, 1] * (-bdiff)], axis=1)
        res_b = tab.B_dot - (tab.B * P1_R - n_vec)
        m_vec = np.stack([q12 * tab.A[:, 1] * bdiff**2,
                          q21 * tab.A[:, 0] * bdiff**2], axis=1)
        res_c = tab.C_dot - (-tab.C @ gen.T - m_vec)
        log_arg = 2 * np.pi * np.e * 0.5 / (2.0 * P1_SIG**2 * tab.A)
        l_vec = 0.25 * (1.0 + np.log(log_arg))
        res_d = tab.D_dot - (-tab.D @ gen.T - l_vec)
        for res in (res_a, res_b, res_c, res_d):
            assert np.max(np.abs(res[1:-1])) <= 1e-6

    def test_derivatives_match_central_differences(self):
        tab = solve_p1(P1_RHO, P1_SIG, P1_R, SYM, 0.5, 1.0, 50)
        h = tab.grid[1] - tab.grid[0]
        for name in ("A", "B", "C", "D"):
            fd = (getattr(tab, name)[2:] - getattr(tab, name)[:-2]) / (2 * h)
            tol = 2e-3 * max(1.0, np.max(np.abs(getattr(tab, name))))
            assert np.max(np.abs(fd - getattr(tab, f"{name}_dot")[1:-1])) < tol

    def test_interpolation_exact_at_nodes(self):
        tab = solve_p1(P1_RHO, P1_SIG, P1_R, SYM, 0.5, 1.0, 25)
        vals = tab.at(tab.grid[7])
        np.testing.assert_allclose(vals[0], tab.A[7], atol=1e-14)
        with pytest.raises(ValueError):
            tab.at(1.5)


class TestOrderTwoSystem:
    def test_terminal_conditions(self):
        tab = solve_p2(P2_RHO, P2_SIG, P2_R, GEN2, 0.5, 1.0, 25, IV, w=-1.5)
        np.testing.assert_allclose(tab.A[-1], 1.0, atol=1e-12)
        np.testing.assert_allclose(tab.B[-1], 1.0, atol=1e-12)

    def test_single_regime_closed_form(self):
        tab = solve_p2(np.array([0.733, 0.733]), np.array([0.15, 0.15]),
                       np.array([0.02, 0.02]), np.zeros((2, 2)), 0.5, 1.0, 25, IV, w=-1.5)
        assert abs(tab.A[0, 0] - math.exp(2 * 0.02)) < 1e-10

    def test_b_residual_against_stored_drive(self):
        tab = solve_p2(P2_RHO, P2_SIG, P2_R, GEN2, 0.5, 1.0, 25, IV, w=-1.5)
        # B_dot was filled by re-evaluating the drive from the stored values;
        # recompute it here independently from the stored policy layers
        from regime_q.coeffs import _policy_mean
        from regime_q.policies import MomentTable

        mt = MomentTable.for_interval(IV)
        e1 = _policy_mean(tab.A, tab.B, -1.5, 1.0, P2_RHO, P2_SIG, 0.5, mt, IV)
        q12, q21 = GEN2[0, 1], GEN2[1, 0]
        bdiff = tab.B[:, 1] - tab.B[:, 0]
        n_vec = np.stack([q12 * tab.A[:, 1] / tab.A[:, 0] * bdiff,
                          q21 * tab.A[:, 0] / tab.A[:, 1] * (-bdiff)], axis=1)
        rhs = tab.B * P2_R - (P2_RHO * P2_SIG * e1 / -1.5 + n_vec)
        assert np.max(np.abs(tab.B_dot[1:-1] - rhs[1:-1])) <= 1e-6

    def test_grid_doubling(self):
        a = solve_p2(P2_RHO, P2_SIG, P2_R, GEN2, 0.5, 1.0, 25, IV, w=-1.5)
        b = solve_p2(P2_RHO, P2_SIG, P2_R, GEN2, 0.5, 1.0, 50, IV, w=-1.5)
        for name in ("A", "B", "C", "D"):
            assert np.max(np.abs(getattr(b, name)[0] - getattr(a, name)[0])) <= 1e-4

    def test_asymmetric_generator_honored(self):
        tab = solve_p2(P2_RHO, P2_SIG, P2_R, GEN2, 0.5, 1.0, 25, IV, w=-1.5)
        # A solves A' = (-2R - Q) A; verify against a direct expm evaluation
        omega = -2.0 * np.diag(P2_R) - GEN2
        want = _expm_series(-omega) @ np.ones(2)  # t=0, horizon 1
        np.testing.assert_allclose(tab.A[0], want, atol=1e-10)

    def test_zero_multiplier_rejected(self):
        with pytest.raises(ValueError):
            solve_p2(P2_RHO, P2_SIG, P2_R, GEN2, 0.5, 1.0, 25, IV, w=0.0)


class TestLagrangeMultiplier:
    def test_arithmetic_example(self):
        w = lagrange_w(np.array([0.5, 0.5]), np.array([1.0, 1.0]),
                       np.array([0.0, 0.0]), 1.0, 1.4)
        np.testing.assert_allclose(w, -1.8, atol=1e-14)

    def test_symmetric_regimes_agree(self):
        tab = solve_p1(np.array([0.95, 0.95]), np.array([0.2, 0.2]),
                       np.array([0.01, 0.01]), SYM, 0.5, 1.0, 25)
        w = lagrange_w(tab.A[0], tab.B[0], tab.C[0], 1.0, 1.4)
        assert abs(w[0] - w[1]) < 1e-12

    def test_degenerate_denominator_raises(self):
        with pytest.raises(DegenerateHorizonError):
            lagrange_w(np.array([1.0, 1.0]), np.array([1.0, 1.0]),
                       np.array([0.0, 0.0]), 1.0, 1.4)

    def test_grid_refinement_stability(self):
        a = solve_p1(P1_RHO, P1_SIG, P1_R, SYM, 0.5, 1.0, 25)
        b = solve_p1(P1_RHO, P1_SIG, P1_R, SYM, 0.5, 1.0, 50)
        wa = lagrange_w(a.A[0], a.B[0], a.C[0], 1.0, 1.4)
        wb = lagrange_w(b.A[0], b.B[0], b.C[0], 1.0, 1.4)
        assert np.max(np.abs(wa - wb)) <= 1e-4
