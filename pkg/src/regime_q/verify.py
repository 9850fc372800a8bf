"""Cross-module verification battery.

Each check pits a library path against an independent oracle: series
expansions for the matrix exponential, quadrature for density algebra,
Monte-Carlo statistics for the simulator and the martingale property of the
learning residuals, and finite-difference refinement for gradient stability.
``run_suite`` prints one pass/fail line per item and reports overall status.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace

import numpy as np

from .actor_critic import (
    EvalContext,
    LearnParams,
    build_context,
    fd_deltas,
    grad_fd,
    probe_params,
    value_J,
)
from .coeffs import _expm_series, matrix_exp, solve_p1, solve_p2
from .config import LearningConfig, get_preset
from .learn import _build_all, _critic_direction, residual_matrix, simulate_batch
from .policies import (
    ActionInterval,
    GaussianPolicy,
    quadratic_moments,
    quadratic_policy,
    sample_action,
    tsallis_power_density,
)
from .quadrature import simpson_integrate, simpson_nodes


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float


def _random_generator_matrix(rng) -> np.ndarray:
    lam = rng.uniform(0.05, 1.0, size=2)
    return np.array([[-lam[0], lam[0]], [lam[1], -lam[1]]])


def check_matrix_exp_series(rng) -> tuple[bool, str]:
    worst = 0.0
    for _ in range(100):
        q = _random_generator_matrix(rng)
        tau = rng.uniform(0.0, 2.0)
        err = np.max(np.abs(matrix_exp(q * tau) - _expm_series(q * tau)))
        worst = max(worst, err)
    return worst <= 1e-12, f"max |eigen - series| = {worst:.2e}"


def check_single_regime_closed_forms() -> tuple[bool, str]:
    zero_gen = np.zeros((2, 2))
    t1 = solve_p1(np.array([0.95, 0.95]), np.array([0.2, 0.2]), np.array([0.01, 0.01]),
                  zero_gen, 0.5, 1.0, 25)
    want1 = math.exp(-(0.95**2 - 2 * 0.01))
    err1 = abs(t1.A[0, 0] - want1)
    iv = ActionInterval(-5.0, 5.0)
    t2 = solve_p2(np.array([0.733, 0.733]), np.array([0.15, 0.15]), np.array([0.02, 0.02]),
                  zero_gen, 0.5, 1.0, 25, iv, w=-1.5)
    want2 = math.exp(2 * 0.02)
    err2 = abs(t2.A[0, 0] - want2)
    ok = err1 <= 1e-10 and err2 <= 1e-10
    return ok, f"|A(0) - closed form|: order1 {err1:.2e}, order2 {err2:.2e}"


def check_grid_doubling() -> tuple[bool, str]:
    q = np.array([[-1.0, 1.0], [1.0, -1.0]])
    rho = np.array([0.95, -0.25 / 0.3])
    sig = np.array([0.2, 0.3])
    r = np.array([0.01, 0.05])
    a = solve_p1(rho, sig, r, q, 0.5, 1.0, 25)
    b = solve_p1(rho, sig, r, q, 0.5, 1.0, 50)
    worst = max(np.max(np.abs(getattr(b, n)[0] - getattr(a, n)[0]))
                for n in ("A", "B", "C", "D"))
    return worst <= 1e-4, f"max coefficient change at t=0 under doubling = {worst:.2e}"


def check_ode_residuals() -> tuple[bool, str]:
    """Stored coefficient derivatives against central differences of the values."""
    q = np.array([[-1.8, 1.8], [2.0, -2.0]])
    iv = ActionInterval(-5.0, 5.0)
    tab = solve_p2(np.array([0.733, -0.428]), np.array([0.15, 0.35]),
                   np.array([0.02, 0.025]), q, 0.5, 1.0, 25, iv, w=-1.5)
    h = tab.grid[1] - tab.grid[0]
    fd = {n: (getattr(tab, n)[2:] - getattr(tab, n)[:-2]) / (2 * h)
          for n in ("A", "B", "C", "D")}
    worst = max(np.max(np.abs(fd[n] - getattr(tab, f"{n}_dot")[1:-1]))
                for n in ("A", "B", "C", "D"))
    return worst <= 5e-3, f"max |central difference - stored derivative| = {worst:.2e}"


def check_policy_normalization(rng) -> tuple[bool, str]:
    iv = ActionInterval(-5.0, 5.0)
    # clipped densities have kinks, so the oracle is a fine trapezoid
    grid = np.linspace(iv.a_min, iv.a_max, 400_001)
    worst = 0.0
    for _ in range(50):
        k1 = rng.uniform(-0.5, 0.5)
        k2 = rng.uniform(-0.3, 0.3)
        gam = rng.uniform(0.1, 2.0)
        pol = quadratic_policy(k1, k2, gam, iv)
        mass = np.trapezoid(pol.pdf(grid), grid)
        worst = max(worst, abs(mass - 1.0))
    return worst <= 1e-8, f"max |int pi - 1| = {worst:.2e}"


def check_quadratic_moments(rng) -> tuple[bool, str]:
    iv = ActionInterval(-5.0, 5.0)
    grid = simpson_nodes(iv.a_min, iv.a_max)
    worst = 0.0
    for _ in range(100):
        gam = rng.uniform(0.2, 2.0)
        k2 = rng.uniform(0.0, 2.0 * gam / 85.0)
        k1 = rng.uniform(-1.0, 1.0) * 0.3 * gam / 5.0
        pol = quadratic_policy(k1, k2, gam, iv)
        if pol.clamped:
            continue
        dens = pol.pdf(grid)
        e1_q = simpson_integrate(grid * dens, iv.a_min, iv.a_max)
        e2_q = simpson_integrate(grid**2 * dens, iv.a_min, iv.a_max)
        e1, e2 = quadratic_moments(pol)
        worst = max(worst, abs(e1 - e1_q), abs(e2 - e2_q))
    return worst <= 1e-8, f"max |closed form - quadrature| = {worst:.2e}"


def check_sampler(rng) -> tuple[bool, str]:
    iv = ActionInterval(-5.0, 5.0)
    pol = quadratic_policy(0.02, 0.004, 0.5, iv)
    n = 100_000
    draws = np.array([sample_action(pol, rng) for _ in range(n)])
    grid = np.linspace(iv.a_min, iv.a_max, 2001)
    pdf = pol.pdf(grid)
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (pdf[1:] + pdf[:-1]) * np.diff(grid))])
    cdf /= cdf[-1]
    emp = np.searchsorted(np.sort(draws), grid, side="right") / n
    ks = np.max(np.abs(emp - cdf))
    crit = 1.6276 / math.sqrt(n)  # 1% asymptotic critical value
    return ks < crit, f"KS statistic {ks:.5f} vs 1% critical {crit:.5f}"


def check_martingale(preset: str, n_episodes: int, seed: int = 2024,
                     inflate_sigma1: bool = False) -> tuple[float, float]:
    """Mean and standard error of per-episode summed residuals at theta_true."""
    cfg = get_preset(preset, seed=seed)
    cfg = replace(cfg, n_paths=n_episodes, euler_form="amount_invested",
                  clamp_actions=False)
    theta = np.array(cfg.theta_true)
    if inflate_sigma1:
        theta = theta.copy()
        theta[2] *= 1.5
    params = LearnParams.from_array(theta)
    deltas, probes, ctx, probe_ctxs, _ = _build_all(params, cfg, None)
    rng = np.random.default_rng((seed, 1))
    sim = simulate_batch(params, ctx, cfg, rng)
    g = residual_matrix(params, params, ctx, sim, cfg.dt)
    sums = g.sum(axis=1)[sim["alive"]]
    return float(sums.mean()), float(sums.std(ddof=1) / math.sqrt(len(sums)))


def check_martingale_diagnostic(fast: bool) -> tuple[bool, str]:
    n = 3000 if fast else 10_000
    msgs = []
    ok = True
    for preset in ("emv_p1", "emv_p2"):
        m, se = check_martingale(preset, n)
        ratio = abs(m) / se
        ok &= ratio <= 3.0
        msgs.append(f"{preset}: |mean|/se = {ratio:.2f}")
    return ok, "; ".join(msgs)


def check_misspecification(fast: bool) -> tuple[bool, str]:
    # detection power needs the diagnostic's stated episode count even at the
    # fast level; the batched simulator keeps this cheap
    m, se = check_martingale("emv_p1", 10_000, inflate_sigma1=True)
    ratio = abs(m) / se
    return ratio > 4.0, f"inflated sigma1: |mean|/se = {ratio:.2f}"


def check_fd_stability() -> tuple[bool, str]:
    worst = 0.0
    for preset in ("emv_p1", "emv_p2"):
        cfg = get_preset(preset, seed=7)
        rng = np.random.default_rng((cfg.seed, 0))
        from .learn import draw_initial_params

        params = draw_initial_params(cfg, rng)
        ctx = build_context(params, cfg.market.rates, cfg.market.generator_matrix,
                            cfg.gamma, cfg.T, cfg.K, cfg.x0, cfg.z, cfg.interval,
                            cfg.entropy_order)

        def f(p, _ctx=ctx, _cfg=cfg):
            c2 = build_context(p, _cfg.market.rates, _cfg.market.generator_matrix,
                               _cfg.gamma, _cfg.T, _cfg.K, _cfg.x0, _cfg.z,
                               _cfg.interval, _cfg.entropy_order,
                               w_init=_ctx.w_scalar if _cfg.entropy_order == 2 else None)
            return value_J(p, c2, 0.5 * _cfg.T, _cfg.x0, 0)

        g1 = grad_fd(f, params, h=1e-5)
        g2 = grad_fd(f, params, h=5e-6)
        rel = np.max(np.abs(g1 - g2) / np.maximum(1.0, np.abs(g1)))
        worst = max(worst, rel)
    return worst <= 1e-3, f"max relative gradient change under step halving = {worst:.2e}"


def check_unique_maximizer(rng, n_instances: int = 20, n_perturb: int = 200) -> tuple[bool, str]:
    """Clipped-linear-response density beats random perturbations on the
    entropy-regularized objective int (q pi + gamma (pi - pi^2)) da."""
    iv = ActionInterval(-5.0, 5.0)
    grid = simpson_nodes(iv.a_min, iv.a_max)
    worst_margin = np.inf
    for _ in range(n_instances):
        gam = rng.uniform(0.2, 1.5)
        center = rng.uniform(-3.0, 3.0)
        curv = rng.uniform(0.05, 1.0)
        qv = -curv * (grid - center) ** 2 + rng.uniform(-1.0, 1.0)

        def objective(dens):
            return simpson_integrate(qv * dens + gam * (dens - dens**2), iv.a_min, iv.a_max)

        _, cand = tsallis_power_density(qv, gam, 2.0, iv, n=len(grid))
        base = objective(cand)
        for _ in range(n_perturb):
            bump = rng.standard_normal(4)
            mod = cand * np.exp(0.3 * (bump[0] * np.sin(grid) + bump[1] * np.cos(0.7 * grid)
                                       + 0.2 * bump[2] * grid / 5.0 + 0.1 * bump[3]))
            mod = np.maximum(mod + rng.uniform(0, 0.02), 0.0)
            mod /= simpson_integrate(mod, iv.a_min, iv.a_max)
            worst_margin = min(worst_margin, base - objective(mod))
        if worst_margin < -1e-9:
            break
    return worst_margin >= -1e-9, f"minimum objective margin over perturbations = {worst_margin:.3e}"


def run_suite(level: str = "fast", out=print) -> list[CheckResult]:
    """Execute the oracle battery; returns per-check results."""
    fast = level != "full"
    rng = np.random.default_rng(20240817)
    checks = [
        ("matrix_exp_series", lambda: check_matrix_exp_series(rng)),
        ("single_regime_closed_forms", check_single_regime_closed_forms),
        ("grid_doubling", check_grid_doubling),
        ("ode_derivative_consistency", check_ode_residuals),
        ("policy_normalization", lambda: check_policy_normalization(rng)),
        ("quadratic_moments_vs_quadrature", lambda: check_quadratic_moments(rng)),
        ("inverse_cdf_sampler_ks", lambda: check_sampler(rng)),
        ("martingale_at_truth", lambda: check_martingale_diagnostic(fast)),
        ("misspecification_detected", lambda: check_misspecification(fast)),
        ("fd_gradient_stability", check_fd_stability),
        ("entropy_objective_maximizer",
         lambda: check_unique_maximizer(rng, 5 if fast else 20, 50 if fast else 200)),
    ]
    results = []
    for name, fn in checks:
        t0 = time.time()
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashed check is a failed check
            ok, detail = False, f"exception: {exc!r}"
        res = CheckResult(name, ok, detail, time.time() - t0)
        results.append(res)
        out(f"[{'PASS' if ok else 'FAIL'}] {name:32s} {detail}  ({res.seconds:.1f}s)")
    n_fail = sum(not r.passed for r in results)
    out(f"{len(results) - n_fail}/{len(results)} checks passed")
    return results
