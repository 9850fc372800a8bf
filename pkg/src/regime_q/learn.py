"""The three offline training procedures and their optimizers.

Algorithm 1: q-learning with the closed-form (Gaussian) policy, value and
q roles updated from the shared 4-vector by martingale-residual-weighted
test functions. Algorithm 2: actor-critic for the sparse-entropy policy with
normalization penalties and Adam after a constant-rate warm-up. Algorithm 3:
the Gaussian-projection actor driven by log-density/q mismatch.

Everything inside one iteration is vectorized across the episode batch; the
per-iteration random block is keyed (seed, iteration) so traces are
bit-reproducible regardless of worker configuration.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .actor_critic import (
    EvalContext,
    LearnParams,
    SIGMA_FLOOR,
    build_contexts_with_probes,
    fd_deltas,
    policy_moments_grid,
    probe_params,
    q_grid_p1,
    q_grid_p2,
    q_pointwise_grid,
    value_grid,
)
from .config import COORDS, LearningConfig, ScheduleSpec
from .coeffs import regime_matrix_exp
from .errors import AnsatzViolationError
from .market import BLOWUP_LIMIT
from .policies import MomentTable
from .quadrature import clipped_quadratic_integrals

INV_CDF_GRID = 1024
DECAY = 0.995
DECAY_BLOCK = 10


def schedule_rate(spec: ScheduleSpec, k: int) -> float:
    """Piecewise rate: constant through the breakpoint, then 0.995^(floor(./10)) decay."""
    if k < 1:
        raise ValueError("iteration index is 1-based")
    if k <= spec.constant_until:
        return spec.rate
    return spec.rate * DECAY ** ((k - spec.constant_until) // DECAY_BLOCK)


@dataclass
class AdamState:
    """First/second moment accumulators with per-coordinate step counts."""

    m: np.ndarray = field(default_factory=lambda: np.zeros(4))
    v: np.ndarray = field(default_factory=lambda: np.zeros(4))
    t: np.ndarray = field(default_factory=lambda: np.zeros(4, dtype=int))


def adam_step(state: AdamState, grad: np.ndarray, rate,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
              mask: np.ndarray | None = None) -> tuple[AdamState, np.ndarray]:
    """One bias-corrected moment update; returns (new state, rate-scaled delta).

    ``mask`` selects the coordinates that move (the others keep their moments
    and contribute zero delta), so coordinates can enter the optimizer at
    different warm-up breakpoints.
    """
    grad = np.asarray(grad, dtype=float)
    mask = np.ones(4, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    m = state.m.copy()
    v = state.v.copy()
    t = state.t.copy()
    t[mask] += 1
    m[mask] = beta1 * m[mask] + (1.0 - beta1) * grad[mask]
    v[mask] = beta2 * v[mask] + (1.0 - beta2) * grad[mask] ** 2
    delta = np.zeros(4)
    if np.any(mask):
        m_hat = m[mask] / (1.0 - beta1 ** t[mask])
        v_hat = v[mask] / (1.0 - beta2 ** t[mask])
        delta[mask] = m_hat / (np.sqrt(v_hat) + eps)
    return AdamState(m=m, v=v, t=t), np.asarray(rate) * delta


@dataclass
class TrainTrace:
    """Per-iteration history of one training run."""

    params: np.ndarray       # (n_iters, 4), snapshot after each iteration
    mean_abs_G: np.ndarray   # (n_iters,)
    clamps: np.ndarray       # (n_iters,) int
    blowups: np.ndarray      # (n_iters,) int
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.params)


def draw_initial_params(cfg: LearningConfig, rng: np.random.Generator) -> LearnParams:
    vals = [rng.uniform(*cfg.init_ranges[c]) for c in COORDS]
    return LearnParams(*vals)


# ---------------------------------------------------------------------------
# batched episode simulation
# ---------------------------------------------------------------------------

def _sample_quadratic_batch(k1, k2, psi, u, interval, n_grid: int = INV_CDF_GRID):
    """Vectorized inverse-CDF draw from clipped-quadratic densities.

    One density per row of the coefficient arrays; ``u`` holds the uniforms.
    """
    grid = np.linspace(interval.a_min, interval.a_max, n_grid)
    h = k2[:, None] * grid**2 + k1[:, None] * grid + psi[:, None]
    pdf = np.maximum(h, 0.0)
    cdf = np.concatenate(
        [np.zeros((pdf.shape[0], 1)),
         np.cumsum(0.5 * (pdf[:, 1:] + pdf[:, :-1]), axis=1)], axis=1)
    cdf /= cdf[:, -1:]
    idx = np.clip((cdf < u[:, None]).sum(axis=1), 1, n_grid - 1)
    rows = np.arange(pdf.shape[0])
    c_lo = cdf[rows, idx - 1]
    c_hi = cdf[rows, idx]
    frac = np.where(c_hi > c_lo, (u - c_lo) / np.maximum(c_hi - c_lo, 1e-300), 0.0)
    step = grid[1] - grid[0]
    return grid[idx - 1] + frac * step


def _clamped_mask(k1, k2, psi, interval):
    lo, hi = interval.a_min, interval.a_max
    bad = (k2 * lo * lo + k1 * lo + psi < 0.0) | (k2 * hi * hi + k1 * hi + psi < 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        vtx = np.where(np.abs(k2) > 0.0, -k1 / (2.0 * k2), lo)
    inside = (vtx > lo) & (vtx < hi)
    bad |= inside & (k2 * vtx * vtx + k1 * vtx + psi < 0.0)
    return bad


def simulate_batch(params: LearnParams, ctx: EvalContext, cfg: LearningConfig,
                   rng: np.random.Generator) -> dict:
    """Simulate ``cfg.n_paths`` episodes under the current policy, vectorized.

    Returns X (P, K+1), I (P, K+1), actions (P, K), per-path multipliers W,
    the alive mask (False once a path left the wealth guard), and clamp
    diagnostics. Draw order is fixed: initial regimes, action block, wealth
    block, regime-transition block.
    """
    P, K, dt = cfg.n_paths, cfg.K, cfg.dt
    market = cfg.market
    gamma = cfg.gamma
    nsub = max(1, int(cfg.env_substeps))
    i0 = rng.integers(market.n_regimes, size=P)
    if cfg.entropy_order == 1:
        z_a = rng.standard_normal((P, K))
    else:
        u_a = rng.random((P, K))
    z_w = rng.standard_normal((P, K, nsub))
    u_r = rng.random((P, K, nsub))

    coeffs = ctx.coeffs
    w_path = ctx.w[i0]
    rho_l, sig_l = params.rho, params.sigmas
    rho_t, sig_t, r_t = market.rho, market.sigmas, market.rates
    h = dt / nsub
    trans = regime_matrix_exp(market.generator_matrix, h)
    mt = MomentTable.for_interval(cfg.interval)
    sqh = np.sqrt(h)

    X = np.empty((P, K + 1))
    I = np.empty((P, K + 1), dtype=int)
    A_ct = np.zeros((P, K))
    X[:, 0] = cfg.x0
    I[:, 0] = i0
    alive = np.ones(P, dtype=bool)
    clamps = 0

    for k in range(K):
        x = X[:, k]
        i = I[:, k]
        a_k = coeffs.A[k, i]
        b_k = coeffs.B[k, i]
        if cfg.entropy_order == 1:
            mean = -rho_l[i] * (x + w_path * b_k) / sig_l[i]
            var = gamma / (2.0 * sig_l[i] ** 2 * a_k)
            a_raw = mean + np.sqrt(var) * z_a[:, k]
            if cfg.clamp_actions:
                act = np.clip(a_raw, cfg.interval.a_min, cfg.interval.a_max)
                clamps += int(np.count_nonzero((act != a_raw) & alive))
            else:
                act = a_raw
            extra = var
            mean_a = mean
        else:
            k1 = (2.0 * x * a_k + w_path * b_k) * rho_l[i] * sig_l[i]
            k2 = a_k * sig_l[i] ** 2
            psi = (2.0 * gamma - k2 * mt[2] - k1 * mt[1]) / mt[0]
            act = _sample_quadratic_batch(k1, k2, psi, u_a[:, k], cfg.interval)
            i0_, i1_, i2_ = clipped_quadratic_integrals(
                k2, k1, psi, cfg.interval.a_min, cfg.interval.a_max)
            extra = i2_ / i0_
            mean_a = i1_ / i0_
            clamps += int(np.count_nonzero(_clamped_mask(k1, k2, psi, cfg.interval) & alive))

        x_next = x
        j = i
        for s_i in range(nsub):
            dw = sqh * z_w[:, k, s_i]
            if cfg.euler_form == "as_printed":
                spread = np.sqrt(act * act + extra)
                x_next = x_next + x_next * (r_t[j] + rho_t[j] * sig_t[j] * act) * h \
                    + x_next * sig_t[j] * spread * dw
            elif cfg.euler_form in ("exploratory", "matched"):
                # analytic second moment of the policy = mean^2 + variance
                # (order 1) or the exact clipped-density value (order 2)
                if cfg.entropy_order == 1:
                    spread = np.sqrt(mean_a * mean_a + extra)
                else:
                    spread = np.sqrt(extra)
                drift_a = mean_a if cfg.euler_form == "exploratory" else act
                x_next = x_next + (r_t[j] * x_next + rho_t[j] * sig_t[j] * drift_a) * h \
                    + sig_t[j] * spread * dw
            else:
                x_next = x_next + (r_t[j] * x_next + rho_t[j] * sig_t[j] * act) * h \
                    + sig_t[j] * act * dw
            stay = trans[j, j]
            j = np.where(u_r[:, k, s_i] < stay, j, 1 - j)

        dead_now = alive & (~np.isfinite(x_next) | (np.abs(x_next) > BLOWUP_LIMIT))
        x_next = np.where(alive & ~dead_now, x_next, x)
        j = np.where(alive & ~dead_now, j, i)
        alive &= ~dead_now
        X[:, k + 1] = x_next
        I[:, k + 1] = j
        A_ct[:, k] = act

    return {"X": X, "I": I, "actions": A_ct, "W": w_path, "alive": alive,
            "clamps": clamps, "blowups": int(np.count_nonzero(~alive))}


# ---------------------------------------------------------------------------
# batched residuals and gradients
# ---------------------------------------------------------------------------

def _q_grid(params, ctx, t_idx, x, i, w, censored=False):
    if ctx.entropy_order == 1:
        return q_grid_p1(params, ctx, t_idx, x, i, w, censored=censored)
    return q_grid_p2(params, ctx, t_idx, x, i, w)


def residual_matrix(params_theta: LearnParams, params_zeta: LearnParams, ctx: EvalContext,
                    sim: dict, dt: float, beta: float = 0.0,
                    compensator: str = "integrated") -> np.ndarray:
    """Stepwise martingale residuals G_k for a simulated batch, shape (P, K).

    ``compensator`` selects the q term: "integrated" subtracts the
    policy-averaged q at (t_{k+1}, x_{k+1}) (the diagnostic form), while
    "pointwise" subtracts the state-action rate at (t_k, x_k, a_k), which
    compensates the sampled-action dynamics conditionally on the drawn action
    and leaves only O(dt^2) per-step bias. The learner uses the pointwise
    form; with it the residual-weighted test-function equations acquire a
    negative-definite least-squares Jacobian.
    """
    X, I, W = sim["X"], sim["I"], sim["W"]
    K = X.shape[1] - 1
    t_all = np.arange(K + 1)[None, :]
    wv = W[:, None]
    j_mat = value_grid(ctx, t_all, X, I, wv)
    if compensator == "pointwise":
        q_mat = q_pointwise_grid(params_zeta, ctx, t_all[:, :-1], X[:, :-1], I[:, :-1],
                                 wv, sim["actions"])
    else:
        q_mat = _q_grid(params_zeta, ctx, t_all[:, 1:], X[:, 1:], I[:, 1:], wv,
                        censored=(compensator == "censored"))
    g = j_mat[:, 1:] - j_mat[:, :-1] - q_mat * dt - beta * j_mat[:, 1:] * dt
    return g


def _critic_direction(params, ctx, probes, probe_ctxs, deltas, sim, dt, beta=0.0,
                      compensator="pointwise", test_fn=None):
    """Batch-averaged sum_k [dJ/dtheta + dq/dzeta](t_k, ..) G_k per coordinate.

    The value-role test function is the parameter gradient of J at (t_k, x_k,
    i_k). The q-role test function follows the compensator: the gradient of
    the state-action rate at (t_k, x_k, i_k, a_k) for "pointwise" (keeps
    first-order Sharpe sensitivity where the policy mean crosses zero) or of
    the policy-integrated q for "integrated"/"censored" (the latter matching
    clamped Gaussian sampling).
    """
    test_fn = compensator if test_fn is None else test_fn
    g = residual_matrix(params, params, ctx, sim, dt, beta, compensator=compensator)
    X, I, W, A_ct, alive = sim["X"], sim["I"], sim["W"], sim["actions"], sim["alive"]
    K = g.shape[1]
    t_k = np.arange(K)[None, :]
    wv = W[:, None]
    xk, ik = X[:, :K], I[:, :K]
    out = np.zeros(4)
    for c in range(4):
        jp = value_grid(probe_ctxs[2 * c], t_k, xk, ik, wv)
        jm = value_grid(probe_ctxs[2 * c + 1], t_k, xk, ik, wv)
        if test_fn == "pointwise":
            qp = q_pointwise_grid(probes[2 * c], probe_ctxs[2 * c], t_k, xk, ik, wv, A_ct)
            qm = q_pointwise_grid(probes[2 * c + 1], probe_ctxs[2 * c + 1], t_k, xk, ik, wv, A_ct)
        else:
            cen = test_fn == "censored"
            qp = _q_grid(probes[2 * c], probe_ctxs[2 * c], t_k, xk, ik, wv, censored=cen)
            qm = _q_grid(probes[2 * c + 1], probe_ctxs[2 * c + 1], t_k, xk, ik, wv, censored=cen)
        dj = (jp - jm) / (2.0 * deltas[c])
        dq = (qp - qm) / (2.0 * deltas[c])
        contrib = np.sum((dj + dq) * g, axis=1)
        # trajectory-sum scale over surviving paths: the printed rates are
        # calibrated to per-trajectory summed updates
        out[c] = float(np.sum(contrib[alive]))
    return out, g


def _actor_direction_p2(params, ctx, probes, probe_ctxs, deltas, sim, w1, w2):
    """Actor direction with the consistency penalty, batched.

    The per-action score term is replaced by its exact action integral,
    int [(q + gamma l(pi)) dln pi/dchi + gamma l'(pi) dpi/dchi] pi da
    = -gamma * d/dchi int pi^2 da: the sampled estimator divides by the
    density at the drawn action, which vanishes at the clipped support
    boundary and makes the raw estimator infinite-variance, while the
    integral form is closed-form for this family and has the same mean.

    The mass penalty (w2 term) vanishes identically: the normalizer plus
    exact renormalization keep int pi da = 1 for every parameter set.
    """
    X, I, W, alive = sim["X"], sim["I"], sim["W"], sim["alive"]
    K = X.shape[1] - 1
    t_k = np.arange(K)[None, :]
    wv = W[:, None]
    xk, ik = X[:, :K], I[:, :K]
    gamma = ctx.gamma

    q0 = q_grid_p2(params, ctx, t_k, xk, ik, wv)
    _, _, sq0 = policy_moments_grid(params, ctx, t_k, xk, ik, wv)
    f0 = q0 + gamma * (1.0 - sq0)

    out = np.zeros(4)
    for c in range(4):
        pc, mc = probes[2 * c], probes[2 * c + 1]
        cxp, cxm = probe_ctxs[2 * c], probe_ctxs[2 * c + 1]
        _, _, sqp = policy_moments_grid(pc, cxp, t_k, xk, ik, wv)
        _, _, sqm = policy_moments_grid(mc, cxm, t_k, xk, ik, wv)
        dsq = (sqp - sqm) / (2.0 * deltas[c])
        qp = q_grid_p2(pc, cxp, t_k, xk, ik, wv)
        qm = q_grid_p2(mc, cxm, t_k, xk, ik, wv)
        df = ((qp - gamma * sqp) - (qm - gamma * sqm)) / (2.0 * deltas[c])
        total = -gamma * dsq - 2.0 * w1 * f0 * df
        out[c] = float(np.sum(np.sum(total, axis=1)[alive]))
    return out


def _actor_direction_kl(params, ctx, probes, probe_ctxs, deltas, sim):
    """Summed Gaussian-projection increments -(ln pi - q/gamma) dln pi/dphi."""
    X, I, W, A_ct, alive = sim["X"], sim["I"], sim["W"], sim["actions"], sim["alive"]
    K = A_ct.shape[1]
    t_k = np.arange(K)[None, :]
    wv = W[:, None]
    xk, ik = X[:, :K], I[:, :K]
    gamma = ctx.gamma

    def log_pdf(p, cx):
        c = cx.coeffs
        a_coef = c.A[t_k, ik]
        b_coef = c.B[t_k, ik]
        mean = -p.rho[ik] * (xk + wv * b_coef) / p.sigmas[ik]
        var = gamma / (2.0 * p.sigmas[ik] ** 2 * a_coef)
        return -((A_ct - mean) ** 2) / (2.0 * var) - 0.5 * np.log(2.0 * np.pi * var)

    lp0 = log_pdf(params, ctx)
    usable = lp0 > -700.0
    q0 = q_grid_p1(params, ctx, t_k, xk, ik, wv)
    out = np.zeros(4)
    n_records = max(int(np.count_nonzero(alive)) * K, 1)
    for c in range(4):
        lp = log_pdf(probes[2 * c], probe_ctxs[2 * c])
        lm = log_pdf(probes[2 * c + 1], probe_ctxs[2 * c + 1])
        dlog = (lp - lm) / (2.0 * deltas[c])
        incr = np.where(usable, -(lp0 - q0 / gamma) * dlog, 0.0)
        # the projection update is printed per step record; keep that scale
        # by averaging over the batch's step records
        out[c] = float(np.sum(np.sum(incr, axis=1)[alive])) / n_records
    return out


# ---------------------------------------------------------------------------
# the training loop
# ---------------------------------------------------------------------------

def _build_all(params: LearnParams, cfg: LearningConfig, w_init: float | None):
    if cfg.entropy_order == 2:
        return _build_p2_iteration(params, cfg, w_init)
    deltas = fd_deltas(params)
    probes = probe_params(params, deltas)
    base_ctx, probe_ctxs = build_contexts_with_probes(
        params, probes, cfg.market.rates, cfg.market.generator_matrix, cfg.gamma,
        cfg.T, cfg.K, cfg.x0, cfg.z, cfg.interval, cfg.entropy_order,
        substeps=cfg.substeps, w_init=w_init)
    return deltas, probes, base_ctx, probe_ctxs, None


def _build_p2_iteration(params: LearnParams, cfg: LearningConfig, w_prev):
    """One fused coefficient sweep for the order-2 learner.

    The multiplier comes from the order-1 anchor (cheap, circularity-free);
    the base and all eight probe parameter sets solve in a single batched
    backward pass at that shared scalar.
    """
    from dataclasses import replace as drep

    from regime_q.actor_critic import EvalContext, multiplier_anchor
    from regime_q.coeffs import solve_p2_batch

    rates = cfg.market.rates
    gen = cfg.market.generator_matrix
    deltas = fd_deltas(params)
    probes = probe_params(params, deltas)
    w_scalar, _ = multiplier_anchor(params, rates, gen, cfg.gamma, cfg.T, cfg.K,
                                    cfg.x0, cfg.z)
    all_params = [params] + probes
    rhos = np.stack([p.rho for p in all_params])
    sigs = np.stack([p.sigmas for p in all_params])
    tables = solve_p2_batch(rhos, sigs, rates, gen, cfg.gamma, cfg.T, cfg.K,
                            cfg.interval, w_scalar, None, cfg.substeps)
    base_ctx = EvalContext(coeffs=tables[0], w=np.array([w_scalar, w_scalar]), z=cfg.z,
                           gamma=cfg.gamma, rates=rates, generator=gen,
                           interval=cfg.interval, entropy_order=2, w_scalar=w_scalar)
    probe_ctxs = [drep(base_ctx, coeffs=t) for t in tables[1:9]]
    return deltas, probes, base_ctx, probe_ctxs, w_scalar


def _run_training(cfg: LearningConfig) -> TrainTrace:
    rng_init = np.random.default_rng((cfg.seed, 0))
    params = draw_initial_params(cfg, rng_init)
    b1, b2, eps = cfg.adam
    adam_critic = AdamState()
    adam_actor = AdamState()
    use_adam = cfg.algorithm == "alg2"
    breakpoints = np.array([cfg.schedules[c].constant_until for c in COORDS])

    n_it = cfg.n_iters
    hist = np.empty((n_it, 4))
    habsg = np.full(n_it, np.nan)
    hclamp = np.zeros(n_it, dtype=int)
    hblow = np.zeros(n_it, dtype=int)
    w_track = None
    rate_scale = 1.0

    for n in range(1, n_it + 1):
        rates = np.array([schedule_rate(cfg.schedules[c], n) for c in COORDS]) * rate_scale
        try:
            deltas, probes, ctx, probe_ctxs, w_next = _build_all(params, cfg, w_track)
        except AnsatzViolationError:
            hist[n - 1] = params.as_array()
            rate_scale = max(rate_scale * 0.5, 2.0**-20)
            continue
        w_track = w_next
        rng = np.random.default_rng((cfg.seed, n))
        sim = simulate_batch(params, ctx, cfg, rng)
        # conditional (state-action) compensation removes the sampled-action
        # moment mismatch; the q-role test function stays policy-integrated at
        # order 1 (stable there) and state-action at order 2 (keeps rho
        # identifiable through the action channel where the policy mean
        # crosses zero)
        tfn = "pointwise" if cfg.entropy_order == 2 else "integrated"
        critic_dir, g = _critic_direction(params, ctx, probes, probe_ctxs, deltas, sim,
                                          cfg.dt, compensator="pointwise", test_fn=tfn)

        # the actor direction shares the iteration's coefficient build (it is
        # evaluated at the pre-critic parameters, a simultaneous-update
        # reading of the critic-then-actor sequence)
        if cfg.algorithm == "alg2":
            actor_dir = _actor_direction_p2(params, ctx, probes, probe_ctxs,
                                            deltas, sim, cfg.w1_weight, cfg.w2_weight)
        elif cfg.algorithm == "alg3":
            actor_dir = _actor_direction_kl(params, ctx, probes, probe_ctxs, deltas, sim)
        else:
            actor_dir = None

        if use_adam:
            adam_mask = n > breakpoints
            plain = np.where(adam_mask, 0.0, rates * critic_dir)
            adam_critic, adam_delta = adam_step(adam_critic, critic_dir, rates,
                                                b1, b2, eps, mask=adam_mask)
            delta = plain + adam_delta
        else:
            delta = rates * critic_dir
        delta = np.clip(delta, -cfg.max_update, cfg.max_update)
        params = LearnParams.from_array(params.as_array() + delta).floored(SIGMA_FLOOR)

        if actor_dir is not None:
            if cfg.algorithm == "alg2":
                adam_mask = n > breakpoints
                plain = np.where(adam_mask, 0.0, rates * actor_dir)
                adam_actor, adam_delta = adam_step(adam_actor, actor_dir, rates,
                                                   b1, b2, eps, mask=adam_mask)
                a_delta = plain + adam_delta
            else:
                a_delta = rates * actor_dir
            a_delta = np.clip(a_delta, -cfg.max_update, cfg.max_update)
            params = LearnParams.from_array(params.as_array() + a_delta).floored(SIGMA_FLOOR)

        rate_scale = 1.0
        hist[n - 1] = params.as_array()
        alive = sim["alive"]
        habsg[n - 1] = float(np.mean(np.abs(g[alive]))) if np.any(alive) else np.nan
        hclamp[n - 1] = sim["clamps"]
        hblow[n - 1] = sim["blowups"]

    return TrainTrace(params=hist, mean_abs_G=habsg, clamps=hclamp, blowups=hblow,
                      meta={"seed": cfg.seed, "algorithm": cfg.algorithm})


def run_algorithm1(cfg: LearningConfig) -> TrainTrace:
    """Offline q-learning with the closed-form Gaussian policy (entropy order 1)."""
    if cfg.entropy_order != 1:
        raise ValueError("algorithm 1 requires entropy_order = 1")
    if cfg.algorithm != "alg1":
        cfg = replace(cfg, algorithm="alg1")
    return _run_training(cfg)


def run_algorithm2(cfg: LearningConfig) -> TrainTrace:
    """Actor-critic q-learning with normalization penalties (entropy order 2)."""
    if cfg.entropy_order != 2:
        raise ValueError("algorithm 2 requires entropy_order = 2")
    if cfg.algorithm != "alg2":
        cfg = replace(cfg, algorithm="alg2")
    return _run_training(cfg)


def run_algorithm3(cfg: LearningConfig) -> TrainTrace:
    """q-learning with the divergence-projection (Gaussian) actor (entropy order 1)."""
    if cfg.entropy_order != 1:
        raise ValueError("algorithm 3 requires entropy_order = 1")
    if cfg.algorithm != "alg3":
        cfg = replace(cfg, algorithm="alg3")
    return _run_training(cfg)


def run(cfg: LearningConfig) -> TrainTrace:
    """Dispatch on cfg.algorithm."""
    return {"alg1": run_algorithm1, "alg2": run_algorithm2, "alg3": run_algorithm3}[cfg.algorithm](cfg)
