"""Ground-truth environment: regime chain plus Euler wealth dynamics.

The environment contract is a single step (x', r, j) from (t, x, i, a): the
regime moves by the exact transition matrix exp(Q dt) and wealth by an Euler
scheme whose diffusion is widened by the policy's exploration variance
(order 1) or second moment (order 2).

Two Euler forms are supported. ``as_printed`` multiplies both drift and
diffusion increments by the current wealth; ``amount_invested`` treats the
action as a dollar amount, dX = (r X + rho sigma a) dt + sigma a dW, which is
the form whose compensator matches the policy-averaged value dynamics. The
experiment presets default to ``as_printed``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .coeffs import regime_matrix_exp, validate_generator
from .errors import ConfigError
from .policies import GaussianPolicy, QuadraticPolicy, quadratic_moments, sample_action

EULER_FORMS = ("as_printed", "amount_invested", "exploratory", "matched")
BLOWUP_LIMIT = 1e6


@dataclass(frozen=True)
class MarketParams:
    """Per-regime market coefficients plus the regime-chain generator.

    ``sharpe`` optionally overrides the derived ratios (mu - r) / sigma; the
    simulator always drives the risky drift through the effective Sharpe
    ratio, so an override changes the environment truth.
    """

    mu: tuple[float, ...]
    sigma: tuple[float, ...]
    r: tuple[float, ...]
    generator: tuple[tuple[float, ...], ...]
    sharpe: tuple[float, ...] | None = None

    def __post_init__(self):
        q = validate_generator(np.asarray(self.generator, dtype=float))
        L = q.shape[0]
        for name in ("mu", "sigma", "r"):
            if len(getattr(self, name)) != L:
                raise ConfigError(f"{name} must have one entry per regime ({L})")
        if any(s <= 0.0 for s in self.sigma):
            raise ConfigError("volatilities must be positive")
        if self.sharpe is not None and len(self.sharpe) != L:
            raise ConfigError(f"sharpe override must have {L} entries")

    @property
    def n_regimes(self) -> int:
        return len(self.sigma)

    @property
    def generator_matrix(self) -> np.ndarray:
        return np.asarray(self.generator, dtype=float)

    @property
    def rho(self) -> np.ndarray:
        """Effective Sharpe ratios, (mu - r) / sigma unless overridden."""
        if self.sharpe is not None:
            return np.asarray(self.sharpe, dtype=float)
        mu = np.asarray(self.mu, dtype=float)
        r = np.asarray(self.r, dtype=float)
        sig = np.asarray(self.sigma, dtype=float)
        return (mu - r) / sig

    @property
    def rates(self) -> np.ndarray:
        return np.asarray(self.r, dtype=float)

    @property
    def sigmas(self) -> np.ndarray:
        return np.asarray(self.sigma, dtype=float)


class StepResult(NamedTuple):
    next_wealth: float
    reward: float
    next_regime: int


@dataclass
class Trajectory:
    """One simulated episode on the uniform grid times[k] = k * dt."""

    times: np.ndarray
    wealth: np.ndarray
    regimes: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    blown_up: bool = False
    clamp_count: int = 0
    meta: dict = field(default_factory=dict)


def regime_step(i: int, dt: float, generator, rng: np.random.Generator) -> int:
    """Next regime sampled from row i of exp(generator * dt)."""
    if dt <= 0.0:
        raise ValueError(f"time step must be positive, got {dt}")
    probs = regime_matrix_exp(generator, dt)[i]
    probs = np.clip(probs, 0.0, None)
    probs = probs / probs.sum()
    return int(rng.choice(len(probs), p=probs))


def _wealth_increment(x, i, a, dt, params: MarketParams, extra_var, dw, euler_form: str,
                      mean_action=None):
    rho = params.rho[i]
    sig = params.sigmas[i]
    r = params.rates[i]
    if euler_form == "as_printed":
        spread = np.sqrt(a * a + extra_var)
        return x * (r + rho * sig * a) * dt + x * sig * spread * dw
    if euler_form == "amount_invested":
        return (r * x + rho * sig * a) * dt + sig * a * dw
    if euler_form == "exploratory":
        # policy-averaged dynamics: drift uses the policy mean, diffusion the
        # policy second moment, which is what the value ansatz integrates
        m = a if mean_action is None else mean_action
        spread = np.sqrt(m * m + extra_var)
        return (r * x + rho * sig * m) * dt + sig * spread * dw
    if euler_form == "matched":
        # sampled drift, analytic policy-second-moment diffusion: both
        # conditional moments match the policy-averaged dynamics exactly
        m = a if mean_action is None else mean_action
        spread = np.sqrt(m * m + extra_var)
        return (r * x + rho * sig * a) * dt + sig * spread * dw
    raise ConfigError(f"unknown euler_form {euler_form!r}; expected one of {EULER_FORMS}")


def wealth_step_p1(x: float, i: int, a: float, dt: float, params: MarketParams,
                   policy_var: float, rng: np.random.Generator,
                   euler_form: str = "as_printed") -> StepResult:
    """One environment step with diffusion widened by the policy variance.

    dW ~ N(0, dt); in the printed form
    x' = x + x (r + rho sigma a) dt + x sigma sqrt(a^2 + policy_var) dW.
    The running reward is zero; the regime moves by the exact chain law.
    """
    if dt <= 0.0:
        raise ValueError(f"time step must be positive, got {dt}")
    if policy_var < 0.0:
        raise ValueError("policy variance must be nonnegative")
    dw = rng.normal(0.0, np.sqrt(dt))
    x_next = x + _wealth_increment(x, i, a, dt, params, policy_var, dw, euler_form)
    j = regime_step(i, dt, params.generator_matrix, rng)
    return StepResult(float(x_next), 0.0, j)


def wealth_step_p2(x: float, i: int, a: float, dt: float, params: MarketParams,
                   second_moment: float, rng: np.random.Generator,
                   euler_form: str = "as_printed") -> StepResult:
    """Order-2 environment step: the diffusion widening is the policy's E[a^2]."""
    return wealth_step_p1(x, i, a, dt, params, second_moment, rng, euler_form)


def simulate_episode(x0: float, i0: int | None, policy_provider: Callable, K: int, dt: float,
                     params: MarketParams, rng: np.random.Generator,
                     euler_form: str = "as_printed") -> Trajectory:
    """Roll one episode under a feedback policy.

    ``policy_provider(t, x, i)`` returns a GaussianPolicy or QuadraticPolicy;
    the widening term fed to the wealth step is the Gaussian variance or the
    quadratic policy's second moment respectively. ``i0=None`` draws the
    initial regime uniformly. Episodes whose wealth leaves +-1e6 are truncated
    (held at the last value) and flagged.
    """
    if K < 1:
        raise ValueError("need at least one step")
    times = np.arange(K + 1) * dt
    wealth = np.empty(K + 1)
    regimes = np.empty(K + 1, dtype=int)
    actions = np.zeros(K)
    rewards = np.zeros(K)
    wealth[0] = x0
    regimes[0] = int(rng.integers(params.n_regimes)) if i0 is None else int(i0)
    clamp_count = 0
    blown = False
    transition = regime_matrix_exp(params.generator_matrix, dt)
    for k in range(K):
        x, i = wealth[k], int(regimes[k])
        if blown:
            wealth[k + 1] = x
            regimes[k + 1] = i
            continue
        policy = policy_provider(times[k], x, i)
        a = sample_action(policy, rng)
        if isinstance(policy, GaussianPolicy):
            mean_a, var_a = policy.mean, policy.variance
            widen = var_a  # the printed order-1 scheme widens by the policy variance
            if policy.interval is not None and (
                a <= policy.interval.a_min or a >= policy.interval.a_max
            ):
                clamp_count += 1
        elif isinstance(policy, QuadraticPolicy):
            e1, e2 = quadratic_moments(policy)
            mean_a, var_a = e1, e2 - e1 * e1
            widen = e2  # the printed order-2 scheme widens by the second moment
            clamp_count += int(policy.clamped)
        else:
            raise TypeError(f"unsupported policy type {type(policy)!r}")
        dw = rng.normal(0.0, np.sqrt(dt))
        extra = var_a if euler_form == "exploratory" else widen
        x_next = x + _wealth_increment(x, i, a, dt, params, extra, dw, euler_form,
                                       mean_action=mean_a)
        probs = np.clip(transition[i], 0.0, None)
        j = int(rng.choice(params.n_regimes, p=probs / probs.sum()))
        actions[k] = a
        wealth[k + 1] = x_next
        regimes[k + 1] = j
        if not np.isfinite(x_next) or abs(x_next) > BLOWUP_LIMIT:
            blown = True
            wealth[k + 1] = x if not np.isfinite(x_next) else np.sign(x_next) * BLOWUP_LIMIT
    return Trajectory(times=times, wealth=wealth, regimes=regimes, actions=actions,
                      rewards=rewards, blown_up=blown, clamp_count=clamp_count)
