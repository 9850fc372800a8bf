"""Continuous-time q-learning for regime-switching markets under Tsallis entropy.

The package is organized around six layers:

- :mod:`regime_q.policies` — entropy regularizer, Gaussian and clipped-quadratic
  exploratory policy densities, moments, sampling.
- :mod:`regime_q.market` — two-regime market simulator (exact chain law plus
  Euler wealth dynamics).
- :mod:`regime_q.coeffs` — matrix-exponential / RK4 / quadrature solvers for the
  quadratic value-ansatz coefficients and the Lagrange multiplier.
- :mod:`regime_q.actor_critic` — parameterized value and q functions, policies,
  temporal-difference residuals, and all gradients.
- :mod:`regime_q.learn` — the three offline training procedures with their
  schedules and optimizers.
- :mod:`regime_q.cli` / :mod:`regime_q.config` / :mod:`regime_q.verify` —
  experiment front-end, presets, and the cross-module verification battery.
"""

from .policies import (
    ActionInterval,
    GaussianPolicy,
    MomentTable,
    QuadraticPolicy,
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
from .market import MarketParams, StepResult, Trajectory, regime_step, simulate_episode, \
    wealth_step_p1, wealth_step_p2
from .coeffs import (
    CoeffTable,
    general_matrix_exp_times_vector,
    lagrange_w,
    regime_matrix_exp,
    solve_p1,
    solve_p2,
)

__version__ = "0.1.0"

__all__ = [
    "ActionInterval",
    "CoeffTable",
    "GaussianPolicy",
    "MarketParams",
    "MomentTable",
    "QuadraticPolicy",
    "StepResult",
    "Trajectory",
    "gaussian_policy",
    "general_matrix_exp_times_vector",
    "gibbs_density",
    "lagrange_w",
    "quadratic_moments",
    "quadratic_normalizer",
    "quadratic_policy",
    "regime_matrix_exp",
    "regime_step",
    "sample_action",
    "simulate_episode",
    "solve_p1",
    "solve_p2",
    "squared_density_integral",
    "squared_density_term",
    "tsallis_entropy",
    "tsallis_power_density",
    "wealth_step_p1",
    "wealth_step_p2",
    "__version__",
]
