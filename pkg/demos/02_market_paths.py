"""Simulate the two-regime market under an exploratory policy.

The regime chain moves by the exact transition law exp(Q dt); wealth follows
a Euler step whose diffusion is widened by the exploration variance. Three
wealth schemes are available; `amount_invested` treats actions as dollar
positions and is the presets' default.

Run:  python demos/02_market_paths.py
"""

import numpy as np

from regime_q import ActionInterval, GaussianPolicy, MarketParams, simulate_episode

market = MarketParams(mu=(0.2, -0.2), sigma=(0.2, 0.3), r=(0.01, 0.05),
                      generator=((-1.0, 1.0), (1.0, -1.0)))
iv = ActionInterval(-5.0, 5.0)

print("Sharpe ratios implied by (mu, sigma, r):", market.rho.round(4))


def policy(t, x, i):
    # fixed moderate exploration; the learner would use the coefficient tables
    return GaussianPolicy(mean=1.0 - x, variance=4.0, interval=iv)


for seed in range(3):
    rng = np.random.default_rng(seed)
    traj = simulate_episode(1.0, None, policy, 25, 1 / 25, market, rng,
                            euler_form="amount_invested")
    bulls = int(np.sum(traj.regimes == 0))
    print(f"seed {seed}: final wealth {traj.wealth[-1]:+.3f}, "
          f"bull steps {bulls}/26, clamped draws {traj.clamp_count}")

n = 4000
finals = np.empty(n)
for e in range(n):
    traj = simulate_episode(1.0, None, policy, 25, 1 / 25, market,
                            np.random.default_rng((1, e)), "amount_invested")
    finals[e] = traj.wealth[-1]
print(f"\n{n} episodes: E[X_T] = {finals.mean():.4f}, std = {finals.std():.4f}")
