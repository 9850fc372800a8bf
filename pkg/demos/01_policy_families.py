"""Tour of the two exploratory policy families.

The Gaussian family arises at entropy order 1: mean -rho (x + w B) / sigma,
variance gamma / (2 sigma^2 A). The sparse (order-2) family is a clipped
quadratic (k2 a^2 + k1 a + psi)_+ / (2 gamma); at the experiment scale the
quadratic opens upward and dips below zero mid-interval, so the density is
clipped and renormalized, leaving two lobes hugging the interval ends.

Run:  python demos/01_policy_families.py
"""

import numpy as np

from regime_q import (
    ActionInterval,
    gaussian_policy,
    quadratic_moments,
    quadratic_policy,
    sample_action,
    squared_density_integral,
    squared_density_term,
    tsallis_entropy,
)

iv = ActionInterval(-5.0, 5.0)

print("Tsallis entropy integrand l_p(z):")
for z in (0.3, 1.0, 2.0):
    print(f"  z={z:4.1f}:  p=1 -> {tsallis_entropy(z, 1.0):+.4f}   "
          f"p=2 -> {tsallis_entropy(z, 2.0):+.4f}")

print("\nGaussian policy at the bull-regime truth (t=0 coefficients):")
pol = gaussian_policy(rho=0.95, sigma=0.2, A=0.414, B=0.977, x=1.0, w=-1.69,
                      gamma=0.5, interval=iv)
print(f"  mean {pol.mean:+.3f}, std {np.sqrt(pol.variance):.3f} "
      f"(interval half-width is 5: exploration is wide early)")

print("\nSparse policy at the bear-regime truth:")
qpol = quadratic_policy(k1=-0.137, k2=0.128, gamma=0.5, interval=iv)
e1, e2 = quadratic_moments(qpol)
print(f"  clipped: {qpol.clamped};  E[a] = {e1:+.3f},  E[a^2] = {e2:.3f}")
print(f"  int pi^2 = {squared_density_integral(qpol):.4f}; "
      f"moment-offset form gives {squared_density_term(qpol):+.4f} "
      f"for -gamma (1 - int pi^2)")

grid = np.linspace(-5, 5, 11)
print("\n  density profile:", np.array2string(qpol.pdf(grid), precision=3))

rng = np.random.default_rng(7)
draws = np.array([sample_action(qpol, rng) for _ in range(20000)])
print(f"  20k draws: mean {draws.mean():+.3f} (analytic {e1:+.3f}), "
      f"second moment {np.mean(draws**2):.3f} (analytic {e2:.3f})")
