"""Entropy regularizers and exploratory policy densities.

The two policy families used by the exploratory mean-variance experiments
live here: the Gaussian family arising at entropy order p = 1 and the
clipped-quadratic family arising at the sparse order p = 2, together with
normalization, moments, squared-density integrals, and action sampling.
All operations are pure given an explicit random generator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .quadrature import (
    SIMPSON_NODES,
    clipped_quadratic_integrals,
    clipped_quadratic_square_integral,
    simpson_integrate,
    simpson_nodes,
)
from .errors import AnsatzViolationError

INV_CDF_GRID = 2048  # inverse-CDF sampler resolution for clipped-quadratic densities


def tsallis_entropy(z, p: float):
    """Entropy integrand l_p(z) of order p >= 1.

    l_p(z) = (1 - z^(p-1)) / (p - 1) for p > 1 and -ln(z) for p = 1; the
    p > 1 branch is evaluated through expm1 so it approaches -ln(z)
    continuously as p -> 1.
    """
    z = np.asarray(z, dtype=float)
    if np.any(z <= 0.0):
        raise ValueError("tsallis_entropy requires z > 0")
    if p < 1.0:
        raise ValueError(f"entropy order must satisfy p >= 1, got {p}")
    if p == 1.0:
        out = -np.log(z)
    else:
        out = -np.expm1((p - 1.0) * np.log(z)) / (p - 1.0)
    return out if out.ndim else float(out)


def tsallis_entropy_derivative(z, p: float):
    """d/dz of l_p: -z^(p-2) for p > 1, -1/z for p = 1."""
    z = np.asarray(z, dtype=float)
    if p == 1.0:
        out = -1.0 / z
    else:
        out = -np.power(z, p - 2.0)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class ActionInterval:
    """Closed action range [a_min, a_max]."""

    a_min: float
    a_max: float

    def __post_init__(self):
        if not self.a_min < self.a_max:
            raise ValueError(f"need a_min < a_max, got [{self.a_min}, {self.a_max}]")

    @property
    def width(self) -> float:
        return self.a_max - self.a_min


@dataclass(frozen=True)
class MomentTable:
    """Raw power integrals M_n = int a^n da over an action interval, n = 0..4."""

    m: tuple[float, ...]

    @classmethod
    def for_interval(cls, interval: ActionInterval) -> "MomentTable":
        lo, hi = interval.a_min, interval.a_max
        return cls(tuple((hi ** (n + 1) - lo ** (n + 1)) / (n + 1) for n in range(5)))

    def __getitem__(self, n: int) -> float:
        return self.m[n]


@dataclass(frozen=True)
class GaussianPolicy:
    """Gaussian action density; sampling clamps realizations into ``interval``."""

    mean: float
    variance: float
    interval: ActionInterval | None = None

    def __post_init__(self):
        if not self.variance > 0.0:
            raise ValueError(f"variance must be positive, got {self.variance}")

    def pdf(self, a):
        a = np.asarray(a, dtype=float)
        z = (a - self.mean) ** 2 / (2.0 * self.variance)
        return np.exp(-z) / math.sqrt(2.0 * math.pi * self.variance)

    def log_pdf(self, a):
        a = np.asarray(a, dtype=float)
        return -((a - self.mean) ** 2) / (2.0 * self.variance) - 0.5 * math.log(
            2.0 * math.pi * self.variance
        )


@dataclass(frozen=True)
class QuadraticPolicy:
    """Clipped-quadratic action density pi(a) = (k2 a^2 + k1 a + psi)_+ / (2 gamma Z).

    ``psi`` is the affine normalizer computed under the everywhere-positive
    assumption; when the quadratic dips below zero inside the interval the
    density is clipped at zero and ``norm`` (= Z) renormalizes the remainder,
    with ``clamped`` flagging that the assumption failed.
    """

    k1: float
    k2: float
    psi: float
    gamma: float
    interval: ActionInterval
    norm: float = 1.0
    clamped: bool = False
    moments: MomentTable = field(repr=False, default=None)

    def __post_init__(self):
        if not self.gamma > 0.0:
            raise ValueError(f"temperature must be positive, got {self.gamma}")
        if self.moments is None:
            object.__setattr__(self, "moments", MomentTable.for_interval(self.interval))

    def pdf(self, a):
        a = np.asarray(a, dtype=float)
        h = self.k2 * a * a + self.k1 * a + self.psi
        out = np.maximum(h, 0.0) / (2.0 * self.gamma * self.norm)
        out = np.where((a < self.interval.a_min) | (a > self.interval.a_max), 0.0, out)
        return out if out.ndim else float(out)

    def log_pdf(self, a):
        with np.errstate(divide="ignore"):
            return np.log(self.pdf(a))


def gaussian_policy(rho: float, sigma: float, A: float, B: float, x: float, w: float,
                    gamma: float, interval: ActionInterval | None = None) -> GaussianPolicy:
    """Gaussian exploratory policy N(-rho*(x + w*B)/sigma, gamma/(2*sigma^2*A))."""
    if not A > 0.0:
        raise AnsatzViolationError(f"value-curvature coefficient must be positive, got A={A}")
    if not sigma > 0.0:
        raise ValueError(f"volatility must be positive, got {sigma}")
    if not gamma > 0.0:
        raise ValueError(f"temperature must be positive, got {gamma}")
    mean = -rho * (x + w * B) / sigma
    variance = gamma / (2.0 * sigma * sigma * A)
    return GaussianPolicy(mean=mean, variance=variance, interval=interval)


def quadratic_normalizer(k1: float, k2: float, gamma: float, interval: ActionInterval) -> float:
    """Affine normalizer psi = (2*gamma - k2*M2 - k1*M1) / M0.

    Makes the unclipped quadratic density integrate to one; a negative lobe
    inside the interval (handled by the policy constructor) is not this
    function's concern.
    """
    if not gamma > 0.0:
        raise ValueError(f"temperature must be positive, got {gamma}")
    m = MomentTable.for_interval(interval)
    return (2.0 * gamma - k2 * m[2] - k1 * m[1]) / m[0]


def quadratic_policy(k1: float, k2: float, gamma: float, interval: ActionInterval) -> QuadraticPolicy:
    """Build a normalized clipped-quadratic policy from its curvature and slope.

    Positivity of k2 a^2 + k1 a + psi is checked at both endpoints and at the
    vertex; if it fails anywhere the density is clipped at zero and
    renormalized exactly, and the returned policy carries ``clamped=True``.
    """
    psi = quadratic_normalizer(k1, k2, gamma, interval)
    clamped = not _positive_on_interval(k2, k1, psi, interval)
    norm = 1.0
    if clamped:
        i0, _, _ = clipped_quadratic_integrals(k2, k1, psi, interval.a_min, interval.a_max)
        norm = float(i0) / (2.0 * gamma)
        if norm <= 0.0:
            raise AnsatzViolationError(
                f"clipped-quadratic density has no positive mass on "
                f"[{interval.a_min}, {interval.a_max}] (k1={k1}, k2={k2}, psi={psi})"
            )
    return QuadraticPolicy(k1=k1, k2=k2, psi=psi, gamma=gamma, interval=interval,
                           norm=norm, clamped=clamped)


def _positive_on_interval(k2: float, k1: float, c: float, interval: ActionInterval) -> bool:
    lo, hi = interval.a_min, interval.a_max
    if k2 * lo * lo + k1 * lo + c < 0.0 or k2 * hi * hi + k1 * hi + c < 0.0:
        return False
    if abs(k2) > 0.0:
        vertex = -k1 / (2.0 * k2)
        if lo < vertex < hi and k2 * vertex * vertex + k1 * vertex + c < 0.0:
            return False
    return True


def quadratic_moments(policy: QuadraticPolicy) -> tuple[float, float]:
    """First and second moments (E[a], E[a^2]) of a clipped-quadratic policy.

    On a fully positive density these are the closed forms built from the raw
    power integrals M_0..M_4; once clipping is active the moments come from
    the exact piecewise integrals of the clipped density instead.
    """
    if policy.clamped:
        i0, i1, i2 = clipped_quadratic_integrals(
            policy.k2, policy.k1, policy.psi, policy.interval.a_min, policy.interval.a_max
        )
        return float(i1 / i0), float(i2 / i0)
    m = policy.moments
    k1, k2, tg = policy.k1, policy.k2, 2.0 * policy.gamma
    e1 = m[1] / m[0] + (k1 * (m[2] - m[1] ** 2 / m[0]) + k2 * (m[3] - m[1] * m[2] / m[0])) / tg
    e2 = m[2] / m[0] + (k1 * (m[3] - m[1] * m[2] / m[0]) + k2 * (m[4] - m[2] ** 2 / m[0])) / tg
    return e1, e2


def squared_density_integral(policy: QuadraticPolicy) -> float:
    """Exact integral of pi(a)^2 over the action interval."""
    s = clipped_quadratic_square_integral(
        policy.k2, policy.k1, policy.psi, policy.interval.a_min, policy.interval.a_max
    )
    return float(s) / (2.0 * policy.gamma * policy.norm) ** 2


def squared_density_term(policy: QuadraticPolicy) -> float:
    """Moment-offset expansion of -gamma * (1 - int pi^2 da).

    Written as -gamma*(1 - 1/M0) + [k2*(E[a^2] - M2/M0) + k1*(E[a] - M1/M0)]/2;
    this is exact whenever the quadratic stays positive on the whole interval
    and an approximation once clipping is active.
    """
    m = policy.moments
    e1, e2 = quadratic_moments(policy)
    g = policy.gamma
    return -g * (1.0 - 1.0 / m[0]) + 0.5 * (
        policy.k2 * (e2 - m[2] / m[0]) + policy.k1 * (e1 - m[1] / m[0])
    )


def sample_action(policy, rng: np.random.Generator):
    """Draw one action (or a vector, for array-shaped Gaussian parameters).

    Gaussian policies use the standard-normal transform and clamp the result
    into the action interval when one is attached; clipped-quadratic policies
    invert a precomputed CDF grid with linear interpolation.
    """
    if isinstance(policy, GaussianPolicy):
        a = policy.mean + math.sqrt(policy.variance) * rng.standard_normal()
        if policy.interval is not None:
            a = min(max(a, policy.interval.a_min), policy.interval.a_max)
        return float(a)
    if isinstance(policy, QuadraticPolicy):
        grid, cdf = _inverse_cdf_table(policy)
        return float(np.interp(rng.uniform(), cdf, grid))
    raise TypeError(f"unsupported policy type {type(policy)!r}")


def _inverse_cdf_table(policy: QuadraticPolicy, n: int = INV_CDF_GRID):
    grid = np.linspace(policy.interval.a_min, policy.interval.a_max, n)
    pdf = policy.pdf(grid)
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (pdf[1:] + pdf[:-1]) * np.diff(grid))])
    cdf /= cdf[-1]
    return grid, cdf


def gibbs_density(q_values, gamma: float, interval: ActionInterval, n: int = SIMPSON_NODES):
    """Normalized Gibbs density exp(q(a)/gamma) / int exp(q/gamma) on a grid.

    ``q_values`` is a callable of the action or an array already evaluated on
    the Simpson grid. Returns (grid, density).
    """
    grid = simpson_nodes(interval.a_min, interval.a_max, n)
    q = np.asarray(q_values(grid) if callable(q_values) else q_values, dtype=float)
    if q.shape != grid.shape:
        raise ValueError("q_values array must match the quadrature grid")
    if not np.all(np.isfinite(q)):
        raise ValueError("q must be finite on the action interval")
    logit = q / gamma
    unnorm = np.exp(logit - logit.max())
    z = simpson_integrate(unnorm, interval.a_min, interval.a_max)
    return grid, unnorm / z


def tsallis_power_density(q_values, gamma: float, p: float, interval: ActionInterval,
                          n: int = SIMPSON_NODES):
    """Density ((p-1)/(p*gamma))^(1/(p-1)) * (q(a) + psi)_+^(1/(p-1)) on a grid.

    The normalizer psi is found by bisection on the monotone map
    psi -> int density da; p = 1 falls back to the Gibbs form. Returns
    (grid, density).
    """
    if p == 1.0:
        return gibbs_density(q_values, gamma, interval, n)
    grid = simpson_nodes(interval.a_min, interval.a_max, n)
    q = np.asarray(q_values(grid) if callable(q_values) else q_values, dtype=float)
    if not np.all(np.isfinite(q)):
        raise ValueError("q must be finite on the action interval")
    log_scale = math.log((p - 1.0) / (p * gamma)) / (p - 1.0)
    expo = 1.0 / (p - 1.0)

    def log_mass(psi):
        # evaluate in log space: near order one the exponent is huge and the
        # direct power overflows
        h = np.maximum(q + psi, 0.0)
        pos = h > 0.0
        if not np.any(pos):
            return -np.inf
        logh = np.full_like(q, -np.inf)
        logh[pos] = expo * np.log(h[pos])
        peak = logh.max()
        vals = np.exp(np.maximum(logh - peak, -745.0))
        integral = simpson_integrate(vals, interval.a_min, interval.a_max)
        return log_scale + peak + math.log(max(integral, 1e-300))

    lo = -float(q.max())  # zero density
    hi = lo + 1.0
    while log_mass(hi) < 0.0:
        hi = lo + 2.0 * (hi - lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if log_mass(mid) < 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-15 * max(1.0, abs(hi)):
            break
    psi = 0.5 * (lo + hi)
    h = np.maximum(q + psi, 0.0)
    pos = h > 0.0
    logd = np.full_like(q, -np.inf)
    logd[pos] = log_scale + expo * np.log(h[pos])
    dens = np.exp(np.maximum(logd, -745.0))
    dens[~pos] = 0.0
    # pin any residual bisection slack onto the quadrature normalization
    dens /= simpson_integrate(dens, interval.a_min, interval.a_max)
    return grid, dens
