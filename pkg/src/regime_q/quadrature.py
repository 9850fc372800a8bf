"""Numerical integration helpers.

Two tools live here: a composite-Simpson rule on a fixed uniform grid (used
for generic densities, the Gibbs map, and as the oracle in tests), and exact
closed-form integrals of clipped quadratics a -> (k2*a^2 + k1*a + c)_+ against
monomial weights, which is what the sparse-entropy policy machinery needs on
its hot paths.
"""

from __future__ import annotations

import numpy as np

SIMPSON_NODES = 4097  # power-of-two panel count + 1, per the density-integral convention

_ZERO_COEF = 1e-30


def simpson_nodes(a: float, b: float, n: int = SIMPSON_NODES) -> np.ndarray:
    """Uniform grid with an odd number of nodes suitable for Simpson's rule."""
    if n % 2 == 0:
        n += 1
    return np.linspace(a, b, n)


def simpson_integrate(values: np.ndarray, a: float, b: float):
    """Composite Simpson integral of samples on a uniform grid over [a, b].

    ``values`` may carry leading batch dimensions; integration runs over the
    last axis, which must have odd length.
    """
    values = np.asarray(values, dtype=float)
    n = values.shape[-1]
    if n < 3 or n % 2 == 0:
        raise ValueError(f"Simpson rule needs an odd node count >= 3, got {n}")
    h = (b - a) / (n - 1)
    weights = np.ones(n)
    weights[1:-1:2] = 4.0
    weights[2:-1:2] = 2.0
    return (h / 3.0) * (values @ weights)


def positive_pieces(k2, k1, c, a_min: float, a_max: float):
    """Subintervals of [a_min, a_max] where k2*a^2 + k1*a + c > 0.

    Returns (lo1, hi1, lo2, hi2), broadcast over the coefficient arrays; a
    piece with lo == hi is empty. At most the leading-positive quadratic case
    produces two pieces.
    """
    k2, k1, c = np.broadcast_arrays(
        np.asarray(k2, dtype=float), np.asarray(k1, dtype=float), np.asarray(c, dtype=float)
    )
    shape = k2.shape

    lo1 = np.full(shape, float(a_min))
    hi1 = np.full(shape, float(a_min))  # zero-width default: contributes nothing
    lo2 = np.full(shape, float(a_max))
    hi2 = np.full(shape, float(a_max))

    def clip(x):
        return np.clip(x, a_min, a_max)

    quad = np.abs(k2) > _ZERO_COEF
    lin = ~quad & (np.abs(k1) > _ZERO_COEF)
    const = ~quad & ~lin

    # constant: full interval when positive
    hi1 = np.where(const & (c > 0.0), a_max, hi1)

    # linear: positive on one side of the root
    r_lin = -c / np.where(lin, k1, 1.0)
    up = lin & (k1 > 0.0)
    dn = lin & (k1 < 0.0)
    lo1 = np.where(up, clip(r_lin), lo1)
    hi1 = np.where(up, a_max, hi1)
    hi1 = np.where(dn, clip(r_lin), hi1)

    # quadratic: split by discriminant and leading sign
    disc = k1 * k1 - 4.0 * k2 * c
    sq = np.sqrt(np.maximum(disc, 0.0))
    safe_k2 = np.where(quad, k2, 1.0)
    ra = (-k1 - sq) / (2.0 * safe_k2)
    rb = (-k1 + sq) / (2.0 * safe_k2)
    r1 = np.minimum(ra, rb)
    r2 = np.maximum(ra, rb)

    pos_full = quad & (k2 > 0.0) & (disc <= 0.0)
    hi1 = np.where(pos_full, a_max, hi1)

    pos_split = quad & (k2 > 0.0) & (disc > 0.0)  # positive outside [r1, r2]
    lo1 = np.where(pos_split, a_min, lo1)
    hi1 = np.where(pos_split, clip(r1), hi1)
    lo2 = np.where(pos_split, clip(r2), lo2)

    neg_inside = quad & (k2 < 0.0) & (disc > 0.0)  # positive inside (r1, r2)
    lo1 = np.where(neg_inside, clip(r1), lo1)
    hi1 = np.where(neg_inside, np.maximum(clip(r1), clip(r2)), hi1)

    return lo1, hi1, lo2, hi2


def clipped_quadratic_integrals(k2, k1, c, a_min: float, a_max: float, max_degree: int = 2):
    """Exact integrals of (k2 a^2 + k1 a + c)_+ times a^n over [a_min, a_max].

    ``k2``, ``k1``, ``c`` broadcast elementwise. Returns the tuple
    (I0, ..., I_max_degree); ``max_degree=1`` skips the quartic-power work on
    hot paths that only need the mean.
    """
    k2, k1, c = np.broadcast_arrays(
        np.asarray(k2, dtype=float), np.asarray(k1, dtype=float), np.asarray(c, dtype=float)
    )
    lo1, hi1, lo2, hi2 = positive_pieces(k2, k1, c, a_min, a_max)

    def moment(n, lo, hi):
        return (
            k2 * (hi ** (n + 3) - lo ** (n + 3)) / (n + 3)
            + k1 * (hi ** (n + 2) - lo ** (n + 2)) / (n + 2)
            + c * (hi ** (n + 1) - lo ** (n + 1)) / (n + 1)
        )

    return tuple(moment(n, lo1, hi1) + moment(n, lo2, hi2) for n in range(max_degree + 1))


def clipped_mean_upward(k2, k1, c, a_min: float, a_max: float):
    """Mean I1/I0 of (k2 a^2 + k1 a + c)_+ for strictly upward quadratics.

    Specialized hot path for k2 > 0 (positive region = interval minus the
    root gap); equals clipped_quadratic_integrals' ratio there with far fewer
    array operations.
    """
    disc = k1 * k1 - 4.0 * k2 * c
    sq = np.sqrt(np.maximum(disc, 0.0))
    inv = 0.5 / k2
    r1 = np.clip((-k1 - sq) * inv, a_min, a_max)
    r2 = np.clip((-k1 + sq) * inv, a_min, a_max)
    split = disc > 0.0
    hi1 = np.where(split, r1, a_min)   # piece 1: [a_min, hi1]
    lo2 = np.where(split, r2, a_min)   # piece 2: [lo2, a_max]

    third = 1.0 / 3.0
    k2_3, k1_2 = k2 * third, 0.5 * k1

    def ints(lo, hi):
        lo2_, hi2_ = lo * lo, hi * hi
        i0 = k2_3 * (hi * hi2_ - lo * lo2_) + k1_2 * (hi2_ - lo2_) + c * (hi - lo)
        i1 = 0.25 * k2 * (hi2_ * hi2_ - lo2_ * lo2_) + k1 * third * (hi * hi2_ - lo * lo2_) \
            + 0.5 * c * (hi2_ - lo2_)
        return i0, i1

    i0a, i1a = ints(a_min, hi1)
    i0b, i1b = ints(lo2, a_max)
    return (i1a + i1b) / (i0a + i0b)


def clipped_quadratic_square_integral(k2, k1, c, a_min: float, a_max: float):
    """Exact integral of [(k2 a^2 + k1 a + c)_+]^2 over [a_min, a_max]."""
    k2, k1, c = np.broadcast_arrays(
        np.asarray(k2, dtype=float), np.asarray(k1, dtype=float), np.asarray(c, dtype=float)
    )
    lo1, hi1, lo2, hi2 = positive_pieces(k2, k1, c, a_min, a_max)

    # (k2 a^2 + k1 a + c)^2 expanded by monomial degree
    c4 = k2 * k2
    c3 = 2.0 * k2 * k1
    c2 = k1 * k1 + 2.0 * k2 * c
    c1 = 2.0 * k1 * c
    c0 = c * c

    def quartic(lo, hi):
        return (
            c4 * (hi**5 - lo**5) / 5.0
            + c3 * (hi**4 - lo**4) / 4.0
            + c2 * (hi**3 - lo**3) / 3.0
            + c1 * (hi**2 - lo**2) / 2.0
            + c0 * (hi - lo)
        )

    return quartic(lo1, hi1) + quartic(lo2, hi2)
