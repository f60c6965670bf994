"""Closed-form hockey-stick divergence of the Poisson-subsampled Gaussian.

One mechanism step with sampling probability q and noise multiplier sigma
compares the pair of output distributions

    P = (1-q) N(0, sigma^2) + q N(1, sigma^2)      (neighbor's example in)
    Q = N(0, sigma^2)                               (neighbor's example out)

The 'remove' direction is the divergence of P from Q, 'add' the reverse.
Everything here evaluates in log space through the normal log-CDF, so the
deep tails needed for grid sizing stay accurate down to ~1e-300.

The likelihood ratio P/Q at x is (1-q) + q*exp((x - 1/2)/sigma^2), strictly
increasing in x, which gives closed-form level sets: the privacy loss
exceeds eps exactly on x > threshold(eps) with

    threshold(eps) = 1/2 + sigma^2 * ln((e^eps - (1-q)) / q).
"""

import math

import numpy as np
from scipy.special import log_ndtr

DIRECTIONS = ("remove", "add")


def _threshold(q: float, sigma: float, eps):
    """x above which ln(P/Q) > eps; -inf where e^eps <= 1-q."""
    eps = np.asarray(eps, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        # ln(e^eps - (1-q)) = eps + log1p(-(1-q) e^-eps), stable for large eps
        inner = np.log1p(-(1.0 - q) * np.exp(-eps))
    out = 0.5 + sigma * sigma * (eps + inner - np.log(q))
    return np.where(np.exp(eps) <= 1.0 - q, -np.inf, out)


def hockey_stick(q: float, sigma: float, eps, direction: str = "remove"):
    """delta(eps): the smallest delta making one step (eps, delta)-indistinguishable.

    Vectorized over eps. direction='remove' bounds P against e^eps * Q,
    'add' bounds Q against e^eps * P.
    """
    if direction not in DIRECTIONS:
        raise ValueError(f"direction must be one of {DIRECTIONS}")
    if sigma <= 0.0:
        raise ValueError("sigma must be > 0")
    if q == 0.0:
        return np.zeros_like(np.asarray(eps, dtype=np.float64))
    if not 0.0 < q <= 1.0:
        raise ValueError("q must be in [0, 1]")
    eps = np.asarray(eps, dtype=np.float64)
    if direction == "remove":
        x_star = _threshold(q, sigma, eps)
        finite = np.isfinite(x_star)
        delta = 1.0 - np.exp(eps)  # e^eps <= 1-q branch: whole line qualifies
        x = np.where(finite, x_star, 1.0)
        # delta = q * [ubar((x-1)/sigma) - e^{(x-1/2)/sigma^2} ubar(x/sigma)]
        log_a = log_ndtr(-(x - 1.0) / sigma)
        log_b = (x - 0.5) / (sigma * sigma) + log_ndtr(-x / sigma)
        val = -q * np.exp(log_a) * np.expm1(log_b - log_a)
        delta = np.where(finite, val, delta)
    else:
        # Q > e^eps P on x < x_low, with x_low = threshold evaluated at -eps;
        # empty unless e^-eps > 1-q.
        x_low = _threshold(q, sigma, -eps)
        finite = np.isfinite(x_low)
        x = np.where(finite, x_low, 1.0)
        log_a = eps + (x - 0.5) / (sigma * sigma) + log_ndtr(x / sigma)
        log_b = eps + log_ndtr((x - 1.0) / sigma)
        val = -q * np.exp(log_a) * np.expm1(log_b - log_a)
        # the empty-level-set branch only occurs at eps >= -ln(1-q) >= 0
        delta = np.where(finite, val, 0.0)
    return np.maximum(delta, 0.0)


def hockey_stick_slope(q: float, sigma: float, eps, direction: str = "remove"):
    """|d delta / d eps| = e^eps * (mass of the lower distribution past the threshold).

    The boundary term vanishes because the densities are in exact ratio e^eps
    at the threshold, leaving only the explicit e^eps factor. Differencing
    delta between nearby grid points through this slope avoids the
    catastrophic cancellation of subtracting two close delta values.
    """
    eps = np.asarray(eps, dtype=np.float64)
    if q == 0.0:
        return np.zeros_like(eps)
    if direction == "remove":
        x_star = _threshold(q, sigma, eps)
        finite = np.isfinite(x_star)
        x = np.where(finite, x_star, 0.0)
        out = np.exp(eps + log_ndtr(-x / sigma))
        return np.where(finite, out, np.exp(eps))
    if direction == "add":
        x_low = _threshold(q, sigma, -eps)
        finite = np.isfinite(x_low)
        x = np.where(finite, x_low, 0.0)
        with np.errstate(divide="ignore"):
            log_mix = np.logaddexp(
                np.log1p(-q) + log_ndtr(x / sigma),
                math.log(q) + log_ndtr((x - 1.0) / sigma),
            )
        return np.where(finite, np.exp(eps + log_mix), 0.0)
    raise ValueError(f"direction must be one of {DIRECTIONS}")


def loss_tail_mass(q: float, sigma: float, eps, direction: str = "remove"):
    """P[privacy loss > eps] under the direction's sampling distribution.

    Used to size the discretization grid: remove-direction losses live in
    (ln(1-q), inf) under P; add-direction losses live in (-inf, -ln(1-q))
    under Q.
    """
    eps = np.asarray(eps, dtype=np.float64)
    if direction == "remove":
        x_star = _threshold(q, sigma, eps)
        finite = np.isfinite(x_star)
        x = np.where(finite, x_star, 0.0)
        mass = (1.0 - q) * np.exp(log_ndtr(-x / sigma)) + q * np.exp(
            log_ndtr(-(x - 1.0) / sigma)
        )
        return np.where(finite, mass, 1.0)
    if direction == "add":
        # loss_add(x) = -ln(P/Q)(x) decreases in x; loss_add > eps on x < x_low
        x_low = _threshold(q, sigma, -eps)
        finite = np.isfinite(x_low)
        x = np.where(finite, x_low, 0.0)
        mass = np.exp(log_ndtr(x / sigma))
        return np.where(finite, mass, 0.0)
    raise ValueError(f"direction must be one of {DIRECTIONS}")


def support_bounds(q: float, sigma: float, direction: str) -> tuple[float, float]:
    """(lower, upper) bounds of the privacy-loss support; +-inf when unbounded."""
    if q >= 1.0:
        return (-np.inf, np.inf)
    edge = np.log1p(-q)  # ln(1-q)
    if direction == "remove":
        return (edge, np.inf)
    return (-np.inf, -edge)


def _bisect_decreasing(fn, target: float, lo: float, hi: float, iters: int = 200) -> float:
    """Smallest x in [lo, hi] with fn(x) <= target, for non-increasing fn."""
    if fn(lo) <= target:
        return lo
    if fn(hi) > target:
        raise ValueError("target not reachable within bracket")
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if fn(mid) <= target:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-9 * max(1.0, abs(hi)):
            break
    return hi


def grid_bounds(q: float, sigma: float, tail_mass: float, direction: str) -> tuple[float, float]:
    """Loss-value range outside of which both tails carry <= tail_mass each."""
    lo_support, hi_support = support_bounds(q, sigma, direction)
    # Upper end: either the finite support edge or where delta itself is tiny
    # (the infinity atom of the discretization equals delta at the top point).
    if np.isfinite(hi_support):
        hi = float(hi_support)
    else:
        hi = _bisect_decreasing(
            lambda e: float(hockey_stick(q, sigma, e, direction)),
            tail_mass,
            lo=0.0,
            hi=_expand_upper(q, sigma, tail_mass, direction),
        )
    if np.isfinite(lo_support):
        lo = float(lo_support)
    else:
        # largest eps with mass-below <= tail_mass; mass_below = 1 - tail(eps)
        lo = -_bisect_decreasing(
            lambda e: float(1.0 - loss_tail_mass(q, sigma, -e, direction)),
            tail_mass,
            lo=-hi - 1.0 if hi > 0 else -1.0,
            hi=_expand_lower(q, sigma, tail_mass, direction),
        )
    return lo, hi


def _expand_upper(q: float, sigma: float, tail_mass: float, direction: str) -> float:
    hi = 1.0
    for _ in range(60):
        if float(hockey_stick(q, sigma, hi, direction)) <= tail_mass:
            return hi
        hi *= 2.0
    raise ValueError("could not bracket upper grid bound")


def _expand_lower(q: float, sigma: float, tail_mass: float, direction: str) -> float:
    # find e with mass below -e <= tail, i.e. 1 - tail_mass(-e) <= tail
    hi = 1.0
    for _ in range(60):
        if float(1.0 - loss_tail_mass(q, sigma, -hi, direction)) <= tail_mass:
            return hi
        hi *= 2.0
    raise ValueError("could not bracket lower grid bound")
