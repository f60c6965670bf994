"""Renyi-DP accounting for the Poisson-subsampled Gaussian mechanism.

At integer order alpha >= 2 the Renyi divergence of one step admits the
exact binomial expansion

    rho(alpha) = ln( sum_{j=0}^{alpha} C(alpha, j) (1-q)^{alpha-j} q^j
                     e^{j(j-1) / (2 sigma^2)} ) / (alpha - 1),

evaluated here entirely in log space. Composition is additive in rho, and
conversion to (eps, delta) uses eps = min_alpha [T rho + ln(1/delta)/(alpha-1)].
"""

import math

import numpy as np
from scipy.special import gammaln, logsumexp, xlogy

DEFAULT_ORDERS = np.arange(2, 513)


def rdp_subsampled_gaussian(q: float, sigma: float, orders=DEFAULT_ORDERS) -> np.ndarray:
    """rho(alpha) per step for each integer order alpha."""
    if sigma <= 0.0:
        raise ValueError("sigma must be > 0")
    if not 0.0 <= q <= 1.0:
        raise ValueError("q must be in [0, 1]")
    orders = np.asarray(orders, dtype=np.int64)
    if (orders < 2).any():
        raise ValueError("orders must be integers >= 2")
    out = np.empty(len(orders))
    for i, alpha in enumerate(orders):
        j = np.arange(alpha + 1)
        log_binom = gammaln(alpha + 1) - gammaln(j + 1) - gammaln(alpha - j + 1)
        log_terms = (
            log_binom
            + xlogy(alpha - j, 1.0 - q)
            + xlogy(j, q)
            + j * (j - 1) / (2.0 * sigma * sigma)
        )
        out[i] = logsumexp(log_terms) / (alpha - 1)
    return np.maximum(out, 0.0)


def rdp_to_epsilon(rho: np.ndarray, orders=DEFAULT_ORDERS, steps: int = 1, delta: float = 1e-6) -> float:
    """Best (eps, delta) conversion across orders after steps-fold composition."""
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must be in (0, 1)")
    if steps < 0:
        raise ValueError("steps must be >= 0")
    orders = np.asarray(orders, dtype=np.float64)
    eps = steps * np.asarray(rho) + math.log(1.0 / delta) / (orders - 1.0)
    return float(eps.min())


def rdp_epsilon(q: float, sigma: float, steps: int, delta: float, orders=DEFAULT_ORDERS) -> float:
    return rdp_to_epsilon(rdp_subsampled_gaussian(q, sigma, orders), orders, steps, delta)
