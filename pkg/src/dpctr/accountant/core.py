"""Accounting entry points: epsilon queries over both adjacency directions.

A DP-SGD run is the steps-fold composition of one Poisson-subsampled
Gaussian step. Both the add and remove adjacency directions are accounted
and the reported epsilon is their maximum. Tail budgets follow the
discretization policy: the single-step grid keeps each discarded tail below
delta * 1e-4 / steps so the composed infinity atom stays below delta * 1e-4,
and composition truncation gets the same delta * 1e-4 headroom.
"""

import math

from .mechanism import DIRECTIONS
from .pld import DEFAULT_GRID_STEP, PrivacyLossDistribution
from .rdp import DEFAULT_ORDERS, rdp_epsilon, rdp_subsampled_gaussian, rdp_to_epsilon

METHODS = ("pld", "rdp")


def _tail_budgets(delta: float, steps: int) -> tuple[float, float]:
    headroom = delta * 1e-4
    return headroom / max(steps, 1), headroom


def account(
    q: float,
    sigma: float,
    steps: int,
    delta: float,
    method: str = "pld",
    direction: str = "both",
    grid_step: float = DEFAULT_GRID_STEP,
) -> float:
    """Epsilon consumed by `steps` subsampled-Gaussian steps at (q, sigma)."""
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must be in (0, 1)")
    if sigma <= 0.0:
        raise ValueError("sigma must be > 0")
    if method == "rdp":
        return rdp_epsilon(q, sigma, steps, delta)
    tail_single, tail_compose = _tail_budgets(delta, steps)
    directions = DIRECTIONS if direction == "both" else (direction,)
    if q == 1.0 and direction == "both":
        directions = ("remove",)  # N(0,s^2) vs N(1,s^2): directions coincide by reflection
    eps = -math.inf
    for adjacency in directions:
        single = PrivacyLossDistribution.from_hockey_stick(
            q, sigma, grid_step=grid_step, direction=adjacency, tail_mass=tail_single
        )
        composed = single.compose(steps, tail_mass=tail_compose)
        eps = max(eps, composed.epsilon(delta))
    return eps


class EpsilonTracker:
    """Budget-so-far queries during training; single-step PLDs built once."""

    def __init__(
        self,
        q: float,
        sigma: float,
        delta: float,
        total_steps: int,
        method: str = "pld",
        grid_step: float = DEFAULT_GRID_STEP,
    ):
        if method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        self.delta = delta
        self.method = method
        self._infinite = sigma == 0.0
        if self._infinite:
            return
        tail_single, self._tail_compose = _tail_budgets(delta, total_steps)
        if method == "pld":
            directions = ("remove",) if q == 1.0 else DIRECTIONS
            self._singles = {
                adjacency: PrivacyLossDistribution.from_hockey_stick(
                    q, sigma, grid_step=grid_step, direction=adjacency, tail_mass=tail_single
                )
                for adjacency in directions
            }
        else:
            self._rho = rdp_subsampled_gaussian(q, sigma)

    def epsilon(self, steps: int) -> float:
        if self._infinite:
            return math.inf
        if steps < 1:
            return 0.0
        if self.method == "rdp":
            return rdp_to_epsilon(self._rho, DEFAULT_ORDERS, steps, self.delta)
        return max(
            single.compose(steps, tail_mass=self._tail_compose).epsilon(self.delta)
            for single in self._singles.values()
        )
