"""Discretized privacy loss distributions on a uniform grid.

A PLD is stored as probability masses on the lattice {index * grid_step}
plus an atom at +infinity. Discretization follows the connect-the-dots
scheme: the unique lattice distribution whose hockey-stick curve agrees with
the mechanism's exact curve at every grid point. Between grid points the
discretized curve is the chord of a convex curve, so every query is an upper
bound on the true delta (pessimistic, never optimistic).

Composition convolves the finite part (FFT, exponentiation by squaring) and
combines infinity atoms as 1 - (1-p)^T. Mass pushed outside the adaptively
chosen target range is moved pessimistically: above the grid into the
infinity atom, below the grid up into the bottom bin.
"""

import dataclasses
import math

import numpy as np
from scipy import fft as sp_fft
from scipy.signal import lfilter
from scipy.special import logsumexp

from ..errors import DiscretizationError
from . import mechanism

DEFAULT_GRID_STEP = 1e-4
_MAX_GRID_POINTS = 40_000_000


@dataclasses.dataclass
class PrivacyLossDistribution:
    """Masses over the lattice eps_k = (min_index + k) * grid_step, plus p_inf."""

    grid_step: float
    min_index: int
    masses: np.ndarray
    inf_mass: float

    @property
    def grid(self) -> np.ndarray:
        return (self.min_index + np.arange(len(self.masses))) * self.grid_step

    @property
    def total_mass(self) -> float:
        return float(self.masses.sum() + self.inf_mass)

    def validate(self, atol: float = 1e-12) -> None:
        if (self.masses < 0.0).any() or self.inf_mass < 0.0:
            raise DiscretizationError("negative probability mass")
        if abs(self.total_mass - 1.0) > atol:
            raise DiscretizationError(f"total mass {self.total_mass} != 1")

    @classmethod
    def from_hockey_stick(
        cls,
        q: float,
        sigma: float,
        grid_step: float = DEFAULT_GRID_STEP,
        direction: str = "remove",
        tail_mass: float = 1e-12,
    ) -> "PrivacyLossDistribution":
        """Connect-the-dots discretization of one subsampled-Gaussian step.

        The grid spans the loss support, trimmed where either tail carries
        less than tail_mass; the infinity atom picks up delta at the top
        grid point and the bottom bin absorbs everything below the grid.
        """
        lo, hi = mechanism.grid_bounds(q, sigma, tail_mass, direction)
        min_index = math.floor(lo / grid_step)
        max_index = math.ceil(hi / grid_step)
        n = max_index - min_index + 1
        if n > _MAX_GRID_POINTS:
            raise DiscretizationError(f"grid would need {n} points at step {grid_step}")
        if n < 2:
            raise DiscretizationError("grid needs at least two points")
        eps = np.arange(min_index, max_index + 1) * grid_step
        # Delta drops between adjacent grid points, two ways. Direct
        # differencing is exact up to ~1e-16 * delta per cell (adjacent
        # values are close enough that the subtraction itself is exact) but
        # that jitter, amplified by 1/(1-c) below, pollutes wide smooth
        # grids. Gauss-Legendre integration of the exact slope is clean
        # there yet misses sub-cell structure right above a finite support
        # edge. Keep the quadrature wherever the two agree to within the
        # differencing noise floor, and trust the difference where they
        # visibly disagree (exactly the near-edge cells).
        deltas = mechanism.hockey_stick(q, sigma, eps, direction)
        half = 0.5 * grid_step
        node = half / math.sqrt(3.0)
        mid = eps[:-1] + half
        quad = half * (
            mechanism.hockey_stick_slope(q, sigma, mid - node, direction)
            + mechanism.hockey_stick_slope(q, sigma, mid + node, direction)
        )
        diff = deltas[:-1] - deltas[1:]
        drops = np.where(np.abs(quad - diff) > 1e-12 * deltas[:-1], diff, quad)
        return cls._solve_connect_the_dots(grid_step, min_index, drops, float(deltas[-1]))

    @classmethod
    def _solve_connect_the_dots(
        cls, grid_step: float, min_index: int, drops: np.ndarray, inf_mass: float
    ) -> "PrivacyLossDistribution":
        """Invert delta drops on the grid into lattice masses (O(n)).

        With c = exp(-grid_step) and dd_k = delta(eps_k) - delta(eps_{k+1}),
        the unique distribution matching delta at every grid point satisfies
            p_n     = dd_{n-1} / (1 - c)
            p_k     = (dd_{k-1} - c dd_k) / (1 - c),  0 < k < n
            p_inf   = delta(eps_n),
            p_0     = 1 - p_inf - sum_{k>0} p_k.
        Negative masses from float round-off are clamped to zero with the
        difference restored to p_0.
        """
        n = len(drops) + 1
        c = math.exp(-grid_step)
        masses = np.zeros(n)
        masses[-1] = drops[-1] / (1.0 - c)
        if n > 2:
            masses[1:-1] = (drops[:-1] - c * drops[1:]) / (1.0 - c)
        # Head before clamping: per-mass rounding noise telescopes in this
        # sum, so it is accurate to ~1e-15 even over millions of cells.
        head = 1.0 - inf_mass - float(masses[1:].sum())
        negative = masses[1:] < 0.0
        if negative.any():
            head += float(masses[1:][negative].sum())  # restore clamped mass to p_0
            masses[1:][negative] = 0.0
        if head < -1e-9:
            raise DiscretizationError(f"leading mass {head:.3e} < 0; grid too coarse")
        if head >= 0.0:
            masses[0] = head
        else:
            masses[0] = 0.0
            masses[int(np.argmax(masses))] += head  # keep total mass exactly 1
        return cls(grid_step=grid_step, min_index=min_index, masses=masses, inf_mass=inf_mass)

    def delta(self, eps: float) -> float:
        """Hockey-stick query: p_inf + sum_{eps_i > eps} p_i (1 - e^{eps - eps_i})."""
        grid = self.grid
        k = int(np.searchsorted(grid, eps, side="right"))
        if k >= len(grid):
            return self.inf_mass
        tail = self.masses[k:]
        return float(self.inf_mass - tail @ np.expm1(eps - grid[k:]))

    def epsilon(self, delta: float) -> float:
        """Smallest eps on the discretized curve with delta(eps) <= delta.

        Exact on each inter-grid interval: there delta(eps) = p_inf + A - B e^eps
        with A, B constant, so the crossing solves in closed form. Returns
        +inf when delta < p_inf (not reachable at any finite eps).
        """
        if not 0.0 < delta < 1.0:
            raise ValueError("delta must be in (0, 1)")
        if delta < self.inf_mass:
            return np.inf
        grid = self.grid
        n = len(grid)
        decay = math.exp(-self.grid_step)
        # suffix sums S1[k] = sum_{i>=k} p_i and the shifted-exponent suffix
        # V[k] = sum_{i>=k} p_i e^{eps_k - eps_i} = p_k + decay * V[k+1];
        # the recurrence keeps every term in [0, 1] no matter how wide the grid.
        suffix_mass = np.zeros(n + 1)
        suffix_mass[:-1] = np.cumsum(self.masses[::-1])[::-1]
        shifted = np.zeros(n + 1)
        shifted[:-1] = lfilter([1.0], [1.0, -decay], self.masses[::-1])[::-1]
        # delta at grid point k counts masses strictly above: indices >= k+1
        delta_grid = self.inf_mass + suffix_mass[1:] - decay * shifted[1:]
        k = int(np.argmax(delta_grid <= delta))  # first crossing; last is p_inf <= delta
        numerator = self.inf_mass + suffix_mass[k] - delta
        if shifted[k] <= 0.0 or numerator <= 0.0:
            return float(grid[k])  # no finite mass above: curve is flat here
        eps = float(grid[k]) + math.log(numerator / shifted[k])
        eps = min(eps, float(grid[k]))
        # nudge so the round trip delta(epsilon(d)) <= d holds under rounding
        return eps + 1e-12 * max(1.0, abs(eps))

    def compose(self, steps: int, tail_mass: float = 1e-12) -> "PrivacyLossDistribution":
        """steps-fold self-composition via FFT exponentiation by squaring.

        Every intermediate product is truncated to Chernoff bounds computed
        for its own effective step count, so partial products stay compact
        and each truncation discards at most tail_mass per tail (moved
        pessimistically: above the range into the infinity atom, below it up
        into the bottom bin).
        """
        if steps < 1:
            raise ValueError("steps must be >= 1")
        if steps == 1:
            return PrivacyLossDistribution(
                self.grid_step, self.min_index, self.masses.copy(), self.inf_mass
            )
        bounds = _ChernoffBounds(self, tail_mass)
        result: PrivacyLossDistribution | None = None
        result_steps = 0
        base = self
        base_steps = 1
        remaining = steps
        while remaining:
            if remaining & 1:
                if result is None:
                    result, result_steps = base, base_steps
                else:
                    result_steps += base_steps
                    result = _convolve(result, base, *bounds.index_range(result_steps))
            remaining >>= 1
            if remaining:
                base_steps *= 2
                base = _convolve(base, base, *bounds.index_range(base_steps))
        assert result is not None
        return result


class _ChernoffBounds:
    """Useful index range of a t-fold self-convolution, from single-step MGFs.

    P[X_t > b] <= M(lam)^t e^{-lam b} for lam > 0 (symmetrically for the
    lower tail); the single-step log-MGF is evaluated once on a lambda grid
    and reused for every effective step count t.
    """

    def __init__(self, single: PrivacyLossDistribution, tail_mass: float):
        self.grid_step = single.grid_step
        self.single_lo = float(single.grid[0])
        self.single_hi = float(single.grid[-1])
        self.log_tail = math.log(tail_mass)
        keep = single.masses > 0.0
        self.degenerate = not keep.any()
        if self.degenerate:
            return
        log_p = np.log(single.masses[keep])
        eps = single.grid[keep]
        self.lambdas = np.geomspace(1e-4, 1e4, 41)
        self.log_mgf_pos = np.array([logsumexp(log_p + lam * eps) for lam in self.lambdas])
        self.log_mgf_neg = np.array([logsumexp(log_p - lam * eps) for lam in self.lambdas])

    def index_range(self, t: int) -> tuple[int, int]:
        if self.degenerate:
            lower, upper = t * self.single_lo, t * self.single_hi
        else:
            upper = float(np.min((t * self.log_mgf_pos - self.log_tail) / self.lambdas))
            lower = float(np.max(-(t * self.log_mgf_neg - self.log_tail) / self.lambdas))
            lower = max(lower, t * self.single_lo)
            upper = min(upper, t * self.single_hi)
            if lower > upper:  # tails overlap: keep the exact support instead
                lower, upper = t * self.single_lo, t * self.single_hi
        lo_idx = math.floor(lower / self.grid_step)
        hi_idx = math.ceil(upper / self.grid_step)
        if hi_idx - lo_idx + 1 > _MAX_GRID_POINTS:
            raise DiscretizationError("composed grid too large; coarsen grid_step")
        return lo_idx, hi_idx


def _convolve(
    a: PrivacyLossDistribution,
    b: PrivacyLossDistribution,
    lo_idx: int,
    hi_idx: int,
) -> PrivacyLossDistribution:
    """Linear convolution of finite parts, truncated pessimistically to bounds."""
    n_full = len(a.masses) + len(b.masses) - 1
    n_fft = sp_fft.next_fast_len(n_full)
    fa = sp_fft.rfft(a.masses, n_fft)
    fb = sp_fft.rfft(b.masses, n_fft)
    conv = sp_fft.irfft(fa * fb, n_fft)[:n_full]
    np.maximum(conv, 0.0, out=conv)
    min_index = a.min_index + b.min_index
    inf_mass = a.inf_mass + b.inf_mass - a.inf_mass * b.inf_mass
    # restore the exact finite mass lost to FFT round-off on the largest bin
    target_finite = (1.0 - a.inf_mass) * (1.0 - b.inf_mass)
    conv[int(np.argmax(conv))] += target_finite - conv.sum()
    start = lo_idx - min_index
    stop = hi_idx - min_index + 1
    below = float(conv[: max(start, 0)].sum()) if start > 0 else 0.0
    above = float(conv[stop:].sum()) if stop < n_full else 0.0
    kept = conv[max(start, 0) : min(stop, n_full)]
    new_min = max(lo_idx, min_index)
    if start > 0 and len(kept):
        kept = kept.copy()
        kept[0] += below  # below-grid mass moves up to the bottom bin
    if len(kept) == 0:
        raise DiscretizationError("composition truncated the entire distribution")
    return PrivacyLossDistribution(
        grid_step=a.grid_step,
        min_index=new_min,
        masses=np.ascontiguousarray(kept),
        inf_mass=inf_mass + above,
    )
