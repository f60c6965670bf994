"""Noise-multiplier calibration and accountant-driven sweeps."""

import math

from ..errors import CalibrationRangeError
from . import core

SIGMA_MAX = 1e3
SIGMA_MIN = 1e-3


def calibrate_sigma(
    target_epsilon: float,
    delta: float,
    q: float,
    steps: int,
    method: str = "pld",
    rel_tol: float = 1e-3,
) -> float:
    """Smallest noise multiplier whose accounted epsilon is <= target.

    Log-space bisection to relative tolerance rel_tol, tightened until the
    returned sigma's epsilon lands in [0.99 * target, target].
    """
    if target_epsilon <= 0.0:
        raise ValueError("target epsilon must be > 0")

    def eps_at(sigma: float) -> float:
        return core.account(q, sigma, steps, delta, method=method)

    hi = 1.0
    for _ in range(64):
        if eps_at(hi) <= target_epsilon:
            break
        hi *= 2.0
        if hi > SIGMA_MAX:
            raise CalibrationRangeError(
                f"no sigma <= {SIGMA_MAX} reaches epsilon {target_epsilon}"
            )
    lo = hi / 2.0
    while lo >= SIGMA_MIN and eps_at(lo) <= target_epsilon:
        hi = lo
        lo /= 2.0
    if lo < SIGMA_MIN:
        # even the smallest probed noise already satisfies the target
        return hi
    for _ in range(200):
        eps_hi = eps_at(hi)
        if hi / lo - 1.0 <= rel_tol and eps_hi >= 0.99 * target_epsilon:
            break
        mid = math.sqrt(lo * hi)
        if eps_at(mid) <= target_epsilon:
            hi = mid
        else:
            lo = mid
    return hi


def sweep_batch_noise(
    n: int,
    target_epsilon: float,
    delta: float,
    batch_sizes,
    mode: str = "fixed_epochs",
    epochs: float | None = None,
    steps: int | None = None,
    method: str = "pld",
    clip_norm: float = 1.0,
) -> list[dict]:
    """Calibrated sigma per batch size, with the effective per-coordinate noise.

    fixed_epochs derives steps = ceil(epochs * n / B) per batch size;
    fixed_steps uses the given step count for every batch size. The
    effective noise std on the averaged gradient is sigma * clip_norm / B.
    """
    if mode == "fixed_epochs":
        if epochs is None:
            raise ValueError("fixed_epochs mode needs epochs")
    elif mode == "fixed_steps":
        if steps is None:
            raise ValueError("fixed_steps mode needs steps")
    else:
        raise ValueError("mode must be fixed_epochs or fixed_steps")
    rows = []
    for batch in batch_sizes:
        if batch > n:
            raise ValueError(f"batch size {batch} exceeds dataset size {n}")
        q = batch / n
        t = steps if mode == "fixed_steps" else max(1, math.ceil(epochs * n / batch))
        sigma = calibrate_sigma(target_epsilon, delta, q, t, method=method)
        rows.append(
            {
                "B": int(batch),
                "sigma": sigma,
                "effective_noise_std": sigma * clip_norm / batch,
                "steps": int(t),
                "q": q,
            }
        )
    return rows


def sweep_epsilon_methods(
    q: float, steps: int, delta: float, epsilons
) -> list[dict]:
    """Calibrated sigma under PLD vs RDP accounting for each target epsilon."""
    rows = []
    for eps in epsilons:
        rows.append(
            {
                "epsilon": float(eps),
                "sigma_pld": calibrate_sigma(eps, delta, q, steps, method="pld"),
                "sigma_rdp": calibrate_sigma(eps, delta, q, steps, method="rdp"),
            }
        )
    return rows
