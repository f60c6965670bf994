"""Numerical privacy accounting for Poisson-subsampled Gaussian mechanisms.

Two interchangeable accountants: discretized privacy loss distributions
(tight, FFT composition) and Renyi DP (closed form at integer orders), plus
noise-multiplier calibration and batch-size sweeps built on either.
"""

from .calibrate import calibrate_sigma, sweep_batch_noise, sweep_epsilon_methods
from .core import METHODS, EpsilonTracker, account
from .mechanism import DIRECTIONS, hockey_stick
from .pld import DEFAULT_GRID_STEP, PrivacyLossDistribution
from .rdp import DEFAULT_ORDERS, rdp_epsilon, rdp_subsampled_gaussian, rdp_to_epsilon

__all__ = [
    "METHODS",
    "DIRECTIONS",
    "DEFAULT_GRID_STEP",
    "DEFAULT_ORDERS",
    "EpsilonTracker",
    "PrivacyLossDistribution",
    "account",
    "calibrate_sigma",
    "hockey_stick",
    "rdp_epsilon",
    "rdp_subsampled_gaussian",
    "rdp_to_epsilon",
    "sweep_batch_noise",
    "sweep_epsilon_methods",
]
