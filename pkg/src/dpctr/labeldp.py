"""Label-only privacy via binary randomized response.

Each label is kept with probability e^eps / (1 + e^eps) and flipped
otherwise, independently and exactly once before training; features are
untouched. The transition matrix has odds e^eps : 1 between keeping and
flipping, which is the entire (eps, 0)-DP guarantee on the label.
"""

import dataclasses

import numpy as np
from scipy.special import expit

from .data import TASK_BINARY, Dataset
from .errors import TaskMismatchError
from .rng import STREAM_LABEL_RR, philox_generator


@dataclasses.dataclass(frozen=True)
class RRConfig:
    epsilon: float
    seed: int = 0

    def __post_init__(self):
        if not np.isfinite(self.epsilon) or self.epsilon <= 0.0:
            raise ValueError("label epsilon must be finite and > 0")

    @property
    def keep_probability(self) -> float:
        return float(expit(self.epsilon))

    @property
    def flip_probability(self) -> float:
        return float(expit(-self.epsilon))


def transition_odds(config: RRConfig) -> tuple[float, float]:
    """Unnormalized (keep, flip) odds; their ratio is exactly e^eps."""
    return float(np.exp(config.epsilon)), 1.0


def randomize_labels(dataset: Dataset, config: RRConfig) -> Dataset:
    """Flip each binary label independently with probability 1/(1+e^eps)."""
    if dataset.task != TASK_BINARY:
        raise TaskMismatchError("randomized response requires binary labels")
    rng = philox_generator(config.seed, stream=STREAM_LABEL_RR)
    keep = rng.random(dataset.n) < config.keep_probability
    flipped = np.where(keep, dataset.labels, 1 - dataset.labels)
    return dataset.replace_labels(flipped)
