"""Evaluation metrics: exact AUC, AUC loss, Poisson log loss, loss increments."""

import dataclasses

import numpy as np
from scipy.stats import rankdata

from .errors import ContractError, TaskMismatchError, UndefinedAucError


@dataclasses.dataclass(frozen=True)
class EvalResult:
    split: str
    kind: str  # "auc_loss" | "pll"
    value: float
    count: int


def auc(scores, labels) -> float:
    """Exact ROC AUC via the rank-sum (Mann-Whitney) statistic, ties averaged."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise UndefinedAucError("AUC needs at least one positive and one negative label")
    if n_pos + n_neg != labels.size:
        raise UndefinedAucError("AUC labels must be binary")
    ranks = rankdata(scores, method="average")
    rank_sum = float(ranks[labels == 1].sum())
    u_stat = rank_sum - n_pos * (n_pos + 1) / 2.0
    return u_stat / (n_pos * n_neg)


def auc_loss(scores, labels) -> float:
    return 1.0 - auc(scores, labels)


def relative_increment(loss_private: float, loss_baseline: float) -> float:
    """Percentage loss increase of a private model over the baseline."""
    if loss_baseline <= 0.0:
        raise ContractError("baseline loss must be positive")
    return 100.0 * (loss_private - loss_baseline) / loss_baseline


def test_pll(logits, labels) -> float:
    """Mean unnormalized Poisson log loss exp(f) - y*f over the dataset."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if (labels < 0).any():
        raise TaskMismatchError("PLL requires non-negative count labels")
    return float(np.mean(np.exp(logits) - labels * logits))
