"""Two-pass norm-bounded backward.

Pass 1 (`backward_norms`) produces each clipping unit's mean-gradient norm
from layer inputs and pre-activation gradients alone, never materializing a
per-unit gradient vector: for dense layers the squared norm is a pairwise
Gram reduction (the per-example identity ||g||^2 * (||a||^2 + 1) generalized
to microbatches), and embedding tables contribute dot products of rows that
hit the same table entry. Pass 2 (`backward_weighted`) obtains the weighted
sum of unit-mean gradients with one standard backward over head gradients
rescaled by weight/unit-size.

Clipping units are contiguous microbatches of `microbatch_size` examples in
batch order; the last unit may be smaller and is normalized by its own size.
"""

import dataclasses
import math

import numpy as np

from . import kernels
from .errors import ContractError
from .model import ForwardCache, ModelParams


@dataclasses.dataclass
class GradNorms:
    """Squared mean-gradient l2 norms, one per clipping unit."""

    sq_norms: np.ndarray
    microbatch_size: int
    unit_sizes: np.ndarray

    @property
    def norms(self) -> np.ndarray:
        return np.sqrt(self.sq_norms)

    def __len__(self) -> int:
        return len(self.sq_norms)


def unit_partition(batch_size: int, microbatch_size: int) -> np.ndarray:
    """Sizes of the contiguous clipping units for a batch."""
    if microbatch_size < 1:
        raise ContractError("microbatch_size must be >= 1")
    if batch_size == 0:
        return np.zeros(0, dtype=np.int64)
    n_units = math.ceil(batch_size / microbatch_size)
    sizes = np.full(n_units, microbatch_size, dtype=np.int64)
    sizes[-1] = batch_size - (n_units - 1) * microbatch_size
    return sizes


def backward_norms(
    params: ModelParams,
    cache: ForwardCache,
    loss_grads: np.ndarray,
    microbatch_size: int = 1,
) -> GradNorms:
    """Per-unit squared gradient norms (pass 1)."""
    arch = params.arch
    batch = cache.batch_size
    if loss_grads.shape != (batch,):
        raise ContractError("loss_grads must hold one value per example")
    sizes = unit_partition(batch, microbatch_size)
    sq = np.zeros(len(sizes))
    g = np.ascontiguousarray(loss_grads, dtype=np.float64).reshape(-1, 1)
    for layer in range(arch.num_layers - 1, -1, -1):
        kernels.dense_sq_norms(cache.layer_inputs[layer], g, microbatch_size, sq)
        back = g @ params.weights[layer].T
        g = back * cache.relu_masks[layer - 1] if layer > 0 else back
    col = 0
    for f, dim in enumerate(arch.embed_dims):
        kernels.embedding_sq_norms(g[:, col : col + dim], cache.cats[:, f], microbatch_size, sq)
        col += dim
    return GradNorms(sq_norms=sq, microbatch_size=microbatch_size, unit_sizes=sizes)


def backward_weighted(
    params: ModelParams,
    cache: ForwardCache,
    loss_grads: np.ndarray,
    unit_weights: np.ndarray,
    microbatch_size: int = 1,
) -> np.ndarray:
    """Weighted sum of unit-mean gradients as a flat vector (pass 2).

    Returns sum_u w_u * mean_{i in u} grad_i, i.e. the gradient of
    sum_i (w_{u(i)} / |u(i)|) * loss_i.
    """
    arch = params.arch
    batch = cache.batch_size
    sizes = unit_partition(batch, microbatch_size)
    unit_weights = np.asarray(unit_weights, dtype=np.float64)
    if unit_weights.shape != (len(sizes),):
        raise ContractError(
            f"expected {len(sizes)} unit weights, got shape {unit_weights.shape}"
        )
    grad_flat = np.zeros(arch.param_count)
    grad = ModelParams(arch, grad_flat)  # same layout, viewed over the gradient
    if batch == 0:
        return grad_flat
    scale = np.repeat(unit_weights / sizes, sizes)
    g = (np.asarray(loss_grads, dtype=np.float64) * scale).reshape(-1, 1)
    for layer in range(arch.num_layers - 1, -1, -1):
        act = cache.layer_inputs[layer]
        grad.weights[layer] += act.T @ g
        grad.biases[layer] += g.sum(axis=0)
        back = g @ params.weights[layer].T
        g = back * cache.relu_masks[layer - 1] if layer > 0 else back
    col = 0
    for f, dim in enumerate(arch.embed_dims):
        kernels.scatter_add_rows(grad.embeds[f], cache.cats[:, f], g[:, col : col + dim])
        col += dim
    return grad_flat


def plain_mean_gradient(
    params: ModelParams, cache: ForwardCache, loss_grads: np.ndarray
) -> np.ndarray:
    """Ordinary batch-mean gradient (the whole batch as a single unit)."""
    return backward_weighted(
        params, cache, loss_grads, np.ones(1), microbatch_size=max(cache.batch_size, 1)
    )
