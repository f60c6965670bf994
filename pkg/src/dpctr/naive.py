"""Reference backward that materializes per-unit gradient vectors.

Deliberately direct and memory-hungry: it allocates the full
(units x parameters) gradient matrix. It serves as the correctness oracle
for the two-pass backward and as the "naive" arm of the throughput
benchmark. It runs its own forward pass so the oracle shares no code with
the path it checks.
"""

import numpy as np

from .ghost import unit_partition
from .model import ModelParams, loss_fns


def per_unit_gradients(
    params: ModelParams,
    dense: np.ndarray,
    cats: np.ndarray,
    labels: np.ndarray,
    task: str,
    microbatch_size: int = 1,
) -> np.ndarray:
    """(n_units, param_count) matrix of unit-mean gradients."""
    arch = params.arch
    batch = dense.shape[0]
    acts = np.empty((batch, arch.input_dim))
    col = 0
    for f, dim in enumerate(arch.embed_dims):
        acts[:, col : col + dim] = params.embeds[f][cats[:, f]]
        col += dim
    acts[:, col:] = dense
    layer_inputs = [acts]
    hidden = acts
    for layer in range(arch.num_layers - 1):
        hidden = np.maximum(hidden @ params.weights[layer] + params.biases[layer], 0.0)
        layer_inputs.append(hidden)
    logits = (hidden @ params.weights[-1] + params.biases[-1])[:, 0]
    head_grads = loss_fns(task)[1](logits, labels)

    per_example = np.zeros((batch, arch.param_count))
    g = head_grads.reshape(-1, 1)
    for layer in range(arch.num_layers - 1, -1, -1):
        act = layer_inputs[layer]
        w_off = params.weight_offsets[layer]
        w_size = params.weights[layer].size
        per_example[:, w_off : w_off + w_size] = np.einsum("bi,bo->bio", act, g).reshape(
            batch, -1
        )
        b_off = params.bias_offsets[layer]
        per_example[:, b_off : b_off + params.biases[layer].size] = g
        back = g @ params.weights[layer].T
        g = back * (layer_inputs[layer] > 0.0) if layer > 0 else back
    col = 0
    for f, dim in enumerate(arch.embed_dims):
        positions = params.embed_offsets[f] + cats[:, f, None] * dim + np.arange(dim)[None, :]
        np.put_along_axis(per_example, positions, g[:, col : col + dim], axis=1)
        col += dim

    sizes = unit_partition(batch, microbatch_size)
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.intp)
    unit_means = np.add.reduceat(per_example, starts, axis=0) / sizes[:, None]
    return unit_means


def unit_sq_norms(unit_grads: np.ndarray) -> np.ndarray:
    return np.einsum("up,up->u", unit_grads, unit_grads)


def clipped_sum(unit_grads: np.ndarray, clip_norm: float) -> np.ndarray:
    """Explicit clip-then-sum over unit gradients; zero-norm units keep weight 1."""
    norms = np.sqrt(unit_sq_norms(unit_grads))
    weights = np.ones_like(norms)
    over = norms > clip_norm
    weights[over] = clip_norm / norms[over]
    return (unit_grads * weights[:, None]).sum(axis=0)
