"""Embedding + ReLU-MLP network with a scalar logit head.

Parameters live in one flat float64 vector; embedding tables and layer
weights are reshaped views into it, so optimizers and noise addition operate
on the flat array while forward/backward use the structured views. The
forward pass caches every layer input so both backward passes (norms and
weighted sum) run without re-executing it.
"""

import dataclasses
import json

import numpy as np

from .data import NUM_DENSE, TASK_BINARY, TASK_COUNT, Dataset, embedding_dim
from .errors import ContractError, NumericOverflowError
from .rng import STREAM_INIT, GaussianSampler, philox_generator

DEFAULT_HIDDEN = (598, 598, 598, 598)


@dataclasses.dataclass(frozen=True)
class ModelArch:
    """Shape hyperparameters; embedding widths follow int(2 * V**0.25).

    The categorical feature count follows len(bucket_counts): 26 for the ad
    datasets, smaller for toy models in tests.
    """

    bucket_counts: tuple[int, ...]
    hidden: tuple[int, ...] = DEFAULT_HIDDEN

    def __post_init__(self):
        if len(self.bucket_counts) < 1:
            raise ValueError("bucket_counts must be non-empty")
        if any(v < 1 for v in self.bucket_counts):
            raise ValueError("bucket counts must be >= 1")
        if len(self.hidden) < 1 or any(w < 1 for w in self.hidden):
            raise ValueError("hidden widths must be positive")

    @classmethod
    def for_dataset(cls, dataset: Dataset, hidden=DEFAULT_HIDDEN) -> "ModelArch":
        return cls(bucket_counts=tuple(dataset.bucket_counts), hidden=tuple(hidden))

    @property
    def embed_dims(self) -> tuple[int, ...]:
        return tuple(embedding_dim(v) for v in self.bucket_counts)

    @property
    def input_dim(self) -> int:
        return sum(self.embed_dims) + NUM_DENSE

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden, 1)

    @property
    def num_layers(self) -> int:
        return len(self.hidden) + 1

    @property
    def param_count(self) -> int:
        dims = self.layer_dims
        dense = sum(dims[i] * dims[i + 1] + dims[i + 1] for i in range(len(dims) - 1))
        embed = sum(v * d for v, d in zip(self.bucket_counts, self.embed_dims))
        return dense + embed

    def to_dict(self) -> dict:
        return {"bucket_counts": list(self.bucket_counts), "hidden": list(self.hidden)}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelArch":
        return cls(bucket_counts=tuple(d["bucket_counts"]), hidden=tuple(d["hidden"]))


class ModelParams:
    """Flat parameter vector plus structured views.

    Layout: embedding tables in feature order, then per dense layer the
    weight matrix followed by its bias vector. Views alias `flat`, so any
    in-place update to one is visible through the other.
    """

    def __init__(self, arch: ModelArch, flat: np.ndarray | None = None):
        self.arch = arch
        size = arch.param_count
        if flat is None:
            flat = np.zeros(size)
        if flat.shape != (size,) or flat.dtype != np.float64:
            raise ContractError(f"flat params must be float64 of shape ({size},)")
        self.flat = flat
        self.embeds: list[np.ndarray] = []
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        self.embed_offsets: list[int] = []
        self.weight_offsets: list[int] = []
        self.bias_offsets: list[int] = []
        offset = 0
        for vocab, dim in zip(arch.bucket_counts, arch.embed_dims):
            self.embed_offsets.append(offset)
            self.embeds.append(flat[offset : offset + vocab * dim].reshape(vocab, dim))
            offset += vocab * dim
        dims = arch.layer_dims
        for i in range(len(dims) - 1):
            fan_in, fan_out = dims[i], dims[i + 1]
            self.weight_offsets.append(offset)
            self.weights.append(flat[offset : offset + fan_in * fan_out].reshape(fan_in, fan_out))
            offset += fan_in * fan_out
            self.bias_offsets.append(offset)
            self.biases.append(flat[offset : offset + fan_out])
            offset += fan_out
        assert offset == size

    def copy(self) -> "ModelParams":
        return ModelParams(self.arch, self.flat.copy())

    def save(self, prefix: str) -> None:
        """Write `<prefix>.bin` (flat little-endian float64) and `<prefix>.json`."""
        with open(prefix + ".bin", "wb") as fh:
            fh.write(self.flat.astype("<f8").tobytes())
        with open(prefix + ".json", "w", encoding="utf-8") as fh:
            json.dump(
                {"arch": self.arch.to_dict(), "param_count": self.arch.param_count},
                fh,
                indent=2,
                sort_keys=True,
            )
            fh.write("\n")

    @classmethod
    def load(cls, prefix: str) -> "ModelParams":
        with open(prefix + ".json", "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
        arch = ModelArch.from_dict(manifest["arch"])
        flat = np.fromfile(prefix + ".bin", dtype="<f8").astype(np.float64)
        return cls(arch, flat)


def init_params(arch: ModelArch, seed: int) -> ModelParams:
    """Glorot-uniform dense weights, zero biases, Gaussian embeddings.

    Embedding rows draw from N(0, (1/sqrt(d))^2); dense weights are uniform
    on +-sqrt(6/(fan_in+fan_out)). Deterministic in `seed`.
    """
    params = ModelParams(arch)
    uniform = philox_generator(seed, stream=STREAM_INIT)
    normals = GaussianSampler(seed, stream=STREAM_INIT + 1000)
    for table, dim in zip(params.embeds, arch.embed_dims):
        table[...] = normals.standard_normal(table.size).reshape(table.shape) / np.sqrt(dim)
    for weight in params.weights:
        fan_in, fan_out = weight.shape
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weight[...] = uniform.uniform(-bound, bound, size=weight.shape)
    return params


@dataclasses.dataclass
class ForwardCache:
    """Everything both backward passes need: layer inputs, ReLU masks, ids."""

    layer_inputs: list[np.ndarray]  # input to dense layer l, l = 0..L-1
    relu_masks: list[np.ndarray]  # z > 0 per hidden layer
    cats: np.ndarray
    logits: np.ndarray

    @property
    def batch_size(self) -> int:
        return self.logits.shape[0]


def forward(params: ModelParams, dense: np.ndarray, cats: np.ndarray):
    """Compute logits and the activation cache for a batch."""
    arch = params.arch
    n = dense.shape[0]
    act = np.empty((n, arch.input_dim))
    col = 0
    for f, (table, dim) in enumerate(zip(params.embeds, arch.embed_dims)):
        act[:, col : col + dim] = table[cats[:, f]]
        col += dim
    act[:, col:] = dense
    layer_inputs = [act]
    relu_masks = []
    hidden = act
    last = arch.num_layers - 1
    for layer in range(last):
        z = hidden @ params.weights[layer] + params.biases[layer]
        if not np.isfinite(z).all():
            raise NumericOverflowError(f"non-finite activation in layer {layer}", layer=layer)
        mask = z > 0.0
        hidden = np.where(mask, z, 0.0)
        relu_masks.append(mask)
        layer_inputs.append(hidden)
    logits = (hidden @ params.weights[last] + params.biases[last])[:, 0]
    if not np.isfinite(logits).all():
        raise NumericOverflowError(f"non-finite logit in layer {last}", layer=last)
    return logits, ForwardCache(layer_inputs, relu_masks, cats, logits)


def bce_loss(logits, labels) -> np.ndarray:
    """Binary cross entropy from logits, stable branch max(f,0) - y*f + log1p(e^-|f|)."""
    f = np.asarray(logits, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    return np.maximum(f, 0.0) - y * f + np.log1p(np.exp(-np.abs(f)))


def bce_grad(logits, labels) -> np.ndarray:
    f = np.asarray(logits, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    # sigmoid(f) - y without overflow on either tail
    pos = f >= 0
    sig = np.empty_like(f)
    sig[pos] = 1.0 / (1.0 + np.exp(-f[pos]))
    ef = np.exp(f[~pos])
    sig[~pos] = ef / (1.0 + ef)
    return sig - y


def pll_loss(logits, labels) -> np.ndarray:
    """Unnormalized Poisson log loss exp(f) - y*f."""
    f = np.asarray(logits, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if f.size and f.max() > 700.0:
        raise NumericOverflowError(f"logit {f.max():.3g} overflows exp()")
    return np.exp(f) - y * f


def pll_grad(logits, labels) -> np.ndarray:
    f = np.asarray(logits, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if f.size and f.max() > 700.0:
        raise NumericOverflowError(f"logit {f.max():.3g} overflows exp()")
    return np.exp(f) - y


def loss_fns(task: str):
    """(per-example loss, per-example d/d logit) pair for a task kind."""
    if task == TASK_BINARY:
        return bce_loss, bce_grad
    if task == TASK_COUNT:
        return pll_loss, pll_grad
    raise ValueError(f"unknown task {task!r}")
