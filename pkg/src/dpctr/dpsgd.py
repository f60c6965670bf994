"""DP-SGD training step and loop: clip, sum, noise, normalize, update.

The step runs the two-pass backward (per-unit norms, then the weighted sum
of unit-mean gradients), adds Gaussian noise sigma*C per coordinate to the
clipped sum, and normalizes by the expected unit count B/B_mu rather than
the realized Poisson batch size, so the noise calibration is independent of
the batch realization. The same loop trains the non-private baseline with
shuffled fixed-size batches and the plain mean gradient.
"""

import dataclasses
import json
import math
import time

import numpy as np

from . import metrics
from .accountant import EpsilonTracker
from .data import Dataset, PoissonSampler, ShuffleSampler, TASK_BINARY, split_chronological
from .errors import ConfigError, ContractError, DivergedError
from .ghost import GradNorms, backward_norms, backward_weighted, plain_mean_gradient
from .model import ModelArch, ModelParams, forward, init_params, loss_fns
from .rng import GaussianSampler


@dataclasses.dataclass(frozen=True)
class DPConfig:
    """Private-training knobs; exactly one of epochs/steps must be given."""

    clip_norm: float
    noise_multiplier: float
    expected_batch_size: int
    microbatch_size: int = 1
    sampling_prob: float | None = None  # defaults to B / N at resolve time
    epochs: float | None = None
    steps: int | None = None
    delta: float | None = None  # defaults to 1 / N at resolve time
    accountant: str = "pld"

    def __post_init__(self):
        if self.clip_norm <= 0.0:
            raise ConfigError("clip_norm must be > 0")
        if self.noise_multiplier < 0.0:
            raise ConfigError("noise_multiplier must be >= 0")
        if self.microbatch_size < 1:
            raise ConfigError("microbatch_size must be >= 1")
        if self.microbatch_size > self.expected_batch_size:
            raise ConfigError("microbatch_size cannot exceed expected_batch_size")
        if (self.epochs is None) == (self.steps is None):
            raise ConfigError("exactly one of epochs/steps must be set")
        if self.sampling_prob is not None and not 0.0 < self.sampling_prob <= 1.0:
            raise ConfigError("sampling_prob must be in (0, 1]")
        if self.accountant not in ("pld", "rdp"):
            raise ConfigError("accountant must be 'pld' or 'rdp'")

    def resolve(self, n_train: int) -> "DPConfig":
        """Fill sampling_prob, steps, and delta from the training-set size."""
        q = self.sampling_prob
        if q is None:
            q = self.expected_batch_size / n_train
        if not 0.0 < q <= 1.0:
            raise ConfigError(f"sampling probability {q:.4g} outside (0, 1]")
        steps = self.steps
        epochs = self.epochs
        if steps is None:
            steps = max(1, math.ceil(self.epochs * n_train / self.expected_batch_size))
            epochs = None
        delta = self.delta if self.delta is not None else 1.0 / n_train
        return dataclasses.replace(
            self, sampling_prob=q, steps=steps, epochs=epochs, delta=delta
        )

    @property
    def expected_units(self) -> float:
        return self.expected_batch_size / self.microbatch_size


@dataclasses.dataclass(frozen=True)
class NonPrivateConfig:
    batch_size: int
    epochs: float | None = None
    steps: int | None = None

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if (self.epochs is None) == (self.steps is None):
            raise ConfigError("exactly one of epochs/steps must be set")

    def resolve(self, n_train: int) -> "NonPrivateConfig":
        steps = self.steps
        if steps is None:
            steps = max(1, math.ceil(self.epochs * n_train / self.batch_size))
        return dataclasses.replace(self, steps=steps, epochs=None)


@dataclasses.dataclass(frozen=True)
class OptimizerSpec:
    kind: str = "sgd"
    lr: float = 0.01
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01  # AdamW only

    def __post_init__(self):
        if self.kind not in OPTIMIZER_KINDS:
            raise ConfigError(f"unknown optimizer {self.kind!r}; have {sorted(OPTIMIZER_KINDS)}")


OPTIMIZER_KINDS = ("sgd", "adam", "adamw", "adagrad", "yogi")


class Optimizer:
    """First-order update rules over the flat parameter vector (in place)."""

    def __init__(self, spec: OptimizerSpec, param_count: int):
        self.spec = spec
        self.t = 0
        kind = spec.kind
        if kind == "sgd":
            self.velocity = np.zeros(param_count)
        elif kind == "adagrad":
            self.accum = np.zeros(param_count)
        else:  # adam, adamw, yogi
            self.moment1 = np.zeros(param_count)
            self.moment2 = np.zeros(param_count)

    def update(self, flat_params: np.ndarray, grad: np.ndarray, lr: float) -> None:
        if grad.shape != flat_params.shape:
            raise ContractError("gradient/parameter shape mismatch")
        spec = self.spec
        self.t += 1
        kind = spec.kind
        if kind == "sgd":
            self.velocity *= spec.momentum
            self.velocity += grad
            flat_params -= lr * self.velocity
            return
        if kind == "adagrad":
            self.accum += grad * grad
            flat_params -= lr * grad / (np.sqrt(self.accum) + spec.eps)
            return
        self.moment1 *= spec.beta1
        self.moment1 += (1.0 - spec.beta1) * grad
        if kind == "yogi":
            sq = grad * grad
            self.moment2 -= (1.0 - spec.beta2) * np.sign(self.moment2 - sq) * sq
        else:
            self.moment2 *= spec.beta2
            self.moment2 += (1.0 - spec.beta2) * grad * grad
        m_hat = self.moment1 / (1.0 - spec.beta1**self.t)
        v_hat = self.moment2 / (1.0 - spec.beta2**self.t)
        flat_params -= lr * m_hat / (np.sqrt(v_hat) + spec.eps)
        if kind == "adamw":
            flat_params -= lr * spec.weight_decay * flat_params


def cosine_lr(base: float, step: int, total_steps: int) -> float:
    """Half-cosine decay from base at step 0 to 0 at step == total_steps."""
    if not 0 <= step <= total_steps:
        raise ContractError(f"step {step} outside [0, {total_steps}]")
    return base * 0.5 * (1.0 + math.cos(math.pi * step / total_steps))


@dataclasses.dataclass
class ClipStats:
    norms: np.ndarray
    weights: np.ndarray
    clipped_fraction: float


def clip_weights(norms: GradNorms, clip_norm: float) -> np.ndarray:
    """Per-unit rescale weights min(1, C/||g||); zero-norm units keep weight 1."""
    if clip_norm <= 0.0:
        raise ContractError("clip_norm must be > 0")
    n = norms.norms
    weights = np.ones(len(n))
    over = n > clip_norm
    weights[over] = clip_norm / n[over]
    return weights


def noisy_gradient(
    clipped_sum: np.ndarray,
    noise_multiplier: float,
    clip_norm: float,
    expected_units: float,
    noise: GaussianSampler,
) -> np.ndarray:
    """(clipped_sum + N(0, (sigma*C)^2 I)) / expected_units.

    Per-coordinate noise std on the result is sigma*C/expected_units, i.e.
    sigma*C*B_mu/B: microbatching scales the effective noise by B_mu.
    """
    if expected_units <= 0.0:
        raise ContractError("expected_units must be positive")
    if noise_multiplier == 0.0:
        return clipped_sum / expected_units
    z = noise.standard_normal(clipped_sum.size) * (noise_multiplier * clip_norm)
    return (clipped_sum + z) / expected_units


def dp_step(
    params: ModelParams,
    dense: np.ndarray,
    cats: np.ndarray,
    labels: np.ndarray,
    task: str,
    config: DPConfig,
    optimizer: Optimizer,
    lr: float,
    noise: GaussianSampler,
):
    """One private update; returns (ClipStats, mean batch loss or None).

    An empty Poisson batch still performs the noise-only update, keeping the
    step count (and hence the privacy accounting) independent of batch
    realizations.
    """
    loss_fn, grad_fn = loss_fns(task)
    batch = labels.shape[0]
    if batch > 0:
        logits, cache = forward(params, dense, cats)
        head_grads = grad_fn(logits, labels)
        norms = backward_norms(params, cache, head_grads, config.microbatch_size)
        weights = clip_weights(norms, config.clip_norm)
        clipped = backward_weighted(
            params, cache, head_grads, weights, config.microbatch_size
        )
        stats = ClipStats(
            norms=norms.norms,
            weights=weights,
            clipped_fraction=float(np.mean(weights < 1.0)),
        )
        mean_loss = float(np.mean(loss_fn(logits, labels)))
    else:
        clipped = np.zeros(params.arch.param_count)
        stats = ClipStats(norms=np.zeros(0), weights=np.zeros(0), clipped_fraction=0.0)
        mean_loss = None
    grad = noisy_gradient(
        clipped, config.noise_multiplier, config.clip_norm, config.expected_units, noise
    )
    optimizer.update(params.flat, grad, lr)
    return stats, mean_loss


def evaluate(params: ModelParams, dataset: Dataset, chunk_size: int = 8192) -> dict:
    """Full-split metrics: mean loss plus AUC (binary) or PLL (count)."""
    loss_fn, _ = loss_fns(dataset.task)
    logits = np.empty(dataset.n)
    for start in range(0, dataset.n, chunk_size):
        stop = min(start + chunk_size, dataset.n)
        logits[start:stop] = forward(
            params, dataset.dense[start:stop], dataset.cats[start:stop]
        )[0]
    loss = float(np.mean(loss_fn(logits, dataset.labels)))
    if dataset.task == TASK_BINARY:
        return {"loss": loss, "auc": metrics.auc(logits, dataset.labels)}
    return {"loss": loss, "pll": loss}


@dataclasses.dataclass
class TrainReport:
    """Per-evaluation records plus final test metrics and trained params."""

    records: list
    final_test: dict
    task: str
    params: ModelParams

    def write_jsonl(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for record in self.records:
                fh.write(json.dumps(record, sort_keys=True) + "\n")

    @property
    def test_metric(self) -> float:
        key = "auc_loss" if self.task == TASK_BINARY else "pll"
        return self.final_test[key]


def train(
    dataset: Dataset,
    arch: ModelArch,
    run: DPConfig | NonPrivateConfig,
    optimizer_spec: OptimizerSpec,
    eval_every: int | None = None,
    seed: int = 0,
    label_privacy=None,
) -> TrainReport:
    """Split chronologically, train for the configured steps, evaluate.

    Evaluation records carry the validation loss, AUC or PLL, the privacy
    budget consumed so far, the last step's clipped fraction, and wall time.
    The final record evaluates the test split. When `label_privacy` (an
    RRConfig) is given, the training labels are randomized once up front;
    validation and test labels stay clean so metrics measure true utility.
    """
    train_ds, valid_ds, test_ds = split_chronological(dataset)
    if label_privacy is not None:
        from .labeldp import randomize_labels

        train_ds = randomize_labels(train_ds, label_privacy)
    private = isinstance(run, DPConfig)
    cfg = run.resolve(train_ds.n)
    total_steps = cfg.steps
    if eval_every is None:
        eval_every = max(1, total_steps // 10)
    params = init_params(arch, seed)
    optimizer = Optimizer(optimizer_spec, arch.param_count)
    loss_fn, grad_fn = loss_fns(dataset.task)
    records = []
    started = time.perf_counter()
    if private:
        if cfg.expected_batch_size > train_ds.n:
            raise ConfigError("expected_batch_size exceeds training-set size")
        sampler = PoissonSampler(train_ds.n, cfg.sampling_prob, seed)
        noise = GaussianSampler(seed)
        tracker = EpsilonTracker(
            q=cfg.sampling_prob,
            sigma=cfg.noise_multiplier,
            delta=cfg.delta,
            total_steps=total_steps,
            method=cfg.accountant,
        )
    else:
        sampler = ShuffleSampler(train_ds.n, cfg.batch_size, seed)
    clip_fraction = None
    for step in range(total_steps):
        lr = cosine_lr(optimizer_spec.lr, step, total_steps)
        index = sampler()
        dense = train_ds.dense[index]
        cats = train_ds.cats[index]
        labels = train_ds.labels[index]
        if private:
            stats, mean_loss = dp_step(
                params, dense, cats, labels, dataset.task, cfg, optimizer, lr, noise
            )
            clip_fraction = stats.clipped_fraction
        else:
            logits, cache = forward(params, dense, cats)
            mean_loss = float(np.mean(loss_fn(logits, labels)))
            grad = plain_mean_gradient(params, cache, grad_fn(logits, labels))
            optimizer.update(params.flat, grad, lr)
        if mean_loss is not None and not math.isfinite(mean_loss):
            raise DivergedError(step)
        if (step + 1) % eval_every == 0 or step + 1 == total_steps:
            record = {"step": step + 1, "split": "valid"}
            record.update(evaluate(params, valid_ds))
            record["epsilon"] = tracker.epsilon(step + 1) if private else None
            record["clipped_fraction"] = clip_fraction
            record["wall_time_s"] = time.perf_counter() - started
            records.append(record)
    final = {"step": total_steps, "split": "test"}
    final.update(evaluate(params, test_ds))
    if dataset.task == TASK_BINARY:
        final["auc_loss"] = 1.0 - final["auc"]
    final["epsilon"] = tracker.epsilon(total_steps) if private else None
    final["clipped_fraction"] = clip_fraction
    final["wall_time_s"] = time.perf_counter() - started
    records.append(final)
    return TrainReport(records=records, final_test=final, task=dataset.task, params=params)
