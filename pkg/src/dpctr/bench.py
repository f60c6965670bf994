"""Throughput and memory benchmarking of training implementations.

Three arms share one synthetic workload: `baseline` is the non-private
step, `ghost` the two-pass norm-bounded step, and `naive` the reference
step that materializes per-unit gradient vectors. Memory is policed by a
fixed cap: a cell whose predicted dominant allocation exceeds the cap is
flagged out-of-memory without running, and runnable cells are additionally
probed with a tracemalloc high-water-mark step (numpy allocations are
traced). Timing excludes the probe and warmup, and reports mean +- std of
steps/sec over independent windows. The kernel backend (compiled vs python)
can be pinned per run to compare the two.
"""

import dataclasses
import math
import time
import tracemalloc

import numpy as np

from . import kernels, naive
from .data import TASK_BINARY
from .dpsgd import DPConfig, Optimizer, OptimizerSpec, dp_step, noisy_gradient
from .ghost import plain_mean_gradient, unit_partition
from .model import ModelArch, forward, init_params, loss_fns
from .rng import GaussianSampler, philox_generator

IMPLEMENTATIONS = ("baseline", "naive", "ghost")


@dataclasses.dataclass
class BenchResult:
    implementation: str
    backend: str
    batch_size: int
    steps_per_sec_mean: float
    steps_per_sec_std: float
    peak_mem_bytes: int
    oom: bool

    def as_row(self) -> dict:
        return dataclasses.asdict(self)


def bench_arch(vocab: int = 2000, hidden=(256, 256)) -> ModelArch:
    return ModelArch(bucket_counts=(vocab,) * 26, hidden=tuple(hidden))


def estimate_step_bytes(
    arch: ModelArch, implementation: str, batch: int, microbatch_size: int = 1
) -> int:
    """Dominant per-step allocation, in bytes.

    All arms cache layer inputs (float64) and ReLU masks (bool) plus two
    transient backprop buffers; `naive` additionally materializes the
    per-example gradient matrix, its unit means, and one per-layer outer
    product buffer, which is what caps its batch size first.
    """
    dims = arch.layer_dims
    cache = batch * (sum(dims[:-1]) + 1) * 8
    masks = batch * sum(arch.hidden)
    transient = 2 * batch * max(dims) * 8
    data = batch * (13 * 8 + 26 * 8)
    total = cache + masks + transient + data + 3 * arch.param_count * 8
    if implementation == "naive":
        units = math.ceil(batch / microbatch_size)
        largest_weight = max(dims[i] * dims[i + 1] for i in range(len(dims) - 1))
        total += (batch + units) * arch.param_count * 8 + batch * largest_weight * 8
    elif implementation == "ghost":
        units = math.ceil(batch / microbatch_size)
        total += units * 8 * 4 + batch * microbatch_size * 16
    return total


def _make_batch(arch: ModelArch, batch: int, seed: int):
    rng = philox_generator(seed, stream=97)
    dense = rng.normal(0.0, 1.0, size=(batch, 13))
    caps = np.asarray(arch.bucket_counts, dtype=np.int64)
    cats = (rng.random((batch, 26)) * caps[None, :]).astype(np.int64)
    labels = (rng.random(batch) < 0.5).astype(np.int64)
    return dense, cats, labels


def naive_dp_step(params, dense, cats, labels, task, config, optimizer, lr, noise):
    """DP-SGD step through the materializing reference backward."""
    units = naive.per_unit_gradients(
        params, dense, cats, labels, task, config.microbatch_size
    )
    clipped = naive.clipped_sum(units, config.clip_norm)
    grad = noisy_gradient(
        clipped, config.noise_multiplier, config.clip_norm, config.expected_units, noise
    )
    optimizer.update(params.flat, grad, lr)


def _build_step(implementation, arch, batch_data, config, task, seed):
    dense, cats, labels = batch_data
    params = init_params(arch, seed)
    optimizer = Optimizer(OptimizerSpec(kind="sgd", lr=0.01), arch.param_count)
    noise = GaussianSampler(seed)
    loss_fn, grad_fn = loss_fns(task)
    if implementation == "baseline":

        def step():
            logits, cache = forward(params, dense, cats)
            grad = plain_mean_gradient(params, cache, grad_fn(logits, labels))
            optimizer.update(params.flat, grad, 0.01)

    elif implementation == "ghost":

        def step():
            dp_step(params, dense, cats, labels, task, config, optimizer, 0.01, noise)

    elif implementation == "naive":

        def step():
            naive_dp_step(params, dense, cats, labels, task, config, optimizer, 0.01, noise)

    else:
        raise ValueError(f"unknown implementation {implementation!r}")
    return step


def run_bench(
    arch: ModelArch,
    batch_sizes,
    implementations=IMPLEMENTATIONS,
    backends=("auto",),
    steps_per_window: int = 2,
    windows: int = 5,
    warmup_steps: int = 1,
    mem_cap_bytes: int = 1 << 30,
    microbatch_size: int = 1,
    seed: int = 0,
) -> list[BenchResult]:
    results = []
    for backend in backends:
        label = kernels.backend_name() if backend == "auto" else backend
        with kernels.forced_backend(label):
            for implementation in implementations:
                for batch in batch_sizes:
                    results.append(
                        _bench_cell(
                            arch,
                            implementation,
                            label,
                            int(batch),
                            steps_per_window,
                            windows,
                            warmup_steps,
                            mem_cap_bytes,
                            microbatch_size,
                            seed,
                        )
                    )
    return results


def _bench_cell(
    arch,
    implementation,
    backend_label,
    batch,
    steps_per_window,
    windows,
    warmup_steps,
    mem_cap_bytes,
    microbatch_size,
    seed,
) -> BenchResult:
    estimate = estimate_step_bytes(arch, implementation, batch, microbatch_size)
    oom = BenchResult(
        implementation=implementation,
        backend=backend_label,
        batch_size=batch,
        steps_per_sec_mean=0.0,
        steps_per_sec_std=0.0,
        peak_mem_bytes=estimate,
        oom=True,
    )
    if estimate > mem_cap_bytes:
        return oom
    config = DPConfig(
        clip_norm=1.0,
        noise_multiplier=1.0,
        expected_batch_size=batch,
        microbatch_size=microbatch_size,
        sampling_prob=0.5,
        steps=1,
        delta=1e-6,
    )
    try:
        batch_data = _make_batch(arch, batch, seed)
        step = _build_step(implementation, arch, batch_data, config, TASK_BINARY, seed)
        tracemalloc.start()
        tracemalloc.reset_peak()
        step()
        _, peak = tracemalloc.get_traced_memory()
        tracemalloc.stop()
        if peak > mem_cap_bytes:
            oom.peak_mem_bytes = peak
            return oom
        for _ in range(warmup_steps):
            step()
        rates = []
        for _ in range(windows):
            start = time.perf_counter()
            for _ in range(steps_per_window):
                step()
            rates.append(steps_per_window / (time.perf_counter() - start))
    except MemoryError:
        if tracemalloc.is_tracing():
            tracemalloc.stop()
        return oom
    rates = np.asarray(rates)
    return BenchResult(
        implementation=implementation,
        backend=backend_label,
        batch_size=batch,
        steps_per_sec_mean=float(rates.mean()),
        steps_per_sec_std=float(rates.std(ddof=1)) if len(rates) > 1 else 0.0,
        peak_mem_bytes=int(peak),
        oom=False,
    )
