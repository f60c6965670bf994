"""Dataset ingestion, preprocessing, synthetic generation, and batch sampling.

The on-disk format is the 40-field Criteo TSV (label, 13 integer features,
26 categorical tokens; empty field = missing). Integer features are
log-transformed, categorical tokens are feature-hashed into per-feature
bucket ranges, and records keep their file order so the 80/10/10 split is
chronological.
"""

import dataclasses
import json
import math
import os

import numpy as np
from scipy.special import expit

from .errors import (
    GeneratorCalibrationError,
    MalformedRecordError,
    SplitTooSmallError,
    TaskMismatchError,
)
from .rng import STREAM_SYNTH, philox_generator

NUM_DENSE = 13
NUM_CATEGORICAL = 26
NUM_FIELDS = 1 + NUM_DENSE + NUM_CATEGORICAL

TASK_BINARY = "binary"
TASK_COUNT = "count"

#: Stand-in token for a missing categorical field; hashed like any other.
OOV_TOKEN = "__oov__"

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_U64_MASK = 0xFFFFFFFFFFFFFFFF


@dataclasses.dataclass
class RawExample:
    """One parsed TSV record before preprocessing; None marks a missing field."""

    label: int
    ints: list[int | None]
    tokens: list[str | None]


def parse_criteo_line(line: str, line_number: int = 0) -> RawExample:
    fields = line.rstrip("\n").split("\t")
    if len(fields) != NUM_FIELDS:
        raise MalformedRecordError(
            f"expected {NUM_FIELDS} tab-separated fields, got {len(fields)}", line_number
        )
    try:
        label = int(fields[0])
    except ValueError:
        raise MalformedRecordError(f"non-integer label {fields[0]!r}", line_number) from None
    if label < 0:
        raise MalformedRecordError(f"negative label {label}", line_number)
    ints: list[int | None] = []
    for raw in fields[1 : 1 + NUM_DENSE]:
        if raw == "":
            ints.append(None)
        else:
            try:
                ints.append(int(raw))
            except ValueError:
                raise MalformedRecordError(f"non-integer feature {raw!r}", line_number) from None
    tokens = [tok if tok != "" else None for tok in fields[1 + NUM_DENSE :]]
    return RawExample(label=label, ints=ints, tokens=tokens)


def serialize_raw(example: RawExample) -> str:
    fields = [str(example.label)]
    fields += ["" if v is None else str(v) for v in example.ints]
    fields += ["" if t is None else t for t in example.tokens]
    return "\t".join(fields)


def log_transform(value: int | None) -> float:
    """ln(1+v) for non-negative v; missing or negative values map to 0.0."""
    if value is None or value < 0:
        return 0.0
    return math.log1p(float(value))


def fnv1a_64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & _U64_MASK
    return h


def hash_feature(feature_index: int, token: str, buckets: int) -> int:
    """Stable bucket id for a categorical token: FNV-1a-64 of "f:<i>:<token>"."""
    if buckets < 1:
        raise ValueError("buckets must be >= 1")
    return fnv1a_64(f"f:{feature_index}:{token}".encode()) % buckets


def embedding_dim(vocab_size: int) -> int:
    """Embedding width heuristic int(2 * V**0.25), at least 1."""
    if vocab_size < 1:
        raise ValueError("vocab_size must be >= 1")
    return max(1, int(2.0 * vocab_size**0.25))


@dataclasses.dataclass(frozen=True)
class Dataset:
    """Immutable preprocessed example collection in original file order.

    dense: (n, 13) float64 log-transformed integer features.
    cats: (n, 26) int64 bucket ids, cats[:, f] < bucket_counts[f].
    labels: (n,) int64; {0,1} for binary tasks, >= 0 counts otherwise.
    """

    dense: np.ndarray
    cats: np.ndarray
    labels: np.ndarray
    task: str
    bucket_counts: tuple[int, ...]

    def __post_init__(self):
        if self.task not in (TASK_BINARY, TASK_COUNT):
            raise ValueError(f"unknown task {self.task!r}")
        if self.dense.ndim != 2 or self.dense.shape[1] != NUM_DENSE:
            raise ValueError("dense must be (n, 13)")
        if self.cats.ndim != 2 or self.cats.shape[1] != NUM_CATEGORICAL:
            raise ValueError("cats must be (n, 26)")
        if len(self.bucket_counts) != NUM_CATEGORICAL:
            raise ValueError("bucket_counts must list 26 entries")
        n = self.dense.shape[0]
        if n == 0:
            raise ValueError("dataset must be non-empty")
        if self.cats.shape[0] != n or self.labels.shape[0] != n:
            raise ValueError("dense/cats/labels row counts differ")
        if self.labels.min() < 0:
            raise ValueError("labels must be non-negative")
        if self.task == TASK_BINARY and self.labels.max() > 1:
            raise TaskMismatchError("binary task with labels outside {0,1}")
        caps = np.asarray(self.bucket_counts, dtype=np.int64)
        if (self.cats < 0).any() or (self.cats >= caps[None, :]).any():
            raise ValueError("categorical id outside its bucket range")

    @property
    def n(self) -> int:
        return self.dense.shape[0]

    def subset(self, index) -> "Dataset":
        return Dataset(
            dense=self.dense[index],
            cats=self.cats[index],
            labels=self.labels[index],
            task=self.task,
            bucket_counts=self.bucket_counts,
        )

    def replace_labels(self, labels: np.ndarray) -> "Dataset":
        return dataclasses.replace(self, labels=np.asarray(labels, dtype=np.int64))


def load_criteo_tsv(
    path: str,
    bucket_counts: int | list[int] | tuple[int, ...] = 10_000,
    task: str = TASK_BINARY,
    limit: int | None = None,
) -> Dataset:
    """Parse a Criteo-format TSV into a preprocessed Dataset.

    bucket_counts may be a single bucket count applied to every categorical
    feature or a 26-entry list. Tokens are memoized per feature, so hashing
    cost scales with vocabulary size rather than row count.
    """
    buckets = _normalize_buckets(bucket_counts)
    dense_rows: list[list[float]] = []
    cat_rows: list[list[int]] = []
    labels: list[int] = []
    caches: list[dict[str, int]] = [{} for _ in range(NUM_CATEGORICAL)]
    with open(path, "r", encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, start=1):
            if limit is not None and len(labels) >= limit:
                break
            if line.strip("\n") == "":
                continue
            raw = parse_criteo_line(line, line_number)
            labels.append(raw.label)
            dense_rows.append([log_transform(v) for v in raw.ints])
            row = []
            for f, token in enumerate(raw.tokens):
                token = OOV_TOKEN if token is None else token
                cache = caches[f]
                bucket = cache.get(token)
                if bucket is None:
                    bucket = hash_feature(f, token, buckets[f])
                    cache[token] = bucket
                row.append(bucket)
            cat_rows.append(row)
    if not labels:
        raise MalformedRecordError("empty dataset file", 0)
    return Dataset(
        dense=np.asarray(dense_rows, dtype=np.float64),
        cats=np.asarray(cat_rows, dtype=np.int64),
        labels=np.asarray(labels, dtype=np.int64),
        task=task,
        bucket_counts=buckets,
    )


def write_tsv(dataset: Dataset, path: str) -> None:
    """Serialize in the 40-field TSV shape (dense left empty, ids as tokens).

    Dense features are stored post-transform in memory, so they serialize as
    missing; categorical ids become decimal tokens. Reloading goes through
    the standard hashing path and therefore yields a statistically similar,
    not identical, dataset.
    """
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(dataset.n):
            fields = [str(int(dataset.labels[i]))] + [""] * NUM_DENSE
            fields += [str(int(v)) for v in dataset.cats[i]]
            fh.write("\t".join(fields) + "\n")


def write_manifest(dataset: Dataset, tsv_path: str, manifest_path: str) -> None:
    manifest = {
        "path": os.path.basename(tsv_path),
        "task": dataset.task,
        "bucket_counts": list(dataset.bucket_counts),
        "n": dataset.n,
    }
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_from_manifest(manifest_path: str) -> Dataset:
    with open(manifest_path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    tsv_path = os.path.join(os.path.dirname(manifest_path), manifest["path"])
    return load_criteo_tsv(
        tsv_path,
        bucket_counts=manifest["bucket_counts"],
        task=manifest["task"],
        limit=manifest.get("n"),
    )


def split_chronological(dataset: Dataset) -> tuple[Dataset, Dataset, Dataset]:
    """80/10/10 split preserving record order; remainder goes to test."""
    n = dataset.n
    if n < 10:
        raise SplitTooSmallError(f"need at least 10 examples to split, got {n}")
    n_train = (8 * n) // 10
    n_valid = n // 10
    train = dataset.subset(slice(0, n_train))
    valid = dataset.subset(slice(n_train, n_train + n_valid))
    test = dataset.subset(slice(n_train + n_valid, n))
    return train, valid, test


class PoissonSampler:
    """Poisson-subsampled batches: each example enters independently w.p. q."""

    def __init__(self, n: int, q: float, seed: int, stream: int = 0):
        if not 0.0 < q <= 1.0:
            raise ValueError("sampling probability must be in (0, 1]")
        self.n = n
        self.q = q
        self._rng = philox_generator(seed, stream=(stream << 8) | 1)

    def __call__(self) -> np.ndarray:
        return np.nonzero(self._rng.random(self.n) < self.q)[0]


class ShuffleSampler:
    """Epoch-shuffled fixed-size batches for non-private training."""

    def __init__(self, n: int, batch_size: int, seed: int, stream: int = 0):
        if batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        self.n = n
        self.batch_size = min(batch_size, n)
        self._rng = philox_generator(seed, stream=(stream << 8) | 2)
        self._order = np.arange(n)
        self._cursor = n  # force shuffle on first call

    def __call__(self) -> np.ndarray:
        if self._cursor + self.batch_size > self.n:
            self._rng.shuffle(self._order)
            self._cursor = 0
        batch = self._order[self._cursor : self._cursor + self.batch_size]
        self._cursor += self.batch_size
        return batch.copy()


@dataclasses.dataclass(frozen=True)
class SynthConfig:
    """Synthetic stand-in task with a controllable label distribution.

    Labels follow a linear-logit generative model over the one-hot
    categorical features: binary labels are Bernoulli(sigmoid(s(x)+b)) with
    the intercept b calibrated so the mean positive rate hits
    `positive_rate`; count labels are Poisson(exp(s(x)+b)) calibrated to
    `mean_count`.
    """

    n: int
    task: str = TASK_BINARY
    positive_rate: float | None = 0.25
    mean_count: float | None = None
    vocab_sizes: int | tuple[int, ...] = 100
    seed: int = 0
    signal_std: float = 2.0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.task == TASK_BINARY:
            if self.positive_rate is None or not 0.0 < self.positive_rate < 1.0:
                raise ValueError("positive_rate must lie strictly inside (0, 1)")
        elif self.task == TASK_COUNT:
            if self.mean_count is None or self.mean_count <= 0.0:
                raise ValueError("mean_count must be > 0")
        else:
            raise ValueError(f"unknown task {self.task!r}")

    @property
    def bucket_counts(self) -> tuple[int, ...]:
        return _normalize_buckets(self.vocab_sizes)


def synth_generate(config: SynthConfig) -> Dataset:
    """Draw a synthetic dataset; identical config (incl. seed) => identical bytes."""
    rng = philox_generator(config.seed, stream=STREAM_SYNTH)
    buckets = config.bucket_counts
    caps = np.asarray(buckets, dtype=np.int64)
    cats = (rng.random((config.n, NUM_CATEGORICAL)) * caps[None, :]).astype(np.int64)
    # Fixed random per-(feature, id) weights define the linear score.
    per_feature = config.signal_std / math.sqrt(NUM_CATEGORICAL)
    scores = np.zeros(config.n)
    for f in range(NUM_CATEGORICAL):
        weights = rng.normal(0.0, per_feature, size=buckets[f])
        scores += weights[cats[:, f]]
    if config.task == TASK_BINARY:
        target = config.positive_rate
        bias = _bisect_intercept(lambda b: float(np.mean(expit(scores + b))), target)
        labels = (rng.random(config.n) < expit(scores + bias)).astype(np.int64)
    else:
        target = config.mean_count
        bias = _bisect_intercept(lambda b: float(np.mean(np.exp(scores + b))), target)
        labels = rng.poisson(np.exp(scores + bias)).astype(np.int64)
    return Dataset(
        dense=np.zeros((config.n, NUM_DENSE)),
        cats=cats,
        labels=labels,
        task=config.task,
        bucket_counts=buckets,
    )


def _bisect_intercept(mean_of_bias, target: float, lo: float = -40.0, hi: float = 40.0) -> float:
    if not (mean_of_bias(lo) < target < mean_of_bias(hi)):
        raise GeneratorCalibrationError(
            f"target {target} not bracketed by intercepts [{lo}, {hi}]"
        )
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mean_of_bias(mid) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-12:
            break
    return 0.5 * (lo + hi)


def _normalize_buckets(bucket_counts) -> tuple[int, ...]:
    if isinstance(bucket_counts, int):
        counts = (bucket_counts,) * NUM_CATEGORICAL
    else:
        counts = tuple(int(v) for v in bucket_counts)
    if len(counts) != NUM_CATEGORICAL:
        raise ValueError(f"need {NUM_CATEGORICAL} bucket counts, got {len(counts)}")
    if any(v < 1 for v in counts):
        raise ValueError("bucket counts must be >= 1")
    return counts
