import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpctr import data
from dpctr.errors import (
    GeneratorCalibrationError,
    MalformedRecordError,
    SplitTooSmallError,
)


def make_line(label="1", ints=None, tokens=None):
    ints = ints if ints is not None else [""] * 13
    tokens = tokens if tokens is not None else [""] * 26
    return "\t".join([label] + ints + tokens)


# Independent FNV-1a reference for the hashing oracle.
def fnv1a_reference(payload: bytes) -> int:
    value = 0xCBF29CE484222325
    for byte in payload:
        value = ((value ^ byte) * 0x100000001B3) % 2**64
    return value


class TestParseCriteoLine:
    def test_label_and_mixed_missing(self):
        ints = ["3"] + [""] * 12
        tokens = ["68fd1e64"] + [""] * 25
        raw = data.parse_criteo_line(make_line("1", ints, tokens))
        assert raw.label == 1
        assert raw.ints[0] == 3 and raw.ints[1] is None
        assert raw.tokens[0] == "68fd1e64" and raw.tokens[1] is None

    def test_all_missing(self):
        raw = data.parse_criteo_line(make_line("0"))
        assert raw.label == 0
        assert all(v is None for v in raw.ints)
        assert all(t is None for t in raw.tokens)

    def test_wrong_field_count(self):
        line = "\t".join(["1"] + [""] * 38)  # 39 fields
        with pytest.raises(MalformedRecordError) as err:
            data.parse_criteo_line(line, line_number=17)
        assert err.value.line_number == 17

    def test_non_integer_label(self):
        with pytest.raises(MalformedRecordError):
            data.parse_criteo_line(make_line("x"))

    def test_serialize_round_trip(self):
        line = make_line("1", ["7"] + [""] * 12, ["abc"] + [""] * 25)
        raw = data.parse_criteo_line(line)
        assert data.serialize_raw(raw) == line
        assert len(data.serialize_raw(raw).split("\t")) == 40


class TestLogTransform:
    def test_zero(self):
        assert data.log_transform(0) == 0.0

    def test_missing_and_negative(self):
        assert data.log_transform(None) == 0.0
        assert data.log_transform(-4) == 0.0

    def test_one(self):
        assert data.log_transform(1) == pytest.approx(math.log(2.0), abs=1e-12)

    @given(st.integers(min_value=0, max_value=10**12), st.integers(min_value=0, max_value=10**12))
    def test_monotone(self, a, b):
        lo, hi = sorted((a, b))
        assert data.log_transform(lo) <= data.log_transform(hi)


class TestHashFeature:
    def test_fnv_known_vectors(self):
        assert data.fnv1a_64(b"") == 0xCBF29CE484222325
        assert data.fnv1a_64(b"a") == 0xAF63DC4C8601EC8C

    def test_matches_reference(self):
        expected = fnv1a_reference(b"f:0:abc") % 100
        assert data.hash_feature(0, "abc", 100) == expected

    def test_deterministic(self):
        assert data.hash_feature(3, "tok", 977) == data.hash_feature(3, "tok", 977)

    def test_single_bucket(self):
        assert data.hash_feature(5, "anything", 1) == 0

    @given(st.integers(0, 25), st.text(max_size=20), st.integers(1, 10**6))
    @settings(max_examples=50)
    def test_range(self, index, token, buckets):
        assert 0 <= data.hash_feature(index, token, buckets) < buckets


class TestEmbeddingDim:
    @pytest.mark.parametrize("vocab,expected", [(16, 4), (1, 2), (10_000, 20)])
    def test_values(self, vocab, expected):
        assert data.embedding_dim(vocab) == expected

    @given(st.integers(1, 10**7), st.integers(1, 10**7))
    def test_monotone(self, a, b):
        lo, hi = sorted((a, b))
        assert data.embedding_dim(lo) <= data.embedding_dim(hi)


def synth_small(n=200, seed=0, task="binary", **kwargs):
    if task == "binary":
        cfg = data.SynthConfig(n=n, task=task, positive_rate=0.4, vocab_sizes=10, seed=seed, **kwargs)
    else:
        cfg = data.SynthConfig(
            n=n, task=task, positive_rate=None, mean_count=2.0, vocab_sizes=10, seed=seed, **kwargs
        )
    return data.synth_generate(cfg)


class TestSplitChronological:
    @pytest.mark.parametrize("n,sizes", [(10, (8, 1, 1)), (100, (80, 10, 10)), (101, (80, 10, 11))])
    def test_sizes(self, n, sizes):
        ds = synth_small(n=n)
        parts = data.split_chronological(ds)
        assert tuple(p.n for p in parts) == sizes
        assert sum(p.n for p in parts) == n

    def test_order_preserved(self):
        ds = synth_small(n=50, seed=3)
        train, valid, test = data.split_chronological(ds)
        rejoined = np.concatenate([train.labels, valid.labels, test.labels])
        np.testing.assert_array_equal(rejoined, ds.labels)

    def test_too_small(self):
        with pytest.raises(SplitTooSmallError):
            data.split_chronological(synth_small(n=9))


class TestPoissonSampler:
    def test_q_one_returns_everything(self):
        sampler = data.PoissonSampler(n=100, q=1.0, seed=0)
        np.testing.assert_array_equal(sampler(), np.arange(100))

    def test_binomial_concentration(self):
        n, q = 100_000, 0.5
        size = len(data.PoissonSampler(n=n, q=q, seed=1)())
        assert abs(size - n * q) <= 4 * math.sqrt(n * q * (1 - q))

    def test_replay_deterministic(self):
        a = data.PoissonSampler(n=1000, q=0.3, seed=42)
        b = data.PoissonSampler(n=1000, q=0.3, seed=42)
        for _ in range(3):
            np.testing.assert_array_equal(a(), b())

    def test_inclusion_frequency_chi_square(self):
        # per-example inclusion counts over many draws are Binomial(draws, q)
        from scipy.stats import chi2

        n, q, draws = 50, 0.2, 10_000
        sampler = data.PoissonSampler(n=n, q=q, seed=7)
        counts = np.zeros(n)
        for _ in range(draws):
            counts[sampler()] += 1
        stat = float(((counts - draws * q) ** 2 / (draws * q * (1 - q))).sum())
        p_value = chi2.sf(stat, df=n)
        assert p_value > 1e-3

    def test_invalid_q(self):
        with pytest.raises(ValueError):
            data.PoissonSampler(n=10, q=0.0, seed=0)


class TestShuffleSampler:
    def test_fixed_size_and_coverage(self):
        sampler = data.ShuffleSampler(n=100, batch_size=25, seed=0)
        seen = np.concatenate([sampler() for _ in range(4)])
        assert len(seen) == 100
        np.testing.assert_array_equal(np.sort(seen), np.arange(100))


class TestSynthGenerate:
    def test_positive_rate_calibrated(self):
        ds = data.synth_generate(
            data.SynthConfig(n=100_000, positive_rate=0.5, vocab_sizes=50, seed=5)
        )
        assert 0.45 <= ds.labels.mean() <= 0.55

    def test_count_mean_calibrated(self):
        ds = data.synth_generate(
            data.SynthConfig(
                n=100_000, task="count", positive_rate=None, mean_count=2.0, vocab_sizes=50, seed=5
            )
        )
        assert 1.8 <= ds.labels.mean() <= 2.2
        assert ds.labels.min() >= 0

    def test_byte_identical_replay(self):
        cfg = data.SynthConfig(n=500, positive_rate=0.2, vocab_sizes=20, seed=9)
        a = data.synth_generate(cfg)
        b = data.synth_generate(cfg)
        assert a.dense.tobytes() == b.dense.tobytes()
        assert a.cats.tobytes() == b.cats.tobytes()
        assert a.labels.tobytes() == b.labels.tobytes()

    def test_calibration_failure(self):
        cfg = data.SynthConfig(n=100, positive_rate=1e-30, vocab_sizes=10, seed=0)
        with pytest.raises(GeneratorCalibrationError):
            data.synth_generate(cfg)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            data.SynthConfig(n=10, positive_rate=1.0)
        with pytest.raises(ValueError):
            data.SynthConfig(n=10, task="count", positive_rate=None, mean_count=0.0)
        with pytest.raises(ValueError):
            data.SynthConfig(n=0)


class TestTsvAndManifest:
    def test_round_trip_shape(self, tmp_path):
        ds = synth_small(n=60, seed=2)
        tsv = tmp_path / "synth.tsv"
        manifest = tmp_path / "manifest.json"
        data.write_tsv(ds, str(tsv))
        data.write_manifest(ds, str(tsv), str(manifest))
        first = tsv.read_text().splitlines()[0]
        assert len(first.split("\t")) == 40
        loaded = data.load_from_manifest(str(manifest))
        assert loaded.n == ds.n
        assert loaded.task == ds.task
        assert loaded.bucket_counts == ds.bucket_counts

    def test_load_criteo_tsv(self, tmp_path):
        lines = [
            make_line("1", ["2"] + [""] * 12, ["aa"] * 26),
            make_line("0", [""] * 13, ["bb"] * 26),
        ]
        path = tmp_path / "mini.tsv"
        path.write_text("\n".join(lines) + "\n")
        ds = data.load_criteo_tsv(str(path), bucket_counts=7)
        assert ds.n == 2
        assert ds.dense[0, 0] == pytest.approx(math.log(3.0))
        assert ds.dense[1, 0] == 0.0
        assert ds.cats[0, 0] == data.hash_feature(0, "aa", 7)
        assert ds.cats[1, 3] == data.hash_feature(3, "bb", 7)

    def test_limit(self, tmp_path):
        path = tmp_path / "mini.tsv"
        path.write_text("\n".join([make_line("0")] * 5) + "\n")
        assert data.load_criteo_tsv(str(path), limit=3).n == 3
