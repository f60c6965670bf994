import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpctr import metrics
from dpctr.errors import ContractError, UndefinedAucError


def pairwise_auc(scores, labels):
    """O(n^2) enumeration oracle: concordant + half the ties, over all pairs."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    wins = sum((p > n) + 0.5 * (p == n) for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


class TestAuc:
    def test_perfect_ranking(self):
        assert metrics.auc([0.9, 0.1], [1, 0]) == 1.0

    def test_all_ties(self):
        assert metrics.auc([0.3, 0.3, 0.3, 0.3], [1, 0, 1, 0]) == 0.5

    def test_one_concordant_one_discordant(self):
        # pairs: (0.8 vs 0.5) concordant, (0.3 vs 0.5) discordant
        assert metrics.auc([0.8, 0.5, 0.3], [1, 0, 1]) == 0.5

    def test_matches_enumeration_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            n = int(rng.integers(4, 40))
            scores = rng.integers(0, 6, size=n).astype(float)  # force ties
            labels = rng.integers(0, 2, size=n)
            if labels.min() == labels.max():
                labels[0] = 1 - labels[0]
            assert metrics.auc(scores, labels) == pytest.approx(
                pairwise_auc(scores, labels), abs=1e-12
            )

    def test_single_class_error(self):
        with pytest.raises(UndefinedAucError):
            metrics.auc([0.1, 0.2], [1, 1])

    def test_non_binary_error(self):
        with pytest.raises(UndefinedAucError):
            metrics.auc([0.1, 0.2, 0.3], [0, 1, 2])

    @given(
        st.lists(st.floats(-5, 5, allow_nan=False), min_size=4, max_size=30),
        st.data(),
    )
    @settings(max_examples=40, deadline=None)
    def test_antisymmetry(self, scores, datagen):
        labels = datagen.draw(
            st.lists(st.integers(0, 1), min_size=len(scores), max_size=len(scores))
        )
        labels = np.asarray(labels)
        if labels.min() == labels.max():
            labels[0] = 1 - labels[0]
        scores = np.asarray(scores)
        total = metrics.auc(scores, labels) + metrics.auc(-scores, labels)
        assert total == pytest.approx(1.0, abs=1e-12)

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(3)
        scores = rng.normal(size=60)
        labels = rng.integers(0, 2, size=60)
        labels[0], labels[1] = 0, 1
        base = metrics.auc(scores, labels)
        assert metrics.auc(np.exp(scores), labels) == pytest.approx(base, abs=1e-12)
        assert metrics.auc(3.0 * scores - 7.0, labels) == pytest.approx(base, abs=1e-12)


class TestRelativeIncrement:
    def test_headline_value(self):
        assert metrics.relative_increment(0.2250, 0.1943) == pytest.approx(15.8, abs=0.1)

    def test_zero_at_equality(self):
        assert metrics.relative_increment(0.5, 0.5) == 0.0

    def test_doubling(self):
        assert metrics.relative_increment(0.3886, 0.1943) == pytest.approx(100.0, abs=1e-9)

    def test_nonpositive_baseline(self):
        with pytest.raises(ContractError):
            metrics.relative_increment(0.1, 0.0)

    @given(st.floats(0.01, 10, allow_nan=False), st.floats(0.01, 10, allow_nan=False))
    def test_linear_in_private_loss(self, base, private):
        doubled = metrics.relative_increment(2 * private, base)
        single = metrics.relative_increment(private, base)
        assert doubled - single == pytest.approx(100.0 * private / base, rel=1e-9)


class TestTestPll:
    def test_all_ones_zero_logits(self):
        assert metrics.test_pll(np.zeros(5), np.ones(5)) == pytest.approx(1.0, abs=1e-15)

    def test_zero_labels_negative_logit(self):
        value = metrics.test_pll(np.full(4, -10.0), np.zeros(4))
        assert value == pytest.approx(np.exp(-10.0), rel=1e-12)

    def test_constant_predictor_optimum(self):
        # Newton iteration in f on mean(exp(f) - y f) converges to ln(mean y);
        # the trained constant predictor must sit within 1e-3 of that optimum.
        rng = np.random.default_rng(11)
        labels = rng.poisson(2.5, size=2000).astype(float)
        f = 0.0
        for _ in range(50):
            f -= (np.exp(f) - labels.mean()) / np.exp(f)
        optimum = np.log(labels.mean())
        assert f == pytest.approx(optimum, abs=1e-12)
        trained = metrics.test_pll(np.full(len(labels), f), labels)
        analytic = float(np.mean(np.exp(optimum) - labels * optimum))
        assert trained == pytest.approx(analytic, abs=1e-3)
