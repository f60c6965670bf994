import math

import numpy as np
import pytest
from scipy.optimize import brentq
from scipy.special import ndtr

from dpctr.accountant import (
    DEFAULT_ORDERS,
    EpsilonTracker,
    PrivacyLossDistribution,
    account,
    calibrate_sigma,
    hockey_stick,
    rdp_epsilon,
    rdp_subsampled_gaussian,
    rdp_to_epsilon,
    sweep_batch_noise,
    sweep_epsilon_methods,
)
from dpctr.accountant import mechanism
from dpctr.errors import CalibrationRangeError


# Analytic oracle for the unsubsampled Gaussian mechanism with sensitivity 1:
# delta(eps) = Phi(1/(2s) - eps*s) - e^eps * Phi(-1/(2s) - eps*s).
def gaussian_delta(sigma, eps):
    return ndtr(0.5 / sigma - eps * sigma) - math.exp(eps) * ndtr(-0.5 / sigma - eps * sigma)


def gaussian_epsilon(sigma, delta):
    return brentq(lambda e: gaussian_delta(sigma, e) - delta, -30.0, 700.0, xtol=1e-13)


class TestHockeyStick:
    def test_zero_sampling_probability(self):
        assert float(hockey_stick(0.0, 1.0, 0.5)) == 0.0

    def test_full_batch_matches_analytic(self):
        # frozen from the oracle: Phi(1/2) - Phi(-1/2)
        value = float(hockey_stick(1.0, 1.0, 0.0))
        assert value == pytest.approx(0.382925, abs=1e-6)
        for eps in (0.0, 0.5, 1.0, 3.0):
            for sigma in (0.5, 1.0, 2.0):
                assert float(hockey_stick(1.0, sigma, eps)) == pytest.approx(
                    gaussian_delta(sigma, eps), rel=1e-12, abs=1e-300
                )

    def test_vanishes_at_large_epsilon(self):
        assert float(hockey_stick(0.3, 1.0, 200.0)) == 0.0

    def test_directions_coincide_at_q_one(self):
        for eps in (-0.5, 0.0, 0.7, 2.0):
            remove = float(hockey_stick(1.0, 1.0, eps, "remove"))
            add = float(hockey_stick(1.0, 1.0, eps, "add"))
            assert remove == pytest.approx(add, rel=1e-10, abs=1e-15)

    def test_add_direction_zero_past_support(self):
        q = 0.2
        edge = -math.log1p(-q)
        assert float(hockey_stick(q, 1.0, edge + 1e-9, "add")) == 0.0
        assert float(hockey_stick(q, 1.0, edge - 1e-3, "add")) > 0.0

    def test_monotone_non_increasing_in_eps(self):
        eps = np.linspace(-1.0, 5.0, 200)
        for direction in ("remove", "add"):
            deltas = hockey_stick(0.05, 1.0, eps, direction)
            assert (np.diff(deltas) <= 1e-15).all()


class TestConnectTheDots:
    @pytest.mark.parametrize("q,sigma,direction", [
        (1.0, 1.0, "remove"),
        (0.01, 0.5, "remove"),
        (0.1, 2.0, "add"),
        (0.5, 0.8, "remove"),
    ])
    def test_reconstruction_matches_curve(self, q, sigma, direction):
        pld = PrivacyLossDistribution.from_hockey_stick(q, sigma, 1e-4, direction, 1e-12)
        grid = pld.grid
        sample = np.unique(np.linspace(0, len(grid) - 1, 40).astype(int))
        for k in sample:
            true = float(hockey_stick(q, sigma, grid[k], direction))
            assert pld.delta(float(grid[k])) == pytest.approx(true, abs=1e-10)

    def test_masses_sum_to_one(self):
        pld = PrivacyLossDistribution.from_hockey_stick(0.02, 1.0, 1e-4, "remove", 1e-12)
        assert abs(pld.total_mass - 1.0) <= 1e-12
        pld.validate()

    def test_delta_query_matches_analytic_gaussian(self):
        pld = PrivacyLossDistribution.from_hockey_stick(1.0, 1.0, 1e-4, "remove", 1e-12)
        assert pld.delta(1.0) == pytest.approx(gaussian_delta(1.0, 1.0), rel=1e-3)

    def test_pessimism_off_grid(self):
        q, sigma = 0.05, 1.0
        pld = PrivacyLossDistribution.from_hockey_stick(q, sigma, 1e-4, "remove", 1e-12)
        rng = np.random.default_rng(0)
        lo, hi = pld.grid[0], pld.grid[-1]
        for eps in rng.uniform(lo, hi * 0.5, size=100):
            true = float(hockey_stick(q, sigma, eps, "remove"))
            assert pld.delta(float(eps)) >= true - 1e-14

    def test_grid_uniform_spacing(self):
        pld = PrivacyLossDistribution.from_hockey_stick(0.3, 1.0, 1e-4, "remove", 1e-10)
        steps = np.diff(pld.grid)
        np.testing.assert_allclose(steps, 1e-4, rtol=1e-9)


class TestComposition:
    def test_single_step_identity(self):
        pld = PrivacyLossDistribution.from_hockey_stick(0.1, 1.0, 1e-4, "remove", 1e-12)
        same = pld.compose(1)
        assert same.min_index == pld.min_index
        np.testing.assert_array_equal(same.masses, pld.masses)
        assert same.inf_mass == pld.inf_mass

    def test_four_fold_gaussian_matches_half_sigma(self):
        pld = PrivacyLossDistribution.from_hockey_stick(1.0, 1.0, 1e-4, "remove", 1e-13)
        eps = pld.compose(4, tail_mass=1e-11).epsilon(1e-5)
        assert eps == pytest.approx(gaussian_epsilon(0.5, 1e-5), rel=0.02)

    def test_inf_mass_monotone_in_steps(self):
        pld = PrivacyLossDistribution.from_hockey_stick(0.05, 0.8, 1e-4, "remove", 1e-12)
        previous = pld.inf_mass
        for steps in (2, 4, 8):
            composed = pld.compose(steps, tail_mass=1e-10)
            assert composed.inf_mass >= previous
            previous = composed.inf_mass

    def test_mass_conserved_through_composition(self):
        pld = PrivacyLossDistribution.from_hockey_stick(0.02, 1.0, 1e-4, "remove", 1e-12)
        composed = pld.compose(64, tail_mass=1e-10)
        assert abs(composed.total_mass - 1.0) <= 1e-11


class TestPldQueries:
    def setup_method(self):
        self.pld = PrivacyLossDistribution.from_hockey_stick(0.05, 1.0, 1e-4, "remove", 1e-12)

    def test_delta_at_top_is_inf_mass(self):
        top = float(self.pld.grid[-1])
        assert self.pld.delta(top) == self.pld.inf_mass

    def test_delta_monotone_on_grid(self):
        grid = self.pld.grid
        sample = np.linspace(0, len(grid) - 1, 50).astype(int)
        values = [self.pld.delta(float(grid[k])) for k in sample]
        assert all(a >= b - 1e-15 for a, b in zip(values, values[1:]))

    def test_epsilon_round_trip(self):
        for delta in (1e-3, 1e-5, 1e-7):
            eps = self.pld.epsilon(delta)
            assert self.pld.delta(eps) <= delta

    def test_epsilon_infinite_below_inf_mass(self):
        composed = self.pld.compose(4, tail_mass=1e-10)
        tiny = composed.inf_mass / 10.0
        assert tiny > 0.0
        assert composed.epsilon(tiny) == np.inf

    def test_invalid_delta(self):
        with pytest.raises(ValueError):
            self.pld.epsilon(0.0)


class TestRdp:
    def test_full_batch_closed_form(self):
        for sigma in (0.5, 1.0, 2.0):
            rho = rdp_subsampled_gaussian(1.0, sigma, DEFAULT_ORDERS)
            expected = DEFAULT_ORDERS / (2.0 * sigma * sigma)
            np.testing.assert_allclose(rho, expected, rtol=1e-9)

    def test_vanishes_as_q_to_zero(self):
        rho = rdp_subsampled_gaussian(1e-9, 1.0, np.arange(2, 32))
        assert rho.max() < 1e-12

    def test_monotone_in_order(self):
        rho = rdp_subsampled_gaussian(0.01, 1.0, np.arange(2, 65))
        assert (np.diff(rho) >= -1e-15).all()

    def test_epsilon_at_zero_steps(self):
        delta = 1e-6
        rho = rdp_subsampled_gaussian(0.01, 1.0, DEFAULT_ORDERS)
        eps = rdp_to_epsilon(rho, DEFAULT_ORDERS, steps=0, delta=delta)
        assert eps == pytest.approx(math.log(1.0 / delta) / 511.0, rel=1e-12)

    def test_epsilon_monotone_in_steps(self):
        eps = [rdp_epsilon(0.01, 1.0, t, 1e-6) for t in (100, 200, 400, 800)]
        assert all(a <= b + 1e-12 for a, b in zip(eps, eps[1:]))


class TestAccount:
    def test_pld_tighter_than_rdp(self):
        for q, sigma, steps in ((0.01, 1.0, 1000), (0.001, 0.8, 100), (0.1, 2.0, 1000)):
            assert account(q, sigma, steps, 1e-6, "pld") <= account(q, sigma, steps, 1e-6, "rdp")

    def test_reported_is_max_over_directions(self):
        kwargs = dict(q=0.03, sigma=1.0, steps=50, delta=1e-6)
        remove = account(direction="remove", **kwargs)
        add = account(direction="add", **kwargs)
        both = account(direction="both", **kwargs)
        assert both == pytest.approx(max(remove, add), rel=1e-12)
        assert both >= remove and both >= add

    def test_monotone_in_sigma(self):
        eps = [account(0.01, s, 200, 1e-6) for s in (0.6, 0.8, 1.0, 1.5, 2.0)]
        assert all(a >= b - 1e-9 for a, b in zip(eps, eps[1:]))

    def test_monotone_in_steps(self):
        eps = [account(0.01, 1.0, t, 1e-6) for t in (50, 100, 200, 400, 800)]
        assert all(a <= b + 1e-9 for a, b in zip(eps, eps[1:]))

    def test_monotone_in_q(self):
        eps = [account(q, 1.0, 200, 1e-6) for q in (0.002, 0.005, 0.01, 0.05, 0.1)]
        assert all(a <= b + 1e-9 for a, b in zip(eps, eps[1:]))

    def test_validation(self):
        with pytest.raises(ValueError):
            account(0.1, 0.0, 10, 1e-6)
        with pytest.raises(ValueError):
            account(0.1, 1.0, 0, 1e-6)
        with pytest.raises(ValueError):
            account(0.1, 1.0, 10, 1e-6, method="laplace")


class TestCalibration:
    def test_round_trip_within_contract(self):
        for target in (0.5, 8.0):
            sigma = calibrate_sigma(target, 1e-6, q=0.02, steps=300, method="pld")
            achieved = account(0.02, sigma, 300, 1e-6, "pld")
            assert 0.99 * target <= achieved <= target

    def test_sigma_monotone_in_target(self):
        tight = calibrate_sigma(0.5, 1e-6, q=0.02, steps=300, method="rdp")
        loose = calibrate_sigma(8.0, 1e-6, q=0.02, steps=300, method="rdp")
        assert tight >= loose

    def test_pld_needs_less_noise_than_rdp(self):
        rows = sweep_epsilon_methods(0.02, 300, 1e-6, [1.0, 3.0])
        for row in rows:
            assert row["sigma_pld"] <= row["sigma_rdp"]

    def test_out_of_range(self):
        with pytest.raises(CalibrationRangeError):
            calibrate_sigma(1e-4, 1e-6, q=1.0, steps=10_000, method="rdp")


class TestSweeps:
    def test_fixed_epochs_strictly_decreasing(self):
        rows = sweep_batch_noise(
            10**6, 1.0, 1e-6, [2**10, 2**11, 2**12], mode="fixed_epochs", epochs=1, method="rdp"
        )
        stds = [r["effective_noise_std"] for r in rows]
        assert all(a > b for a, b in zip(stds, stds[1:]))

    def test_fixed_steps_non_increasing(self):
        rows = sweep_batch_noise(
            10**6, 1.0, 1e-6, [2**12, 2**13, 2**14], mode="fixed_steps", steps=500, method="rdp"
        )
        stds = [r["effective_noise_std"] for r in rows]
        assert all(a >= b - 1e-12 for a, b in zip(stds, stds[1:]))

    def test_full_batch_single_step_reduces_to_gaussian(self):
        rows = sweep_batch_noise(
            1000, 1.0, 1e-6, [1000], mode="fixed_steps", steps=1, method="pld"
        )
        direct = calibrate_sigma(1.0, 1e-6, q=1.0, steps=1, method="pld")
        assert rows[0]["sigma"] == pytest.approx(direct, rel=1e-6)
        assert rows[0]["q"] == 1.0

    def test_batch_larger_than_dataset_rejected(self):
        with pytest.raises(ValueError):
            sweep_batch_noise(100, 1.0, 1e-6, [200], mode="fixed_steps", steps=1)


class TestEpsilonTracker:
    def test_zero_noise_is_unbounded(self):
        tracker = EpsilonTracker(q=0.1, sigma=0.0, delta=1e-6, total_steps=10)
        assert tracker.epsilon(5) == math.inf

    def test_matches_account(self):
        tracker = EpsilonTracker(q=0.02, sigma=1.0, delta=1e-6, total_steps=200)
        direct = account(0.02, 1.0, 200, 1e-6, "pld")
        assert tracker.epsilon(200) == pytest.approx(direct, rel=1e-6)

    def test_monotone_during_training(self):
        tracker = EpsilonTracker(q=0.02, sigma=1.0, delta=1e-6, total_steps=100)
        values = [tracker.epsilon(t) for t in (10, 50, 100)]
        assert values[0] <= values[1] <= values[2]


class TestTailHelpers:
    def test_loss_tail_mass_monotone(self):
        eps = np.linspace(-0.5, 10.0, 50)
        mass = mechanism.loss_tail_mass(0.05, 1.0, eps, "remove")
        assert (np.diff(mass) <= 1e-15).all()
        assert 0.0 <= mass.min() and mass.max() <= 1.0

    def test_support_bounds(self):
        lo, hi = mechanism.support_bounds(0.1, 1.0, "remove")
        assert lo == pytest.approx(math.log(0.9))
        assert hi == math.inf
        lo, hi = mechanism.support_bounds(0.1, 1.0, "add")
        assert hi == pytest.approx(-math.log(0.9))
        assert lo == -math.inf
