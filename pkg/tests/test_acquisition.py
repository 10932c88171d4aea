"""Expected improvement, trust-region proposals, and observation discarding."""
import math

import numpy as np
import pytest

from labcat.acquisition import (
    TrustRegion,
    _ei_values,
    discard,
    expected_improvement,
    propose,
)
from labcat.gp import fit, predict_batch
from labcat.transform import ObservationSet, TransformState


def identity_state(d):
    return TransformState(np.eye(d), np.ones(d), np.zeros(d), 1.0, 0.0)


class TestExpectedImprovement:
    def test_no_improvement_no_uncertainty(self):
        assert float(_ei_values(np.array([0.0]), np.array([0.0]))[0]) == 0.0

    def test_standard_normal_closed_form(self):
        ei = float(_ei_values(np.array([0.0]), np.array([1.0]))[0])
        assert ei == pytest.approx(1.0 / math.sqrt(2.0 * math.pi), rel=1e-12)
        assert ei == pytest.approx(0.398942, abs=1e-6)

    def test_standard_normal_monte_carlo(self):
        # Independent oracle: EI(mu=0, sigma=1) = E[max(0, -Y)], Y ~ N(0, 1).
        rng = np.random.default_rng(123)
        samples = rng.standard_normal(10_000_000)
        mc = float(np.mean(np.maximum(0.0, -samples)))
        ei = float(_ei_values(np.array([0.0]), np.array([1.0]))[0])
        assert ei == pytest.approx(mc, abs=1e-3)

    def test_deterministic_improvement_branch(self):
        ei = float(_ei_values(np.array([-1.0]), np.array([1e-30]))[0])
        assert ei == 1.0

    def test_non_negative_on_grid(self):
        mus, sigmas = np.meshgrid(np.linspace(-3, 3, 25), np.linspace(0, 2, 25))
        ei = _ei_values(mus.ravel(), sigmas.ravel() ** 2)
        assert np.all(ei >= 0.0)

    def test_monotone_in_sigma_at_fixed_nonneg_mean(self):
        for mu in (0.0, 0.5, 2.0):
            sigmas = np.linspace(1e-6, 3.0, 200)
            ei = _ei_values(np.full_like(sigmas, mu), sigmas**2)
            assert np.all(np.diff(ei) >= -1e-15)

    def test_matches_scalar_entry_point(self):
        gp = fit(np.array([[0.0, 0.4]]), np.array([0.0, 1.0]), np.ones(1))
        x = np.array([-0.2])
        mean, var = predict_batch(gp, x[:, None])
        expect = float(_ei_values(mean, var)[0])
        assert expected_improvement(gp, x) == pytest.approx(expect, rel=1e-14)


class TestPropose:
    def _spike_gp(self):
        # Incumbent 0 at the origin, worse value to the right: EI rises toward
        # the left trust-region edge, giving a unique argmax at -beta.
        return fit(np.array([[0.0, 0.35]]), np.array([0.0, 1.0]), np.ones(1))

    def test_contract_within_region_and_best_of_batch(self):
        gp = self._spike_gp()
        state = identity_state(1)
        bounds = np.array([[-100.0, 100.0]])
        tr = TrustRegion(0.5)
        for seed in range(10):
            prop = propose(gp, tr, state, bounds, np.random.default_rng(seed))
            assert np.max(np.abs(prop.x_prime)) <= 0.5
            assert bounds[0, 0] <= prop.x_objective[0] <= bounds[0, 1]
            # The returned EI dominates a fresh evaluation at the point itself.
            assert prop.ei_value == pytest.approx(
                expected_improvement(gp, prop.x_prime), rel=1e-12
            )

    def test_deterministic_for_fixed_seed(self):
        gp = self._spike_gp()
        state = identity_state(1)
        bounds = np.array([[-1.0, 1.0]])
        a = propose(gp, TrustRegion(0.5), state, bounds, np.random.default_rng(42))
        b = propose(gp, TrustRegion(0.5), state, bounds, np.random.default_rng(42))
        assert np.array_equal(a.x_prime, b.x_prime)
        assert a.ei_value == b.ei_value

    def test_dense_grid_oracle(self):
        # 10^4-point grid as the oracle for the EI argmax; a 10-sample batch
        # must land within sampling resolution of it.
        gp = self._spike_gp()
        state = identity_state(1)
        bounds = np.array([[-100.0, 100.0]])
        grid = np.linspace(-0.5, 0.5, 10_001)[None, :]
        mean, var = predict_batch(gp, grid)
        ei_grid = _ei_values(mean, var)
        best = int(np.argmax(ei_grid))
        for seed in range(5):
            prop = propose(gp, TrustRegion(0.5), state, bounds, np.random.default_rng(seed))
            assert abs(prop.x_prime[0] - grid[0, best]) < 0.12
            assert prop.ei_value >= ei_grid[best] - 1.5 * 0.12

    def test_rejection_respects_bounds(self):
        # Offset pushes half the trust-region image outside the box; every
        # accepted proposal must stay inside.
        gp = self._spike_gp()
        state = TransformState(np.eye(1), np.ones(1), np.array([0.45]), 1.0, 0.0)
        bounds = np.array([[0.0, 1.0]])
        for seed in range(20):
            prop = propose(gp, TrustRegion(0.5), state, bounds, np.random.default_rng(seed))
            assert 0.0 <= prop.x_objective[0] <= 1.0

    def test_clamp_fallback_lands_on_bounds_box(self):
        # The whole trust-region image lies outside the box, so rejection
        # exhausts its redraws and the batch is clamped onto the boundary.
        gp = self._spike_gp()
        state = TransformState(np.eye(1), np.ones(1), np.array([10.0]), 1.0, 0.0)
        bounds = np.array([[-1.0, 1.0]])
        prop = propose(gp, TrustRegion(0.5), state, bounds, np.random.default_rng(0))
        assert prop.x_objective[0] == 1.0


def make_obs(columns, outputs, ages, min_index):
    return ObservationSet(
        np.array(columns, dtype=float).T,
        np.array(outputs, dtype=float),
        np.array(ages, dtype=int),
        min_index,
    )


class TestDiscard:
    def test_at_capacity_unchanged(self):
        # n = rho * d exactly: nothing may be removed even with outside points.
        obs = make_obs(
            [[0.0, 0.0], [2.0, 2.0], [3.0, 0.0], [0.1, 0.1]],
            [0.0, 1.0, 0.5, 0.2],
            [0, 1, 2, 3],
            0,
        )
        discard(obs, TrustRegion(0.5), rho=2, d=2)
        assert obs.n == 4

    def test_oldest_outside_removed_first(self):
        # rho*d = 4, n = 7, five outside points: the three oldest outside go.
        columns = [
            [0.0, 0.0],    # age 3, incumbent at origin
            [2.0, 0.0],    # age 0, outside  -> removed
            [0.0, 3.0],    # age 5, outside
            [-4.0, 0.0],   # age 1, outside  -> removed
            [0.2, 0.2],    # age 6, inside
            [5.0, 5.0],    # age 2, outside  -> removed
            [0.0, -2.0],   # age 4, outside
        ]
        outputs = [0.0, 0.9, 0.8, 0.7, 0.6, 1.0, 0.5]
        ages = [3, 0, 5, 1, 6, 2, 4]
        obs = make_obs(columns, outputs, ages, 0)
        discard(obs, TrustRegion(0.5), rho=2, d=2)
        assert obs.n == 4
        assert sorted(obs.ages.tolist()) == [3, 4, 5, 6]
        np.testing.assert_array_equal(obs.inputs[:, obs.min_index], [0.0, 0.0])

    def test_all_inside_unchanged(self):
        obs = make_obs(
            [[0.0, 0.0], [0.1, 0.1], [0.2, -0.2], [-0.3, 0.3], [0.4, 0.4]],
            [0.0, 0.2, 0.4, 0.6, 0.8],
            [0, 1, 2, 3, 4],
            0,
        )
        discard(obs, TrustRegion(0.5), rho=2, d=2)
        assert obs.n == 5

    def test_stops_when_no_outside_points_remain(self):
        obs = make_obs(
            [[0.0, 0.0], [2.0, 0.0], [0.1, 0.1], [0.2, 0.2], [0.3, 0.3], [0.4, 0.4]],
            [0.0, 1.0, 0.2, 0.4, 0.6, 0.8],
            [0, 1, 2, 3, 4, 5],
            0,
        )
        discard(obs, TrustRegion(0.5), rho=2, d=2)
        # Only the single outside point can go; n stays above the floor.
        assert obs.n == 5
        assert 1 not in obs.ages.tolist()

    def test_incumbent_never_removed_randomized(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            n = int(rng.integers(5, 20))
            d = int(rng.integers(1, 4))
            inputs = rng.uniform(-2, 2, size=(d, n))
            outputs = rng.uniform(0.05, 1.0, size=n)
            min_index = int(rng.integers(0, n))
            inputs[:, min_index] = 0.0
            outputs[min_index] = 0.0
            obs = ObservationSet(inputs, outputs, np.arange(n), min_index)
            before = obs.n
            rho = int(rng.integers(1, 5))
            discard(obs, TrustRegion(0.5), rho=rho, d=d)
            assert obs.outputs[obs.min_index] == 0.0
            assert obs.n >= min(before, rho * d)
            # Every survivor outside the region is younger than every removed one.
            np.testing.assert_array_equal(obs.inputs[:, obs.min_index], np.zeros(d))
