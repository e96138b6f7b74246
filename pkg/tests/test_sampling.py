"""Metropolis-Hastings, free-path sampling and probabilistic ray casting."""

import numpy as np
import pytest

from config import RunConfig
from core.covariance import OrientedPointCloud
from core.errors import ArgumentError, SamplingError
from core.poisson import StochasticField, build_eigenbasis
from core.sampling import (
    cast_ray_probabilistic,
    cast_rays_probabilistic,
    metropolis_hastings,
    mh_repair,
    ray_box_interval,
    sample_free_path,
    transmittance,
)

from .conftest import CIRCLE_CENTER, CIRCLE_RADIUS


def _constant_field(grid, mean, variance=0.0):
    basis = build_eigenbasis(grid, 3)
    zeros = np.zeros(grid.node_count)
    return StochasticField(grid, zeros + mean, zeros + variance, np.zeros((3, 3)), basis)


class TestMetropolisHastings:
    def test_standard_normal_moments(self):
        rng = np.random.default_rng(5)
        result = metropolis_hastings(lambda x: -0.5 * np.sum(x ** 2, axis=1), np.zeros((200, 1)), 2000, 1.0, rng,
                                     keep_history=True)
        samples = result.history.reshape(-1)
        assert abs(samples.mean()) < 0.05
        assert abs(samples.std() - 1.0) < 0.05
        assert 0.5 < result.acceptance_rate < 0.85

    def test_respects_support(self):
        rng = np.random.default_rng(1)

        def uniform_box(x):
            inside = np.all((x >= 0.0) & (x <= 1.0), axis=1)
            return np.where(inside, 0.0, -np.inf)

        result = metropolis_hastings(uniform_box, np.full((50, 2), 0.5), 500, 0.3, rng)
        assert np.all((result.states >= 0.0) & (result.states <= 1.0))

    def test_zero_steps_returns_start(self):
        initial = np.array([[0.1, 0.2], [0.3, 0.4]])
        result = metropolis_hastings(lambda x: np.zeros(len(x)), initial, 0, 0.1, np.random.default_rng(0))
        np.testing.assert_array_equal(result.states, initial)
        assert result.acceptance_rate == 0.0


class TestFreePath:
    def test_transmittance(self):
        np.testing.assert_allclose(transmittance([0.5, 0.5, 0.0, 1.0]), [0.5, 0.25, 0.25, 0.0])

    def test_transparent_and_opaque(self, rng):
        assert sample_free_path(np.zeros(20), rng) == -1
        assert sample_free_path(np.zeros(0), rng) == -1
        assert sample_free_path(np.array([0.0, 0.0, 1.0, 0.3]), rng) == 2

    def test_stopping_distribution_is_geometric(self, rng):
        p = 0.3
        opacity = np.full(40, p)
        draws = np.array([sample_free_path(opacity, rng) for _ in range(20_000)])
        for index in range(4):
            expected = (1.0 - p) ** index * p
            assert abs(np.mean(draws == index) - expected) < 0.012
        assert abs(np.mean(draws == -1) - (1.0 - p) ** 40) < 0.002


class TestRayCasting:
    def test_box_interval(self, unit_grid_2d):
        assert ray_box_interval(unit_grid_2d, [-1.0, 0.5], [1.0, 0.0]) == pytest.approx((1.0, 2.0))
        assert ray_box_interval(unit_grid_2d, [0.5, 0.5], [0.0, 1.0]) == pytest.approx((0.0, 0.5))
        assert ray_box_interval(unit_grid_2d, [-1.0, 1.5], [1.0, 0.0]) is None
        assert ray_box_interval(unit_grid_2d, [-1.0, 0.5], [-1.0, 0.0]) is None

    def test_opaque_field_stops_at_entry(self, unit_grid_2d):
        field = _constant_field(unit_grid_2d, -1.0)
        assert cast_ray_probabilistic(field, [-1.0, 0.5], [2.0, 0.0], seed=0) == pytest.approx(1.0)

    def test_transparent_field_misses(self, unit_grid_2d):
        field = _constant_field(unit_grid_2d, 1.0)
        assert cast_ray_probabilistic(field, [-1.0, 0.5], [1.0, 0.0], seed=0) is None

    def test_batched_misses_are_nan(self, unit_grid_2d):
        field = _constant_field(unit_grid_2d, -1.0)
        hits = cast_rays_probabilistic(field, np.array([[-1.0, 0.5], [-1.0, 0.5]]), np.array([[1.0, 0.0], [-1.0, 0.0]]))
        assert hits[0] == pytest.approx(1.0)
        assert np.isnan(hits[1])

    def test_even_odds_give_geometric_hit_steps(self, unit_grid_2d):
        field = _constant_field(unit_grid_2d, 0.0, 0.01)
        step = 0.5 * unit_grid_2d.spacing
        n = 20_000
        hits = cast_rays_probabilistic(field, np.tile([-1.0, 0.5], (n, 1)), np.tile([1.0, 0.0], (n, 1)),
                                       rng=np.random.default_rng(11))
        assert np.all(np.isfinite(hits))
        index = np.rint((hits - 1.0) / step).astype(int)
        assert abs(index.mean() - 1.0) <= 0.05
        frequency = np.bincount(index, minlength=4) / n
        for i in range(2):
            assert frequency[i] == pytest.approx(0.5 ** (i + 1), rel=0.05)
        for i in range(2, 4):
            assert abs(frequency[i] - 0.5 ** (i + 1)) < 0.01

    def test_circle_hits_near_surface(self, circle_field):
        rng = np.random.default_rng(2)
        origins = np.tile([0.15, 0.5], (200, 1))
        hits = cast_rays_probabilistic(circle_field, origins, np.tile([1.0, 0.0], (200, 1)), rng=rng)
        assert np.all(np.isfinite(hits))
        surface = CIRCLE_CENTER[0] - CIRCLE_RADIUS - 0.15
        assert abs(np.median(hits) - surface) < 0.05


class TestRepair:
    def test_points_settle_within_a_cell_of_the_circle(self, circle_field, circle_samples):
        """The zero level of the mean sits up to about h/2 off the circle, so distances are measured in h."""
        points = mh_repair(circle_field, circle_samples, 200, steps=1000, seed=4)
        assert points.shape == (200, 2)
        assert np.all(circle_field.grid.contains(points))
        distance = np.abs(np.linalg.norm(points - CIRCLE_CENTER, axis=1) - CIRCLE_RADIUS)
        assert np.mean(distance <= circle_field.grid.spacing) >= 0.95
        nearest = np.min(np.linalg.norm(points[:, None] - circle_samples.positions[None], axis=2), axis=1)
        assert np.mean(nearest > 0.0) >= 0.9

    def test_zero_steps_returns_cloud_points(self, circle_field, circle_samples):
        points = mh_repair(circle_field, circle_samples, 10, steps=0, seed=4)
        on_cloud = np.min(np.linalg.norm(points[:, None] - circle_samples.positions[None], axis=2), axis=1)
        np.testing.assert_array_equal(on_cloud, 0.0)

    def test_deterministic_for_seed(self, circle_field, circle_samples):
        first = mh_repair(circle_field, circle_samples, 5, steps=50, seed=9)
        np.testing.assert_array_equal(first, mh_repair(circle_field, circle_samples, 5, steps=50, seed=9))

    def test_vanishing_density(self, unit_grid_2d):
        field = _constant_field(unit_grid_2d, 1.0)
        cloud = OrientedPointCloud([[0.5, 0.5]], [[1.0, 0.0]])
        with pytest.raises(SamplingError):
            mh_repair(field, cloud, 5)

    def test_invalid_requests(self, circle_field, circle_samples):
        with pytest.raises(ArgumentError):
            mh_repair(circle_field, circle_samples, 0)
        with pytest.raises(ArgumentError):
            mh_repair(circle_field, OrientedPointCloud.empty(2), 5)
