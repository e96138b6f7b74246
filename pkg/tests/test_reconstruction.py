"""End-to-end reconstruction of small 2D and 3D clouds."""

import numpy as np
import pytest

import config
from config import RunConfig
from core.covariance import OrientedPointCloud
from core.errors import ArgumentError, DomainError
from core.grid import UniformGrid
from core.priors import MeanPrior
from core.queries import p_inside
from core.reconstruction import clamp_eigen_k, prior_weight, reconstruct

from .conftest import CIRCLE_CENTER, circle_cloud, sphere_cloud


def test_clamp_eigen_k():
    grid = UniformGrid.unit(4, dim=3)
    assert clamp_eigen_k(grid, 10) == 10
    assert clamp_eigen_k(grid, 3000) == 63
    with pytest.raises(ArgumentError):
        clamp_eigen_k(grid, 0)


def test_field_invariants(circle_field):
    assert circle_field.basis.k == 300
    assert circle_field.variance.min() == 0.0
    assert circle_field.variance_offset >= 0.0
    assert circle_field.residual <= 1e-8
    assert circle_field.grid.shape == (32, 32)


def test_flip_sign_negates_mean(circle_samples):
    run = RunConfig(resolution=16, eigen_k=40)
    plain = reconstruct(circle_samples, run)
    flipped = reconstruct(circle_samples, RunConfig(resolution=16, eigen_k=40, flip_sign=True))
    np.testing.assert_array_equal(flipped.mean, -plain.mean)
    np.testing.assert_array_equal(flipped.variance, plain.variance)
    assert flipped.flip_sign


def test_empty_cloud_needs_a_grid():
    with pytest.raises(ArgumentError):
        reconstruct(OrientedPointCloud.empty(2), RunConfig(resolution=8, eigen_k=10))


def test_empty_cloud_on_explicit_grid_is_flat():
    grid = UniformGrid.unit(8, dim=2)
    field = reconstruct(OrientedPointCloud.empty(2), RunConfig(eigen_k=10), grid=grid)
    np.testing.assert_array_equal(field.mean, 0.0)
    assert field.variance.max() > 0.0


def test_samples_outside_grid():
    grid = UniformGrid.unit(8, dim=2)
    cloud = OrientedPointCloud([[0.5, 0.5], [1.0, 0.5]], [[1.0, 0.0], [1.0, 0.0]])
    with pytest.raises(DomainError):
        reconstruct(cloud, RunConfig(eigen_k=10), grid=grid)


def test_sphere_prior_fills_a_gap():
    """With half the circle missing, a sphere prior keeps the far side inside."""
    run = RunConfig(resolution=24, eigen_k=100)
    cloud = circle_cloud(40, 0.0, np.pi)
    grid = UniformGrid.unit(24, dim=2)
    plain = reconstruct(cloud, run, grid=grid)
    with_prior = reconstruct(cloud, run, grid=grid,
                             prior=MeanPrior("sphere", center=CIRCLE_CENTER, alpha=0.5))
    query_point = [0.5, 0.3]
    assert p_inside(with_prior, query_point) > p_inside(plain, query_point)


def test_three_dimensional_sphere():
    cloud = sphere_cloud(300, seed=2)
    field = reconstruct(cloud, RunConfig(resolution=12, eigen_k=100))
    assert field.grid.dim == 3
    assert p_inside(field, [0.5, 0.5, 0.5]) > 0.5
    assert p_inside(field, field.grid.lower + 0.01) < 0.5


def test_sphere_prior_barely_moves_a_fully_sampled_circle():
    """Dense samples dominate: the default-strength sphere prior stays within 10% relative L2."""
    run = RunConfig(eigen_k=50)
    cloud = circle_cloud(300)
    grid = UniformGrid.unit(48, dim=2)
    plain = reconstruct(cloud, run, grid=grid)
    prior = MeanPrior.from_spec("sphere", cloud.positions, config.PRIOR_ALPHA)
    with_prior = reconstruct(cloud, run, grid=grid, prior=prior)
    relative = np.linalg.norm(with_prior.mean - plain.mean) / np.linalg.norm(plain.mean)
    assert 0.0 < relative <= 0.1
    np.testing.assert_array_equal(with_prior.variance, plain.variance)


def test_prior_weight():
    data = np.array([3.0, 4.0])
    assert prior_weight(data, np.array([0.0, 2.0]), 0.05) == pytest.approx(0.125)
    assert prior_weight(data, np.zeros(2), 0.05) == 0.0
    assert prior_weight(np.zeros(2), np.array([1.0, 0.0]), 0.05) == 1.0
