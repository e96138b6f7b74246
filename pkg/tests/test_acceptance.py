"""
Whole-pipeline behaviour on reference shapes.

The slow tests are skipped unless SPSR_RUN_SLOW=1.
"""
import time

import numpy as np
import pytest

from config import RunConfig
from core.grid import UniformGrid
from core.queries import extract_levelset, p_inside, total_uncertainty
from core.reconstruction import reconstruct
from core.scanning import Camera, camera_score

from .conftest import CIRCLE_CENTER, CIRCLE_RADIUS, circle_cloud, sphere_cloud


@pytest.fixture(scope="module")
def dense_circle():
    grid = UniformGrid.unit(100, dim=2)
    started = time.perf_counter()
    field = reconstruct(circle_cloud(500), RunConfig(eigen_k=1000), grid=grid)
    return field, time.perf_counter() - started


def test_circle_contour_is_closed_and_accurate(dense_circle):
    field, elapsed = dense_circle
    assert elapsed < 60.0
    levelset = extract_levelset(field.grid, field.mean)
    assert len(levelset.polylines) == 1
    assert len(levelset.closed_polylines()) == 1
    radii = np.linalg.norm(levelset.polylines[0] - CIRCLE_CENTER, axis=1)
    assert np.max(np.abs(radii - CIRCLE_RADIUS)) <= 2.0 * field.grid.spacing


def test_circle_inside_probabilities(dense_circle):
    field, _ = dense_circle
    assert p_inside(field, CIRCLE_CENTER) >= 0.95
    corners = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    assert np.all(p_inside(field, corners) <= 0.05)


def test_certainty_grows_with_samples():
    grid = UniformGrid.unit(64, dim=2)
    run = RunConfig(eigen_k=400)
    query_point = np.array([[CIRCLE_CENTER[0] + CIRCLE_RADIUS, CIRCLE_CENTER[1]]])
    uncertainties, variances = [], []
    for n in (20, 100, 500):
        field = reconstruct(circle_cloud(n), run, grid=grid)
        uncertainties.append(total_uncertainty(field))
        variances.append(field.joint_distribution(query_point)[1][0, 0])
    assert uncertainties[0] > uncertainties[1] > uncertainties[2]
    assert variances[1] <= variances[0] * (1.0 + 1e-9)
    assert variances[2] <= variances[1] * (1.0 + 1e-9)


@pytest.mark.slow
def test_unscanned_side_scores_higher(slow_enabled):
    grid = UniformGrid.unit(32, dim=2)
    run = RunConfig(eigen_k=300)
    cloud = circle_cloud(60, 0.0, np.pi)
    field = reconstruct(cloud, run, grid=grid)
    scanned_side = Camera([0.5, 1.0], [0.0, -1.0], 0.4)
    unscanned_side = Camera([0.5, 0.0], [0.0, 1.0], 0.4)

    wins = 0
    for trial in range(10):
        occluded = camera_score(cloud, field, unscanned_side, repeats=5, seed=trial, run=run, camera_index=0)
        seen = camera_score(cloud, field, scanned_side, repeats=5, seed=trial, run=run, camera_index=1)
        wins += occluded.score > seen.score
    assert wins >= 9


@pytest.mark.slow
def test_full_size_three_dimensional_run(slow_enabled):
    started = time.perf_counter()
    field = reconstruct(sphere_cloud(5000, seed=1), RunConfig(resolution=100, eigen_k=3000))
    assert time.perf_counter() - started < 600.0
    assert field.basis.k == 3000
    assert p_inside(field, [0.5, 0.5, 0.5]) > 0.5
