"""
Shared fixtures: small oriented clouds, grids and reconstructed fields.

Field fixtures are module-scoped; a reconstruction on a 32^2 grid takes well
under a second but is reused by many tests.
"""
import os

import numpy as np
import pytest

from config import RunConfig
from core.covariance import OrientedPointCloud
from core.grid import UniformGrid
from core.reconstruction import reconstruct

CIRCLE_CENTER = np.array([0.5, 0.5])
CIRCLE_RADIUS = 0.3


def circle_cloud(n: int, start: float = 0.0, stop: float = 2.0 * np.pi, noise_sigma: float = 0.0) -> OrientedPointCloud:
    """n samples of the circle |x - (0.5, 0.5)| = 0.3 between two angles, outward normals"""
    full_turn = bool(np.isclose(stop - start, 2.0 * np.pi))
    angles = np.linspace(start, stop, n, endpoint=not full_turn)
    normals = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    return OrientedPointCloud(CIRCLE_CENTER + CIRCLE_RADIUS * normals, normals, noise_sigma)


def sphere_cloud(n: int, radius: float = 0.3, seed: int = 0) -> OrientedPointCloud:
    rng = np.random.default_rng(seed)
    normals = rng.standard_normal((n, 3))
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    return OrientedPointCloud(0.5 + radius * normals, normals)


def write_xyzn(path, cloud: OrientedPointCloud):
    with open(path, 'w', encoding='utf-8') as fh:
        for p, n in zip(cloud.positions, cloud.normals):
            fh.write(' '.join(repr(float(v)) for v in np.concatenate([p, n])) + '\n')
    return path


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture
def unit_grid_2d():
    return UniformGrid.unit(10, dim=2)


@pytest.fixture
def unit_grid_3d():
    return UniformGrid.unit(6, dim=3)


@pytest.fixture(scope="module")
def small_run():
    return RunConfig(resolution=32, eigen_k=300)


@pytest.fixture(scope="module")
def circle_samples():
    return circle_cloud(120)


@pytest.fixture(scope="module")
def circle_field(circle_samples, small_run):
    return reconstruct(circle_samples, small_run)


@pytest.fixture
def slow_enabled():
    if os.getenv("SPSR_RUN_SLOW", "0") != "1":
        pytest.skip("set SPSR_RUN_SLOW=1 to run full-size checks")
