"""
End-to-end stochastic reconstruction: condition the normal field, solve for the
mean implicit function and project the covariance into the eigenbasis.
"""
import time
from pathlib import Path
from typing import Optional, Tuple
import sys

import numpy as np
from loguru import logger

sys.path.append(str(Path(__file__).parent.parent))

from config import RunConfig
from .covariance import OrientedPointCloud
from .errors import ArgumentError
from .gp_field import VectorFieldPosterior, condition_vector_field, prior_vector_field
from .grid import UniformGrid
from .poisson import (
    StochasticField,
    build_eigenbasis,
    raw_variance_diagonal,
    reduced_covariance,
    solve_mean,
)
from .priors import MeanPrior


def clamp_eigen_k(grid: UniformGrid, k: int) -> int:
    """Cap k at |O| - 1, warning when the request is larger"""
    if k < 1:
        raise ArgumentError(f"eigen k must be at least 1, got {k}")
    limit = grid.node_count - 1
    if k > limit:
        logger.warning(f"Requested k={k} exceeds |O|-1 for {grid.node_count} nodes; using k={limit}")
        return limit
    return k


def prior_weight(data_mean: np.ndarray, prior_mean: np.ndarray, alpha: float) -> float:
    """
    Scale for the prior's part of f so it moves the data-only mean by alpha in relative L2.

    Without a data term the prior is used as given (weight 1).
    """
    prior_norm = float(np.linalg.norm(prior_mean))
    if prior_norm == 0.0:
        return 0.0
    data_norm = float(np.linalg.norm(data_mean))
    if data_norm == 0.0:
        return 1.0
    return alpha * data_norm / prior_norm


def apply_prior(
    posterior: VectorFieldPosterior,
    cloud: OrientedPointCloud,
    data_mean: np.ndarray,
    prior: MeanPrior,
    solver: str,
) -> Tuple[np.ndarray, float, int]:
    """
    Add the prior's contribution to a data-only mean.

    f is linear in V, so the prior part m(O) - K2 D^-1 m(P) is solved on its own
    and blended in with `prior_weight`. posterior.mean is updated to match.

    Returns:
        (mean, residual, iterations) of the prior solve
    """
    grid = posterior.grid
    V = prior_vector_field(cloud, grid, posterior.K2, posterior.lumped, prior)
    prior_mean, residual, iterations = solve_mean(V, grid, cloud, method=solver)
    weight = prior_weight(data_mean, prior_mean, prior.alpha)
    posterior.mean = posterior.mean + weight * V
    logger.info(f"{prior.kind.capitalize()} prior blended with weight {weight:.4g} (alpha={prior.alpha})")
    return data_mean + weight * prior_mean, residual, iterations


def reconstruct(
    cloud: OrientedPointCloud,
    run: Optional[RunConfig] = None,
    grid: Optional[UniformGrid] = None,
    prior: Optional[MeanPrior] = None,
) -> StochasticField:
    """
    Build the StochasticField of an oriented point cloud.

    Args:
        cloud: Samples with outward normals
        run: Run parameters, module defaults when omitted
        grid: Grid to use, fitted around the cloud when omitted
        prior: Mean prior, built from `run` when omitted

    Returns:
        StochasticField with shifted mean and variance

    Raises:
        DomainError: a sample is not strictly inside the grid
        SolverError: the mean solve did not converge
    """
    run = run or RunConfig()
    if run.sigma_n > 0.0 and cloud.noise_sigma == 0.0:
        cloud = OrientedPointCloud(cloud.positions, cloud.normals, run.sigma_n)
    if grid is None:
        if len(cloud) == 0:
            raise ArgumentError("cannot fit a grid around an empty cloud")
        grid = UniformGrid.fit(cloud.positions, run.resolution, run.padding)
    if len(cloud):
        grid.require_inside(cloud.positions, strict=True, what="sample")
    if prior is None:
        prior = MeanPrior.from_spec(run.prior, cloud.positions, run.alpha, run.prior_center)
    k = clamp_eigen_k(grid, run.eigen_k)
    started = time.perf_counter()

    posterior = condition_vector_field(cloud, grid, run.sigma_g)
    mean, residual, iterations = solve_mean(posterior.mean, grid, cloud, method=run.solver)
    if prior.kind != "zero":
        mean, prior_residual, prior_iterations = apply_prior(posterior, cloud, mean, prior, run.solver)
        residual = max(residual, prior_residual)
        iterations += prior_iterations
    if run.flip_sign:
        mean = -mean
    logger.info(f"Mean field solved in {iterations} iterations (residual {residual:.2e}, {time.perf_counter() - started:.1f}s)")

    basis = build_eigenbasis(grid, k)
    C = reduced_covariance(posterior, cloud, basis)
    raw = raw_variance_diagonal(C, basis)
    offset = float(raw.min())
    logger.info(f"Covariance projected onto {k} modes ({time.perf_counter() - started:.1f}s total)")

    return StochasticField(
        grid=grid,
        mean=mean,
        variance=raw - offset,
        C=C,
        basis=basis,
        variance_offset=offset,
        sigma_g=run.sigma_g,
        sigma_n=cloud.noise_sigma,
        flip_sign=run.flip_sign,
        residual=residual,
    )
