"""
Posterior of the interpolated normal field V at grid nodes.

Vector components are modelled as independent with one shared scalar covariance
K_V = K1 - K2 D^-1 K2^T, held in factored form.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
from loguru import logger

from .covariance import LumpedCovariance, OrientedPointCloud, build_K2, kernel_matrix, lumped_covariance
from .grid import UniformGrid, axis_kernel_matrix, kron_fastest_first
from .priors import MeanPrior


@dataclass(eq=False)
class VectorFieldPosterior:
    """
    Posterior of V over the grid nodes.

    Attributes:
        grid: Grid the field lives on
        mean: (|O|, dim) posterior mean at every node
        K2: Sparse (|O|, |S|) node/sample covariance
        lumped: Lumped sample covariance D
        sigma_g: Prior variance scale
    """

    grid: UniformGrid
    mean: np.ndarray
    K2: sp.csc_matrix
    lumped: LumpedCovariance
    sigma_g: float

    def node_covariance(self, nodes: np.ndarray) -> np.ndarray:
        return vector_field_node_covariance(nodes, self.grid, self.K2, self.lumped, self.sigma_g)


def prior_covariance(grid: UniformGrid, sigma_g: float) -> sp.csr_matrix:
    """K1 = sigma_g * kron of per-axis banded kernel matrices (k_PSR between nodes is symmetric)"""
    factors = [axis_kernel_matrix(n, grid.spacing, grid.kernel.width) for n in grid.shape]
    return (sigma_g * kron_fastest_first(factors)).tocsr()


def _data_weights(cloud: OrientedPointCloud, lumped: LumpedCovariance, prior: Optional[MeanPrior]) -> np.ndarray:
    """D^-1 (N - m(P)), shape (|S|, dim)"""
    residual = cloud.normals
    if prior is not None:
        residual = residual - prior.evaluate(cloud.positions)
    return residual * lumped.inverse[:, None]


def vector_field_mean(
    q: np.ndarray,
    cloud: OrientedPointCloud,
    lumped: LumpedCovariance,
    grid: UniformGrid,
    prior: Optional[MeanPrior] = None,
) -> np.ndarray:
    """
    m(q) + sum_s k_SPSR(p_s, q) d_s^-1 (N_s - m(p_s)).

    Args:
        q: Query position or (m, dim) positions, all inside the grid

    Returns:
        (dim,) vector for a single position, (m, dim) otherwise
    """
    q_arr = np.atleast_2d(np.asarray(q, dtype=float))
    grid.require_inside(q_arr, what="query point")
    base = prior.evaluate(q_arr) if prior is not None else np.zeros_like(q_arr)
    if len(cloud):
        K = kernel_matrix(grid, q_arr, cloud.positions, lumped.sigma_g)
        base = base + K @ _data_weights(cloud, lumped, prior)
    return base[0] if np.ndim(q) == 1 else base


def vector_field_at_nodes(
    cloud: OrientedPointCloud,
    grid: UniformGrid,
    K2: sp.spmatrix,
    lumped: LumpedCovariance,
    prior: Optional[MeanPrior] = None,
) -> np.ndarray:
    """V_SPSR at every node, shape (|O|, dim)"""
    base = np.zeros((grid.node_count, grid.dim))
    if len(cloud):
        base = K2 @ _data_weights(cloud, lumped, None)
    if prior is not None:
        base = base + prior_vector_field(cloud, grid, K2, lumped, prior)
    return base


def prior_vector_field(
    cloud: OrientedPointCloud,
    grid: UniformGrid,
    K2: sp.spmatrix,
    lumped: LumpedCovariance,
    prior: MeanPrior,
) -> np.ndarray:
    """Prior part of V_SPSR at every node, m(O) - K2 D^-1 m(P)"""
    field = prior.evaluate(grid.node_positions())
    if len(cloud):
        field = field - K2 @ (prior.evaluate(cloud.positions) * lumped.inverse[:, None])
    return field


def vector_field_node_covariance(
    nodes: np.ndarray,
    grid: UniformGrid,
    K2: sp.spmatrix,
    lumped: LumpedCovariance,
    sigma_g: float,
) -> np.ndarray:
    """
    K1 - K2 D^-1 K2^T restricted to the requested nodes, diagonal clamped at 0.

    Args:
        nodes: Flat node indices

    Returns:
        Dense symmetric (len(nodes), len(nodes)) matrix
    """
    nodes = np.atleast_1d(np.asarray(nodes, dtype=np.int64))
    positions = grid.node_positions(nodes)
    offsets = positions[:, None, :] - positions[None, :, :]
    K1 = sigma_g * grid.kernel.evaluate(offsets)
    rows = sp.csr_matrix(K2)[nodes]
    reduction = (rows @ sp.diags(lumped.inverse) @ rows.T).toarray() if K2.shape[1] else 0.0
    cov = K1 - reduction
    cov = 0.5 * (cov + cov.T)
    diag = np.diagonal(cov).copy()
    np.fill_diagonal(cov, np.maximum(diag, 0.0))
    return cov


def condition_vector_field(
    cloud: OrientedPointCloud,
    grid: UniformGrid,
    sigma_g: float,
    prior: Optional[MeanPrior] = None,
) -> VectorFieldPosterior:
    """Condition the normal-field GP on the cloud and return its node posterior"""
    lumped = lumped_covariance(cloud, grid, sigma_g)
    K2 = build_K2(cloud, grid, sigma_g)
    mean = vector_field_at_nodes(cloud, grid, K2, lumped, prior)
    logger.info(f"Vector field conditioned on {len(cloud)} samples over {grid.node_count} nodes")
    return VectorFieldPosterior(grid=grid, mean=mean, K2=K2, lumped=lumped, sigma_g=sigma_g)
