"""
Poisson step of the stochastic reconstruction.

The mean implicit function comes from a Krylov solve of L f = sum_a Z_a V_a. The
covariance is pushed through the solve in the span of the k lowest Neumann
eigenmodes, K_f ~ E C E^T, where C = D_e^-1 E^T (sum_a Z_a K_V Z_a^T) E D_e^-1.
"""
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Optional, Tuple
import sys

import numpy as np
import scipy.sparse as sp
from loguru import logger
from scipy.sparse.linalg import LinearOperator, bicgstab, cg
from tqdm import tqdm

sys.path.append(str(Path(__file__).parent.parent))

import config
from .covariance import OrientedPointCloud, axis_factors
from .errors import ArgumentError, SolverError
from .gp_field import VectorFieldPosterior
from .grid import (
    UniformGrid,
    axis_gradient,
    axis_kernel_matrix,
    build_divergence,
    build_laplacian,
    interpolation_matrix,
)

# Eigenvalues closer than max(eigenvalue) / _TIE_RESOLUTION count as ties
_TIE_RESOLUTION = 1e12


def axis_cosine_table(n: int) -> np.ndarray:
    """Orthonormal DCT-II table, entry [i, m] = c_m cos(pi m (i + 1/2) / n)"""
    i = np.arange(n)[:, None] + 0.5
    m = np.arange(n)[None, :]
    table = np.cos(np.pi * m * i / n) * np.sqrt(2.0 / n)
    table[:, 0] = 1.0 / np.sqrt(n)
    return table


def axis_eigenvalues(n: int, h: float) -> np.ndarray:
    """Discrete Neumann eigenvalues (2 - 2 cos(pi m / n)) / h^2, m = 0..n-1"""
    return (2.0 - 2.0 * np.cos(np.pi * np.arange(n) / n)) / h ** 2


@dataclass(frozen=True, eq=False)
class EigenBasis:
    """
    k lowest nonconstant eigenvectors of the Neumann Laplacian.

    Columns are tensor products of per-axis cosine vectors, so only the per-axis
    tables and the mode triples are stored; rows of E are evaluated on demand.
    L e_j = -eigenvalues[j] e_j.
    """

    grid: UniformGrid
    modes: np.ndarray
    eigenvalues: np.ndarray
    tables: Tuple[np.ndarray, ...] = field(repr=False)

    @property
    def k(self) -> int:
        return self.modes.shape[0]

    @classmethod
    def from_modes(cls, grid: UniformGrid, modes: np.ndarray) -> "EigenBasis":
        """Rebuild a basis from stored mode triples"""
        modes = np.asarray(modes, dtype=np.int64)[:, :grid.dim]
        eigenvalues = np.zeros(modes.shape[0])
        for a, n in enumerate(grid.shape):
            eigenvalues += axis_eigenvalues(n, grid.spacing)[modes[:, a]]
        tables = tuple(axis_cosine_table(n) for n in grid.shape)
        return cls(grid, modes, eigenvalues, tables)

    @property
    def mode_triples(self) -> np.ndarray:
        """(k, 3) mode indices with a zero third column in 2D"""
        return np.pad(self.modes, ((0, 0), (0, 3 - self.grid.dim)))

    def rows(self, nodes: np.ndarray) -> np.ndarray:
        """Rows of E for the given flat node indices, shape (len(nodes), k)"""
        multi = self.grid.multi_index(np.atleast_1d(nodes))
        out = np.ones((multi.shape[0], self.k))
        for a in range(self.grid.dim):
            out *= self.tables[a][multi[:, a]][:, self.modes[:, a]]
        return out

    def matrix(self) -> np.ndarray:
        """Dense (|O|, k) E; only for small grids"""
        return self.rows(np.arange(self.grid.node_count))


@lru_cache(maxsize=8)
def build_eigenbasis(grid: UniformGrid, k: int) -> EigenBasis:
    """
    Lowest k tensor cosine modes, zero mode excluded.

    Ties in the eigenvalue are broken lexicographically by the mode indices.

    Raises:
        ArgumentError: k outside [1, |O| - 1]
    """
    if not 1 <= k <= grid.node_count - 1:
        raise ArgumentError(f"eigen k must lie in [1, {grid.node_count - 1}] for this grid, got {k}")
    per_axis = [axis_eigenvalues(n, grid.spacing) for n in grid.shape]
    mesh = np.meshgrid(*[np.arange(n) for n in grid.shape], indexing="ij")
    candidates = np.stack([m.ravel() for m in mesh], axis=1)
    values = sum(per_axis[a][candidates[:, a]] for a in range(grid.dim))
    # eigenvalues summed across axes can differ by an ulp for equal index sets
    scale = float(values.max()) or 1.0
    ranked = np.rint(values * (_TIE_RESOLUTION / scale))
    # np.lexsort uses the last key as primary
    keys = [candidates[:, a] for a in reversed(range(grid.dim))] + [ranked]
    order = np.lexsort(keys)
    order = order[np.any(candidates[order] != 0, axis=1)][:k]
    tables = tuple(axis_cosine_table(n) for n in grid.shape)
    logger.debug(f"Eigenbasis: k={k}, eigenvalue range [{values[order[0]]:.4g}, {values[order[-1]]:.4g}]")
    return EigenBasis(grid, candidates[order], values[order], tables)


def shift_mean(mean: np.ndarray, W: sp.spmatrix) -> np.ndarray:
    """Shift f so its interpolated values at the samples average to zero"""
    if W.shape[0] == 0:
        return mean
    return mean - float(np.mean(W @ mean))


def shift_variance(variance: np.ndarray) -> np.ndarray:
    """Shift the variance so its minimum is zero"""
    return variance - variance.min()


def solve_mean(
    V: np.ndarray,
    grid: UniformGrid,
    cloud: OrientedPointCloud,
    method: str = config.SOLVER_METHOD,
    rtol: float = config.SOLVER_RTOL,
    max_residual: float = config.SOLVER_MAX_RESIDUAL,
    max_iterations: int = config.SOLVER_MAX_ITERATIONS,
) -> Tuple[np.ndarray, float, int]:
    """
    Solve the singular Neumann system L f = sum_a Z_a V_a for the mean field.

    The constant null space is projected out of the right-hand side; iterates stay
    orthogonal to it because L has zero column sums. The result is shifted so its
    interpolated values at the samples average to zero.

    Args:
        V: (|O|, dim) node vector field
        grid: Grid
        cloud: Samples used for the final shift
        method: "cg" or "bicgstab"

    Returns:
        (f, relative residual, iterations)

    Raises:
        SolverError: residual above `max_residual` after `max_iterations`
    """
    solvers = {"cg": cg, "bicgstab": bicgstab}
    if method not in solvers:
        raise ArgumentError(f"unknown solver '{method}', expected cg or bicgstab")
    L = build_laplacian(grid)
    rhs = sum(Z @ V[:, a] for a, Z in enumerate(build_divergence(grid)))
    rhs = rhs - rhs.mean()
    rhs_norm = np.linalg.norm(rhs)
    if rhs_norm <= 1e-300:
        logger.info("Divergence of the vector field is zero; mean field is zero")
        return np.zeros(grid.node_count), 0.0, 0

    A = LinearOperator((grid.node_count,) * 2, matvec=lambda x: -(L @ x), dtype=float)
    counter = {"iterations": 0}

    def _count(_):
        counter["iterations"] += 1

    solution, info = solvers[method](A, -rhs, rtol=rtol, atol=0.0, maxiter=max_iterations, callback=_count)
    residual = float(np.linalg.norm(L @ solution - rhs) / rhs_norm)
    logger.debug(f"{method} finished: info={info}, iterations={counter['iterations']}, residual={residual:.3e}")
    if residual > max_residual:
        raise SolverError("Poisson solve did not converge", residual, counter["iterations"])

    W = interpolation_matrix(grid, cloud.positions) if len(cloud) else sp.csr_matrix((0, grid.node_count))
    mean = shift_mean(solution - solution.mean(), W)
    return mean, residual, counter["iterations"]


@lru_cache(maxsize=4)
def _prior_projection(grid: UniformGrid, basis: EigenBasis, sigma_g: float) -> np.ndarray:
    """E^T (sum_a Z_a K1 Z_a^T) E from per-axis n_a x n_a tables"""
    k = basis.k
    plain, derived = [], []
    for a, n in enumerate(grid.shape):
        C = basis.tables[a]
        T = axis_kernel_matrix(n, grid.spacing, grid.kernel.width)
        # Z^T C with Z = -G^T
        ZtC = -(axis_gradient(n, grid.spacing) @ C)
        plain.append(C.T @ (T @ C))
        derived.append(ZtC.T @ (T @ ZtC))

    total = np.zeros((k, k))
    for a in range(grid.dim):
        term = np.ones((k, k))
        for b in range(grid.dim):
            table = derived[b] if b == a else plain[b]
            idx = basis.modes[:, b]
            term *= table[np.ix_(idx, idx)]
        total += term
    return sigma_g * total


def _data_projection(
    posterior: VectorFieldPosterior,
    cloud: OrientedPointCloud,
    basis: EigenBasis,
    chunk_size: int,
) -> np.ndarray:
    """
    E^T (sum_a Z_a K2 D^-1 K2^T Z_a^T) E, accumulated over sample chunks.

    Row s of B_a = K2^T Z_a^T E is 1/2 sigma_g (prod_b smooth_b^T Y_b + prod_b splat_b^T Y_b)
    restricted to each column's modes, with Y_b = Z_b^T C_b on axis a and C_b otherwise.
    """
    grid = posterior.grid
    k = basis.k
    total = np.zeros((k, k))
    n = len(cloud)
    if n == 0:
        return total

    plain = [basis.tables[a] for a in range(grid.dim)]
    derived = [(-axis_gradient(m, grid.spacing)) @ basis.tables[a] for a, m in enumerate(grid.shape)]
    inverse = posterior.lumped.inverse

    chunks = range(0, n, chunk_size)
    for start in tqdm(chunks, desc="covariance projection", disable=not config.SHOW_PROGRESS):
        stop = min(start + chunk_size, n)
        factors = axis_factors(grid, cloud.positions[start:stop])
        weight = inverse[start:stop][:, None]
        for a in range(grid.dim):
            smooth = np.ones((stop - start, k))
            splat = np.ones((stop - start, k))
            for b, f in enumerate(factors):
                Y = derived[b] if b == a else plain[b]
                rows = Y[f.index]
                smooth *= np.einsum("si,sim->sm", f.smooth, rows)[:, basis.modes[:, b]]
                splat *= np.einsum("si,sim->sm", f.splat, rows)[:, basis.modes[:, b]]
            B = 0.5 * posterior.sigma_g * (smooth + splat)
            total += B.T @ (B * weight)
    return total


def reduced_covariance(
    posterior: VectorFieldPosterior,
    cloud: OrientedPointCloud,
    basis: EigenBasis,
    chunk_size: Optional[int] = None,
) -> np.ndarray:
    """
    Reduced covariance factor C = D_e^-1 E^T (sum_a Z_a K_V Z_a^T) E D_e^-1.

    No |O| x k or |O| x |O| matrix is formed: E, Z_a and K1 are Kronecker products
    and every K2 column is a sum of two Kronecker products, so the projection
    reduces to per-axis tables and per-sample one-dimensional projections.

    Returns:
        Symmetric (k, k) matrix
    """
    chunk_size = chunk_size or config.COVARIANCE_CHUNK_SIZE
    grid = posterior.grid
    if basis.grid != grid:
        raise ArgumentError("eigenbasis was built on a different grid")
    middle = _prior_projection(grid, basis, posterior.sigma_g) - _data_projection(posterior, cloud, basis, chunk_size)
    scale = 1.0 / basis.eigenvalues
    C = scale[:, None] * middle * scale[None, :]
    C = 0.5 * (C + C.T)
    logger.debug(f"Reduced covariance: k={basis.k}, trace={np.trace(C):.4g}")
    return C


def raw_variance_diagonal(C: np.ndarray, basis: EigenBasis, chunk_size: Optional[int] = None) -> np.ndarray:
    """Row-wise dot product diag(E C E^T) = sum((E C) * E, axis=1), clamped at zero"""
    chunk_size = chunk_size or config.VARIANCE_CHUNK_SIZE
    out = np.empty(basis.grid.node_count)
    chunks = range(0, basis.grid.node_count, chunk_size)
    for start in tqdm(chunks, desc="variance diagonal", disable=not config.SHOW_PROGRESS):
        stop = min(start + chunk_size, basis.grid.node_count)
        E = basis.rows(np.arange(start, stop))
        out[start:stop] = np.einsum("ij,ij->i", E @ C, E)
    negative = out < 0.0
    if np.any(negative):
        logger.debug(f"Clamping {int(negative.sum())} negative variance entries (min {out.min():.3e})")
    return np.maximum(out, 0.0)


def variance_diagonal(C: np.ndarray, basis: EigenBasis, chunk_size: Optional[int] = None) -> np.ndarray:
    """Variance of f at every node, shifted so the minimum is zero"""
    return shift_variance(raw_variance_diagonal(C, basis, chunk_size))


def selected_covariance(
    C: np.ndarray,
    basis: EigenBasis,
    nodes: np.ndarray,
    cap: int = config.JOINT_QUERY_CAP,
    jitter: float = 0.0,
) -> np.ndarray:
    """
    Joint covariance E' C E'^T of the selected nodes.

    Args:
        nodes: Flat node indices, duplicates allowed
        cap: Maximum number of nodes
        jitter: Relative diagonal jitter, scaled by the largest diagonal entry

    Raises:
        ArgumentError: more than `cap` nodes requested
    """
    nodes = np.atleast_1d(np.asarray(nodes, dtype=np.int64))
    if nodes.size > cap:
        raise ArgumentError(f"{nodes.size} nodes requested, joint query cap is {cap}; subsample the region")
    E = basis.rows(nodes)
    cov = E @ C @ E.T
    cov = 0.5 * (cov + cov.T)
    if jitter > 0.0:
        cov = cov + jitter * max(float(np.max(np.diagonal(cov))), 0.0) * np.eye(nodes.size)
    return cov


@dataclass(eq=False)
class StochasticField:
    """
    Gaussian distribution over the implicit function on the grid.

    Attributes:
        grid: Grid
        mean: Shifted mean f_SPSR per node
        variance: Shifted variance per node (minimum zero)
        C: Reduced covariance factor (k, k)
        basis: Eigenbasis the factor is expressed in
        variance_offset: Amount subtracted from the raw variance diagonal
        sigma_g: Prior variance scale used for the build
        sigma_n: Normal noise used for the build
        flip_sign: Whether the mean was negated after the solve
        residual: Relative residual of the mean solve
    """

    grid: UniformGrid
    mean: np.ndarray
    variance: np.ndarray
    C: np.ndarray
    basis: EigenBasis
    variance_offset: float = 0.0
    sigma_g: float = config.SIGMA_G
    sigma_n: float = config.SIGMA_N
    flip_sign: bool = False
    residual: float = 0.0

    @property
    def raw_variance(self) -> np.ndarray:
        return self.variance + self.variance_offset

    def interpolate_mean(self, points: np.ndarray) -> np.ndarray:
        return interpolation_matrix(self.grid, points) @ self.mean

    def interpolate_variance(self, points: np.ndarray) -> np.ndarray:
        return interpolation_matrix(self.grid, points) @ self.variance

    def mean_gradient(self, points: np.ndarray) -> np.ndarray:
        """Interpolated central-difference gradient of the mean, shape (m, dim)"""
        grids = np.gradient(self.grid.reshape(self.mean), self.grid.spacing)
        W = interpolation_matrix(self.grid, points)
        return np.stack([W @ g.ravel(order="F") for g in grids], axis=1)

    def joint_distribution(self, points: np.ndarray, cap: int = config.JOINT_QUERY_CAP) -> Tuple[np.ndarray, np.ndarray]:
        """
        Mean W f and raw covariance W E C E^T W^T of f at arbitrary points.

        Raises:
            ArgumentError: more than `cap` points
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if points.shape[0] > cap:
            raise ArgumentError(f"{points.shape[0]} points requested, joint query cap is {cap}; subsample the region")
        W = interpolation_matrix(self.grid, points)
        used = np.unique(W.indices)
        E = self.basis.rows(used)
        WE = W[:, used] @ E
        cov = WE @ self.C @ WE.T
        return W @ self.mean, 0.5 * (cov + cov.T)
