"""
Oriented point clouds, the PSR semicovariance k_PSR, its symmetrized form k_SPSR,
the lumped sample covariance and the node/sample cross-covariance K2.
"""
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional
import sys

import numpy as np
import scipy.sparse as sp
from loguru import logger
from scipy.spatial import cKDTree

sys.path.append(str(Path(__file__).parent.parent))

import config
from .errors import ArgumentError
from .grid import UniformGrid, kernel_eval_1d, trilinear_weights


@dataclass(eq=False)
class OrientedPointCloud:
    """
    Surface samples with outward unit normals.

    Attributes:
        positions: (n, dim) sample positions
        normals: (n, dim) normals, normalized on construction
        noise_sigma: standard deviation of the normal noise
    """

    positions: np.ndarray
    normals: np.ndarray
    noise_sigma: float = 0.0

    def __post_init__(self):
        positions = np.asarray(self.positions, dtype=float)
        normals = np.asarray(self.normals, dtype=float)
        if positions.ndim == 1:
            positions = positions.reshape(1, -1) if positions.size else positions.reshape(0, 3)
        if normals.ndim == 1:
            normals = normals.reshape(positions.shape[0], -1) if normals.size else normals.reshape(0, positions.shape[1])
        if positions.shape != normals.shape:
            raise ArgumentError(f"positions {positions.shape} and normals {normals.shape} differ in shape")
        if positions.shape[1] not in (2, 3):
            raise ArgumentError(f"samples must be 2D or 3D, got dimension {positions.shape[1]}")
        if not (np.all(np.isfinite(positions)) and np.all(np.isfinite(normals))):
            raise ArgumentError("positions and normals must be finite")
        if self.noise_sigma < 0:
            raise ArgumentError(f"noise sigma must be nonnegative, got {self.noise_sigma}")
        lengths = np.linalg.norm(normals, axis=1)
        if np.any(lengths == 0.0):
            raise ArgumentError(f"{int(np.count_nonzero(lengths == 0.0))} sample(s) have a zero-length normal")
        self.positions = positions
        self.normals = normals / lengths[:, None] if len(lengths) else normals
        self.noise_sigma = float(self.noise_sigma)

    @classmethod
    def empty(cls, dim: int, noise_sigma: float = 0.0) -> "OrientedPointCloud":
        return cls(np.zeros((0, dim)), np.zeros((0, dim)), noise_sigma)

    def __len__(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    def centroid(self) -> np.ndarray:
        return self.positions.mean(axis=0)

    def union(self, other: "OrientedPointCloud") -> "OrientedPointCloud":
        if other.dim != self.dim:
            raise ArgumentError(f"cannot merge {self.dim}D and {other.dim}D clouds")
        return OrientedPointCloud(
            np.vstack([self.positions, other.positions]),
            np.vstack([self.normals, other.normals]),
            self.noise_sigma,
        )

    def subset(self, index) -> "OrientedPointCloud":
        return OrientedPointCloud(self.positions[index], self.normals[index], self.noise_sigma)


@dataclass(eq=False)
class LumpedCovariance:
    """Diagonal replacement of the sample covariance K3 (row sums plus noise)"""

    diagonal: np.ndarray
    sigma_g: float
    noise_sigma: float = 0.0

    @property
    def inverse(self) -> np.ndarray:
        return 1.0 / self.diagonal


def _semicovariance(grid: UniformGrid, x: np.ndarray, y: np.ndarray, sigma_g: float) -> np.ndarray:
    """Row-wise k_PSR(x_i, y_i) for equally long point arrays"""
    nodes, weights = trilinear_weights(grid, x)
    corners = grid.node_positions(nodes.ravel()).reshape(nodes.shape + (grid.dim,))
    smooth = grid.kernel.evaluate(y[:, None, :grid.dim] - corners)
    return sigma_g * np.sum(weights * smooth, axis=1)


def k_psr(x, y, grid: UniformGrid, sigma_g: float) -> float:
    """
    PSR semicovariance: splat x trilinearly onto its cell corners, then smooth.

    Not symmetric in general; x must lie inside the grid.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    return float(_semicovariance(grid, x, y, sigma_g)[0])


def k_spsr(x, y, grid: UniformGrid, sigma_g: float) -> float:
    """Symmetrized semicovariance, (k_PSR(x, y) + k_PSR(y, x)) / 2"""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    grid.require_inside(y)
    forward = _semicovariance(grid, x, y, sigma_g)[0]
    backward = _semicovariance(grid, y, x, sigma_g)[0]
    # a + b is commutative in IEEE arithmetic, so swapping x and y is bitwise stable
    return float(0.5 * (forward + backward))


def kernel_matrix(
    grid: UniformGrid,
    X: np.ndarray,
    Y: np.ndarray,
    sigma_g: float,
    symmetrized: bool = True,
) -> sp.csr_matrix:
    """
    Sparse matrix of k_SPSR (or k_PSR) between two point sets.

    Candidate pairs come from a KD-tree range search in the max-norm; beyond
    2w + h the semicovariance vanishes.

    Args:
        grid: Grid providing the kernel and the interpolation cells
        X: (m, dim) row points
        Y: (n, dim) column points
        sigma_g: Prior variance scale
        symmetrized: Evaluate k_SPSR instead of k_PSR

    Returns:
        (m, n) CSR matrix
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if X.shape[0] == 0 or Y.shape[0] == 0:
        return sp.csr_matrix((X.shape[0], Y.shape[0]))
    grid.require_inside(X)
    if symmetrized:
        grid.require_inside(Y)

    reach = grid.kernel.support + grid.spacing
    neighbours = cKDTree(Y).query_ball_point(X, r=reach, p=np.inf)
    rows = np.repeat(np.arange(X.shape[0]), [len(n) for n in neighbours])
    cols = np.fromiter((j for n in neighbours for j in n), dtype=np.int64, count=len(rows))

    values = _semicovariance(grid, X[rows], Y[cols], sigma_g)
    if symmetrized:
        values = 0.5 * (values + _semicovariance(grid, Y[cols], X[rows], sigma_g))
    keep = values != 0.0
    return sp.csr_matrix((values[keep], (rows[keep], cols[keep])), shape=(X.shape[0], Y.shape[0]))


def lumped_covariance(cloud: OrientedPointCloud, grid: UniformGrid, sigma_g: float) -> LumpedCovariance:
    """d_s = sum_s' k_SPSR(p_s, p_s') + sigma_n^2"""
    if len(cloud) == 0:
        return LumpedCovariance(np.zeros(0), sigma_g, cloud.noise_sigma)
    K3 = kernel_matrix(grid, cloud.positions, cloud.positions, sigma_g)
    diagonal = np.asarray(K3.sum(axis=1)).ravel() + cloud.noise_sigma ** 2
    if np.any(diagonal <= 0.0):
        raise ArgumentError("lumped covariance has a nonpositive entry; kernel width is below half the spacing")
    logger.debug(f"Lumped covariance: {len(diagonal)} samples, density range [{diagonal.min():.4g}, {diagonal.max():.4g}]")
    return LumpedCovariance(diagonal, sigma_g, cloud.noise_sigma)


@dataclass(eq=False)
class AxisFactors:
    """
    One axis of the separable K2 column of every sample.

    `index[s, i]` is the i-th node of the window around sample s; `smooth` holds
    B3((p - x_i)/w) and `splat` the trilinear splat (1-u)B3((x_i - x_c)/w) + u B3((x_i - x_c+1)/w).
    Nodes that fall outside the grid carry zero weight.
    """

    index: np.ndarray
    smooth: np.ndarray
    splat: np.ndarray


def axis_factors(grid: UniformGrid, points: np.ndarray) -> List[AxisFactors]:
    points = np.atleast_2d(np.asarray(points, dtype=float))
    grid.require_inside(points)
    cell, frac = grid.cell_coordinates(points)
    w, h = grid.kernel.width, grid.spacing
    reach = int(np.ceil(2.0 * w / h))
    window = np.arange(-reach, reach + 2)

    factors = []
    for a in range(grid.dim):
        raw = cell[:, a:a + 1] + window[None, :]
        valid = (raw >= 0) & (raw < grid.shape[a])
        node = grid.origin[a] + h * raw
        smooth = kernel_eval_1d((points[:, a:a + 1] - node) / w)
        lower = grid.origin[a] + h * cell[:, a:a + 1]
        u = frac[:, a:a + 1]
        splat = (1.0 - u) * kernel_eval_1d((node - lower) / w) + u * kernel_eval_1d((node - lower - h) / w)
        factors.append(AxisFactors(
            index=np.clip(raw, 0, grid.shape[a] - 1),
            smooth=np.where(valid, smooth, 0.0),
            splat=np.where(valid, splat, 0.0),
        ))
    return factors


def _outer_columns(arrays: List[np.ndarray]) -> np.ndarray:
    """Per-row outer product of per-axis arrays, first axis fastest, flattened"""
    out = arrays[0]
    for arr in arrays[1:]:
        out = (arr[:, :, None] * out[:, None, :]).reshape(out.shape[0], -1)
    return out


def build_K2(
    cloud: OrientedPointCloud,
    grid: UniformGrid,
    sigma_g: float,
    chunk_size: Optional[int] = None,
) -> sp.csc_matrix:
    """
    Node/sample cross-covariance, entry (o, s) = k_SPSR(o, p_s).

    Each column is 1/2 sigma_g (prod_a smooth_a + prod_a splat_a) on a window of
    (2 ceil(2w/h) + 2)^d nodes around the sample.
    """
    n = len(cloud)
    if n == 0:
        return sp.csc_matrix((grid.node_count, 0))
    chunk_size = chunk_size or config.COVARIANCE_CHUNK_SIZE
    strides = np.concatenate([[1], np.cumprod(grid.shape[:-1])])

    blocks = []
    for start in range(0, n, chunk_size):
        stop = min(start + chunk_size, n)
        factors = axis_factors(grid, cloud.positions[start:stop])
        # flat node index of every window entry, same fastest-first layout as the values
        flat = factors[0].index * strides[0]
        for a in range(1, grid.dim):
            idx = factors[a].index * strides[a]
            flat = (idx[:, :, None] + flat[:, None, :]).reshape(flat.shape[0], -1)
        values = 0.5 * sigma_g * (
            _outer_columns([f.smooth for f in factors]) + _outer_columns([f.splat for f in factors])
        )
        cols = np.repeat(np.arange(start, stop), values.shape[1])
        keep = values.ravel() != 0.0
        blocks.append((values.ravel()[keep], flat.ravel()[keep], cols[keep]))

    data, rows, cols = (np.concatenate(parts) for parts in zip(*blocks))
    K2 = sp.csc_matrix((data, (rows, cols)), shape=(grid.node_count, n))
    logger.debug(f"K2 assembled: {grid.node_count} x {n}, {K2.nnz} nonzeros")
    return K2
