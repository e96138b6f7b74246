"""
Uniform grid geometry, the cubic B-spline smoothing kernel, trilinear
interpolation and the finite-difference Laplacian / gradient / divergence.

Nodes are flattened x-fastest (Fortran order). A 2D grid is a grid with
two active axes; its header still reports nz = 1.
"""
import itertools
from dataclasses import dataclass
from functools import reduce
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from .errors import ArgumentError, DomainError

_B3_AT_ZERO = 2.0 / 3.0
_B3_MAX_SLOPE = 2.0 / 3.0


def kernel_eval_1d(t):
    """
    Cubic B-spline B3(t), the box filter convolved with itself three times.

    Args:
        t: Offset(s) in kernel units

    Returns:
        Weight(s), zero for |t| >= 2
    """
    a = np.abs(np.asarray(t, dtype=float))
    inner = 2.0 / 3.0 - a ** 2 + 0.5 * a ** 3
    outer = (2.0 - a) ** 3 / 6.0
    values = np.where(a < 1.0, inner, np.where(a < 2.0, outer, 0.0))
    if values.ndim == 0:
        return float(values)
    return values


@dataclass(frozen=True)
class Kernel:
    """Separable tensor-product kernel with support [-2w, 2w] per axis"""

    width: float

    @property
    def support(self) -> float:
        return 2.0 * self.width

    def evaluate(self, offsets: np.ndarray) -> np.ndarray:
        """Kernel weight for world-space offsets of shape (..., dim)"""
        offsets = np.asarray(offsets, dtype=float)
        return np.prod(kernel_eval_1d(offsets / self.width), axis=-1)

    def lipschitz(self, dim: int) -> float:
        """Bound on ||grad F||: sqrt(d) * max|B3'| * max(B3)^(d-1) / w"""
        return np.sqrt(dim) * _B3_MAX_SLOPE * _B3_AT_ZERO ** (dim - 1) / self.width


@dataclass(frozen=True)
class UniformGrid:
    """
    Axis-aligned node lattice with isotropic spacing.

    Attributes:
        shape: Nodes per active axis, (nx, ny) or (nx, ny, nz)
        origin: Position of node (0, 0[, 0])
        spacing: Node spacing h
        kernel_width: Smoothing kernel scale w, defaults to h
    """

    shape: Tuple[int, ...]
    origin: Tuple[float, ...]
    spacing: float
    kernel_width: Optional[float] = None

    def __post_init__(self):
        shape = tuple(int(n) for n in self.shape)
        if len(shape) == 3 and shape[2] == 1:
            shape = shape[:2]
        if len(shape) not in (2, 3):
            raise ArgumentError(f"grid must have 2 or 3 active axes, got shape {shape}")
        if min(shape) < 2:
            raise ArgumentError(f"every active axis needs at least 2 nodes, got {shape}")
        if not self.spacing > 0:
            raise ArgumentError(f"grid spacing must be positive, got {self.spacing}")
        origin = tuple(float(x) for x in self.origin)[:len(shape)]
        if len(origin) != len(shape):
            raise ArgumentError(f"origin {self.origin} does not match grid shape {shape}")
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "spacing", float(self.spacing))
        if self.kernel_width is not None:
            object.__setattr__(self, "kernel_width", float(self.kernel_width))

    @classmethod
    def unit(cls, resolution: int, dim: int = 3, kernel_width: Optional[float] = None) -> "UniformGrid":
        """Grid over [0, 1]^dim with `resolution` nodes per axis"""
        return cls((resolution,) * dim, (0.0,) * dim, 1.0 / (resolution - 1), kernel_width)

    @classmethod
    def fit(cls, points: np.ndarray, resolution: int, padding: float = 0.1) -> "UniformGrid":
        """Cubic grid around a point set, padded on every side by `padding` times the extent"""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        lo, hi = points.min(axis=0), points.max(axis=0)
        extent = float(np.max(hi - lo))
        if extent <= 0.0:
            extent = 1.0
        side = extent * (1.0 + 2.0 * padding)
        center = 0.5 * (lo + hi)
        origin = center - 0.5 * side
        return cls((resolution,) * points.shape[1], tuple(origin), side / (resolution - 1))

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def dims(self) -> Tuple[int, int, int]:
        """Header triple (nx, ny, nz); nz = 1 in 2D"""
        return tuple(self.shape) + (1,) * (3 - self.dim)

    @property
    def node_count(self) -> int:
        return int(np.prod(self.shape))

    @property
    def kernel(self) -> Kernel:
        return Kernel(self.kernel_width if self.kernel_width is not None else self.spacing)

    @property
    def lower(self) -> np.ndarray:
        return np.asarray(self.origin)

    @property
    def upper(self) -> np.ndarray:
        return self.lower + (np.asarray(self.shape) - 1) * self.spacing

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.dim

    def axis_coordinates(self, axis: int) -> np.ndarray:
        return self.origin[axis] + self.spacing * np.arange(self.shape[axis])

    def multi_index(self, flat: np.ndarray) -> np.ndarray:
        """Flat node indices -> (m, dim) integer lattice coordinates"""
        return np.stack(np.unravel_index(np.asarray(flat), self.shape, order="F"), axis=-1)

    def flat_index(self, multi: np.ndarray) -> np.ndarray:
        multi = np.asarray(multi)
        return np.ravel_multi_index(tuple(np.moveaxis(multi, -1, 0)), self.shape, order="F")

    def node_positions(self, flat: Optional[np.ndarray] = None) -> np.ndarray:
        """World positions of the given nodes (all nodes when omitted), shape (m, dim)"""
        if flat is None:
            flat = np.arange(self.node_count)
        return self.lower + self.spacing * self.multi_index(flat)

    def reshape(self, values: np.ndarray) -> np.ndarray:
        """Flat node values -> array indexed [ix, iy(, iz)]"""
        return np.reshape(values, self.shape, order="F")

    def contains(self, points: np.ndarray, strict: bool = False) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))[:, :self.dim]
        tol = 1e-12 * max(1.0, float(np.max(np.abs(self.upper))))
        if strict:
            return np.all((points > self.lower) & (points < self.upper), axis=1)
        return np.all((points >= self.lower - tol) & (points <= self.upper + tol), axis=1)

    def require_inside(self, points: np.ndarray, strict: bool = False, what: str = "point"):
        inside = self.contains(points, strict=strict)
        if not np.all(inside):
            bad = int(np.count_nonzero(~inside))
            first = np.atleast_2d(points)[np.argmin(inside)]
            raise DomainError(
                f"{bad} {what}(s) outside grid box [{self.lower}, {self.upper}], first at {first}"
            )

    def cell_coordinates(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Enclosing cell index and fractional offset in [0, 1] per axis"""
        points = np.atleast_2d(np.asarray(points, dtype=float))[:, :self.dim]
        t = (points - self.lower) / self.spacing
        cell = np.clip(np.floor(t).astype(np.int64), 0, np.asarray(self.shape) - 2)
        frac = np.clip(t - cell, 0.0, 1.0)
        return cell, frac


def kernel_F(grid: UniformGrid, node: int, y: np.ndarray) -> float:
    """Kernel F_o(y) centred at node `node`"""
    o = grid.node_positions(np.atleast_1d(node))[0]
    return float(grid.kernel.evaluate(np.asarray(y, dtype=float)[:grid.dim] - o))


def trilinear_weights(grid: UniformGrid, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Corner nodes of the enclosing cell and their interpolation weights.

    Args:
        grid: Grid
        points: (m, dim) positions, or a single position

    Returns:
        (nodes, weights), both of shape (m, 2^dim); weights are >= 0 and sum to 1
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    grid.require_inside(points)
    cell, frac = grid.cell_coordinates(points)
    corners = np.array(list(itertools.product((0, 1), repeat=grid.dim)))
    multi = cell[:, None, :] + corners[None, :, :]
    weights = np.prod(np.where(corners[None, :, :] == 1, frac[:, None, :], 1.0 - frac[:, None, :]), axis=-1)
    return grid.flat_index(multi), weights


def interpolation_matrix(grid: UniformGrid, points: np.ndarray) -> sp.csr_matrix:
    """Sparse (m, |O|) trilinear interpolation matrix; each row sums to 1"""
    nodes, weights = trilinear_weights(grid, points)
    rows = np.repeat(np.arange(nodes.shape[0]), nodes.shape[1])
    return sp.csr_matrix((weights.ravel(), (rows, nodes.ravel())), shape=(nodes.shape[0], grid.node_count))


def axis_laplacian(n: int, h: float) -> sp.csr_matrix:
    """1D second difference with reflecting ghost nodes (u_-1 = u_0, u_n = u_n-1)"""
    main = np.full(n, -2.0)
    main[0] = main[-1] = -1.0
    off = np.ones(n - 1)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr") / h ** 2


def axis_gradient(n: int, h: float) -> sp.csr_matrix:
    """1D forward difference; the last row is the zero flux through the upper face"""
    main = -np.ones(n)
    main[-1] = 0.0
    return sp.diags([main, np.ones(n - 1)], [0, 1], shape=(n, n), format="csr") / h


def axis_kernel_matrix(n: int, h: float, width: float) -> sp.csr_matrix:
    """Banded matrix of B3((i - j) h / w) between the nodes of one axis"""
    reach = int(np.ceil(2.0 * width / h))
    offsets = [k for k in range(-reach, reach + 1) if abs(k) < n]
    bands = [np.full(n - abs(k), kernel_eval_1d(k * h / width)) for k in offsets]
    return sp.diags(bands, offsets, shape=(n, n), format="csr")


def expand_axis_operator(grid: UniformGrid, axis: int, op: sp.spmatrix) -> sp.csr_matrix:
    """Lift a 1D operator acting on `axis` to the full x-fastest node vector"""
    factors = [op if a == axis else sp.identity(grid.shape[a], format="csr") for a in range(grid.dim)]
    return kron_fastest_first(factors)


def kron_fastest_first(factors: Sequence[sp.spmatrix]) -> sp.csr_matrix:
    """Kronecker product of per-axis factors, first factor on the fastest index"""
    return reduce(lambda acc, f: sp.kron(f, acc, format="csr"), factors[1:], sp.csr_matrix(factors[0]))


def build_laplacian(grid: UniformGrid) -> sp.csr_matrix:
    """
    Symmetric Neumann Laplacian over all nodes.

    Interior rows carry -2d/h^2 on the diagonal and +1/h^2 off it; every row sums to
    zero so constants span the null space.
    """
    return sum(
        expand_axis_operator(grid, a, axis_laplacian(grid.shape[a], grid.spacing)) for a in range(grid.dim)
    ).tocsr()


def build_gradient(grid: UniformGrid) -> List[sp.csr_matrix]:
    return [expand_axis_operator(grid, a, axis_gradient(grid.shape[a], grid.spacing)) for a in range(grid.dim)]


def build_divergence(grid: UniformGrid) -> List[sp.csr_matrix]:
    """
    Per-axis divergence Z_a = -G_a^T.

    Interior rows are the difference (v_i - v_i-1)/h, centred on the half node; the
    boundary rows are one-sided. With this pairing L = sum_a Z_a G_a on every row.
    """
    return [(-g.T).tocsr() for g in build_gradient(grid)]
