"""
Statistical queries over a StochasticField: inside probability, surface density,
confidence intervals, total uncertainty, region collision probability and
level-set extraction.

Inside is f <= 0.
"""
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union
import sys

import numpy as np
import scipy.sparse as sp
from loguru import logger
from scipy.stats import norm
from skimage import measure

sys.path.append(str(Path(__file__).parent.parent))

import config
from .errors import ArgumentError, NumericalError
from .grid import UniformGrid, interpolation_matrix
from .poisson import StochasticField

CONFIDENCE_Z = {0.68: 1.0, 0.95: 2.0, 0.997: 3.0}


def _scalar_or_array(values: np.ndarray, points) -> Union[float, np.ndarray]:
    return float(values[0]) if np.ndim(points) == 1 else values


def inside_probability(mean: np.ndarray, variance: np.ndarray) -> np.ndarray:
    """Phi(-mu / sigma); an exact (sigma = 0) value is inside iff mu <= 0"""
    mean = np.asarray(mean, dtype=float)
    sigma = np.sqrt(np.maximum(np.asarray(variance, dtype=float), 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        p = norm.cdf(-mean / sigma)
    return np.where(sigma > 0.0, p, (mean <= 0.0).astype(float))


def p_inside(stochastic_field: StochasticField, points):
    """
    Probability that f <= 0 at one point or at each row of `points`.

    Raises:
        DomainError: a point lies outside the grid
    """
    mu = stochastic_field.interpolate_mean(points)
    var = stochastic_field.interpolate_variance(points)
    return _scalar_or_array(inside_probability(mu, var), points)


def surface_density(stochastic_field: StochasticField, points):
    """Normal density of f at 0; sigma = 0 gives +inf when mu = 0 and 0 otherwise"""
    mu = stochastic_field.interpolate_mean(points)
    sigma = np.sqrt(np.maximum(stochastic_field.interpolate_variance(points), 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        density = norm.pdf(0.0, loc=mu, scale=np.where(sigma > 0.0, sigma, 1.0))
    degenerate = np.where(mu == 0.0, np.inf, 0.0)
    return _scalar_or_array(np.where(sigma > 0.0, density, degenerate), points)


def confidence_z(level: float) -> float:
    for supported, z in CONFIDENCE_Z.items():
        if np.isclose(level, supported, rtol=0.0, atol=1e-9):
            return z
    raise ArgumentError(f"unsupported confidence level {level}; use one of {sorted(CONFIDENCE_Z)}")


def confidence_interval(stochastic_field: StochasticField, points, level: float):
    """
    mu -/+ z sigma with z = 1, 2, 3 for the 68-95-99.7 levels.

    Returns:
        (lo, hi), scalars for a single point or arrays otherwise
    """
    z = confidence_z(level)
    mu = stochastic_field.interpolate_mean(points)
    sigma = np.sqrt(np.maximum(stochastic_field.interpolate_variance(points), 0.0))
    lo, hi = mu - z * sigma, mu + z * sigma
    return _scalar_or_array(lo, points), _scalar_or_array(hi, points)


def classify_interval(lo, hi):
    """"inside" when the whole interval is negative, "outside" when positive, else "uncertain" """
    lo, hi = np.asarray(lo), np.asarray(hi)
    labels = np.where(hi < 0.0, "inside", np.where(lo > 0.0, "outside", "uncertain"))
    return str(labels) if labels.ndim == 0 else labels


def uncertainty_weights(grid: UniformGrid, box: Optional[Tuple[Sequence[float], Sequence[float]]] = None) -> np.ndarray:
    """
    Trapezoid quadrature weights of the grid nodes over an axis-aligned box.

    Nodes outside the box get weight 0; the weights of a constant integrand sum to the
    box volume when the box faces lie on grid planes.
    """
    lower = grid.lower if box is None else np.asarray(box[0], dtype=float)[:grid.dim]
    upper = grid.upper if box is None else np.asarray(box[1], dtype=float)[:grid.dim]
    if np.any(lower > upper):
        raise ArgumentError(f"box lower corner {lower} exceeds upper corner {upper}")
    if box is not None:
        grid.require_inside(np.vstack([lower, upper]), what="box corner")

    per_axis = []
    tol = 1e-9 * grid.spacing
    for a in range(grid.dim):
        coords = grid.axis_coordinates(a)
        inside = (coords >= lower[a] - tol) & (coords <= upper[a] + tol)
        weights = np.where(inside, grid.spacing, 0.0)
        selected = np.flatnonzero(inside)
        if selected.size:
            weights[selected[0]] *= 0.5
            weights[selected[-1]] *= 0.5
        if selected.size == 1:
            weights[selected] = 0.0
        per_axis.append(weights)

    total = per_axis[0]
    for weights in per_axis[1:]:
        total = np.outer(weights, total).ravel()
    return total


def total_uncertainty_from_probability(
    grid: UniformGrid,
    probability: np.ndarray,
    box: Optional[Tuple[Sequence[float], Sequence[float]]] = None,
) -> float:
    """Integral of 0.5 - |p - 0.5| over the box from node probabilities"""
    integrand = 0.5 - np.abs(np.asarray(probability) - 0.5)
    return float(uncertainty_weights(grid, box) @ integrand)


def total_uncertainty(
    stochastic_field: StochasticField,
    box: Optional[Tuple[Sequence[float], Sequence[float]]] = None,
) -> float:
    """
    Global uncertainty U over a box (the whole grid by default), in volume units.

    Args:
        stochastic_field: Field to measure
        box: (lower, upper) corners inside the grid

    Returns:
        U in [0, 0.5 * volume]
    """
    p = inside_probability(stochastic_field.mean, stochastic_field.variance)
    return total_uncertainty_from_probability(stochastic_field.grid, p, box)


@dataclass(eq=False)
class RegionSamples:
    """Points r_i standing in for a region, with their interpolation rows W"""

    points: np.ndarray
    W: sp.csr_matrix

    @classmethod
    def from_points(cls, grid: UniformGrid, points: np.ndarray) -> "RegionSamples":
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if points.shape[0] == 0:
            raise ArgumentError("a region needs at least one sample point")
        return cls(points, interpolation_matrix(grid, points))

    @classmethod
    def from_box(
        cls,
        grid: UniformGrid,
        lower: Sequence[float],
        upper: Sequence[float],
        count: int,
        rng: np.random.Generator,
    ) -> "RegionSamples":
        """Uniform random points in an axis-aligned box"""
        lower = np.asarray(lower, dtype=float)[:grid.dim]
        upper = np.asarray(upper, dtype=float)[:grid.dim]
        return cls.from_points(grid, rng.uniform(lower, upper, size=(count, grid.dim)))

    def __len__(self) -> int:
        return self.points.shape[0]


def jittered_cholesky(
    cov: np.ndarray,
    start: float = config.JITTER_RELATIVE,
    limit: float = config.JITTER_MAX_RELATIVE,
) -> np.ndarray:
    """
    Lower Cholesky factor of cov + eps I, growing eps tenfold from start * max(diag).

    Raises:
        NumericalError: still not positive definite at limit * max(diag)
    """
    scale = max(float(np.max(np.diagonal(cov))), np.finfo(float).tiny)
    relative = start
    while relative <= limit * (1.0 + 1e-12):
        try:
            return np.linalg.cholesky(cov + relative * scale * np.eye(cov.shape[0]))
        except np.linalg.LinAlgError:
            relative *= 10.0
    raise NumericalError(f"covariance is not positive definite even with jitter {limit:g} x max diagonal")


def region_collision_probability(
    stochastic_field: StochasticField,
    region: RegionSamples,
    mc_samples: int = config.MC_SAMPLES,
    seed: Union[int, Sequence[int]] = config.DEFAULT_SEED,
    cap: int = config.JOINT_QUERY_CAP,
) -> Tuple[float, float]:
    """
    Probability that any region point is inside, 1 - P(all f(r_i) > 0).

    Draws antithetic pairs from N(W f, W K_f W^T) with the raw covariance.

    Returns:
        (probability, standard error)
    """
    if len(region) > cap:
        raise ArgumentError(f"region has {len(region)} points, joint query cap is {cap}; subsample the region")
    mu, cov = stochastic_field.joint_distribution(region.points, cap=cap)
    if float(np.max(np.diagonal(cov))) <= 0.0:
        logger.warning("Region covariance vanishes; collision is decided by the mean alone")
        return float(np.any(mu <= 0.0)), 0.0

    factor = jittered_cholesky(cov)
    rng = np.random.default_rng(seed)
    pairs = max(int(mc_samples) // 2, 1)
    z = rng.standard_normal((pairs, len(region)))
    offsets = z @ factor.T
    hit_plus = np.any(mu + offsets <= 0.0, axis=1)
    hit_minus = np.any(mu - offsets <= 0.0, axis=1)
    pair_means = 0.5 * (hit_plus.astype(float) + hit_minus.astype(float))
    probability = float(pair_means.mean())
    stderr = float(pair_means.std(ddof=1) / np.sqrt(pairs)) if pairs > 1 else 0.0
    logger.debug(f"Collision estimate over {2 * pairs} samples: p={probability:.6f} +/- {stderr:.2e}")
    return probability, stderr


@dataclass(eq=False)
class TrajectoryCollision:
    """
    Collision estimates for regions swept along a path.

    Attributes:
        probabilities: Collision probability of each region
        stderrs: Standard error of each estimate
        p_any: Joint probability that any region collides; None when the
            regions together exceed the joint query cap
        p_any_stderr: Standard error of p_any
    """

    probabilities: np.ndarray
    stderrs: np.ndarray
    p_any: Optional[float] = None
    p_any_stderr: Optional[float] = None

    @property
    def worst_region(self) -> int:
        return int(np.argmax(self.probabilities))

    @property
    def bounds(self) -> Tuple[float, float]:
        """max_i p_i <= P(any) <= min(1, sum_i p_i)"""
        return float(self.probabilities.max()), float(min(1.0, self.probabilities.sum()))


def trajectory_collision_probability(
    stochastic_field: StochasticField,
    regions: Sequence[RegionSamples],
    mc_samples: int = config.MC_SAMPLES,
    seed: int = config.DEFAULT_SEED,
    cap: int = config.JOINT_QUERY_CAP,
) -> TrajectoryCollision:
    """
    Collision probability of every region along a trajectory, plus the chance of any collision.

    Region i draws from the RNG stream (seed, i); the joint estimate over all
    regions uses (seed, len(regions)).

    Raises:
        ArgumentError: no regions, or a single region over the cap
    """
    if len(regions) == 0:
        raise ArgumentError("a trajectory needs at least one region")
    estimates = [
        region_collision_probability(stochastic_field, region, mc_samples, [seed, i], cap)
        for i, region in enumerate(regions)
    ]
    result = TrajectoryCollision(
        probabilities=np.array([p for p, _ in estimates]),
        stderrs=np.array([s for _, s in estimates]),
    )

    total = sum(len(region) for region in regions)
    if total <= cap:
        swept = RegionSamples(np.vstack([r.points for r in regions]), sp.vstack([r.W for r in regions]).tocsr())
        result.p_any, result.p_any_stderr = region_collision_probability(
            stochastic_field, swept, mc_samples, [seed, len(regions)], cap
        )
    else:
        lower, upper = result.bounds
        logger.info(f"Trajectory has {total} points over the joint cap {cap}; P(any) lies in [{lower:.4f}, {upper:.4f}]")
    logger.info(f"Trajectory of {len(regions)} regions: worst region {result.worst_region} "
                f"with p={result.probabilities[result.worst_region]:.6f}")
    return result


@dataclass(eq=False)
class LevelSet:
    """
    Iso-surface (3D triangle mesh) or iso-lines (2D polylines) in world coordinates.

    `faces` is empty in 2D; `polylines` is empty in 3D.
    """

    dim: int
    vertices: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    faces: np.ndarray = field(default_factory=lambda: np.zeros((0, 3), dtype=np.int64))
    polylines: List[np.ndarray] = field(default_factory=list)

    @property
    def is_empty(self) -> bool:
        return len(self.faces) == 0 and len(self.polylines) == 0

    def total_length(self) -> float:
        return float(sum(np.linalg.norm(np.diff(line, axis=0), axis=1).sum() for line in self.polylines))

    def edge_counts(self) -> dict:
        """Number of faces sharing each undirected mesh edge"""
        edges = np.sort(self.faces[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
        unique, counts = np.unique(edges, axis=0, return_counts=True)
        return {tuple(e): int(c) for e, c in zip(unique, counts)}

    def closed_polylines(self) -> List[np.ndarray]:
        return [line for line in self.polylines if len(line) > 2 and np.allclose(line[0], line[-1])]


def extract_levelset(grid: UniformGrid, values: np.ndarray, iso: float = 0.0) -> LevelSet:
    """
    Marching cubes (3D) or marching squares (2D) on node values.

    Args:
        grid: Grid the values live on
        values: Node values in x-fastest order
        iso: Iso value

    Returns:
        LevelSet, empty when the field never crosses `iso`
    """
    volume = grid.reshape(np.asarray(values, dtype=float))
    if grid.dim == 2:
        lines = measure.find_contours(volume, iso)
        polylines = [grid.lower + grid.spacing * line for line in lines]
        logger.debug(f"Marching squares: {len(polylines)} polyline(s) at iso {iso}")
        return LevelSet(dim=2, vertices=np.zeros((0, 2)), polylines=polylines)

    try:
        verts, faces, _, _ = measure.marching_cubes(volume, level=iso, spacing=(grid.spacing,) * 3)
    except ValueError:
        logger.warning(f"Field does not cross iso value {iso}; level set is empty")
        return LevelSet(dim=3)
    logger.debug(f"Marching cubes: {len(verts)} vertices, {len(faces)} faces at iso {iso}")
    return LevelSet(dim=3, vertices=verts + grid.lower, faces=faces.astype(np.int64))
