"""
Random-walk Metropolis-Hastings and free-path sampling through a StochasticField
"""
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Tuple
import sys

import numpy as np
from loguru import logger

sys.path.append(str(Path(__file__).parent.parent))

import config
from .covariance import OrientedPointCloud
from .errors import ArgumentError, SamplingError
from .grid import UniformGrid
from .poisson import StochasticField
from .queries import inside_probability, surface_density


@dataclass(eq=False)
class MHResult:
    """
    Attributes:
        states: (chains, dim) final state of every chain
        acceptance_rate: Fraction of accepted proposals over all chains and steps
        history: (kept steps, chains, dim) post-burn-in states, when requested
    """

    states: np.ndarray
    acceptance_rate: float
    history: Optional[np.ndarray] = None


def metropolis_hastings(
    log_target: Callable[[np.ndarray], np.ndarray],
    initial: np.ndarray,
    steps: int,
    proposal_sigma: float,
    rng: np.random.Generator,
    burn_in: Optional[int] = None,
    keep_history: bool = False,
) -> MHResult:
    """
    Independent Gaussian random-walk chains advanced in lockstep.

    Args:
        log_target: Vectorized log density, (chains, dim) -> (chains,); -inf outside the support
        initial: (chains, dim) starting states
        steps: Number of proposals per chain
        proposal_sigma: Standard deviation of the isotropic proposal
        rng: Random generator
        burn_in: Steps dropped from the history, a fifth of them by default
        keep_history: Keep the post-burn-in states

    Returns:
        MHResult
    """
    state = np.array(initial, dtype=float, copy=True)
    if steps <= 0:
        return MHResult(states=state, acceptance_rate=0.0, history=np.zeros((0,) + state.shape) if keep_history else None)
    burn_in = int(steps * config.MH_BURN_IN_FRACTION) if burn_in is None else burn_in
    log_p = log_target(state)
    accepted = 0
    history = [] if keep_history else None

    for step in range(steps):
        proposal = state + proposal_sigma * rng.standard_normal(state.shape)
        log_q = log_target(proposal)
        with np.errstate(invalid="ignore"):
            ratio = log_q - log_p
        accept = np.log(rng.random(state.shape[0])) < np.nan_to_num(ratio, nan=-np.inf)
        state[accept] = proposal[accept]
        log_p[accept] = log_q[accept]
        accepted += int(accept.sum())
        if keep_history and step >= burn_in:
            history.append(state.copy())

    rate = accepted / (steps * state.shape[0])
    logger.debug(f"Metropolis-Hastings: {state.shape[0]} chains x {steps} steps, acceptance {rate:.3f}")
    return MHResult(
        states=state,
        acceptance_rate=rate,
        history=np.array(history) if keep_history else None,
    )


def surface_log_density(stochastic_field: StochasticField) -> Callable[[np.ndarray], np.ndarray]:
    """log of the surface density, -inf outside the grid, +inf densities capped"""
    grid = stochastic_field.grid

    def _log_density(points: np.ndarray) -> np.ndarray:
        out = np.full(points.shape[0], -np.inf)
        inside = grid.contains(points)
        if np.any(inside):
            density = np.atleast_1d(surface_density(stochastic_field, points[inside]))
            density = np.nan_to_num(density, posinf=np.finfo(float).max)
            with np.errstate(divide="ignore"):
                out[inside] = np.log(density)
        return out

    return _log_density


def mh_repair(
    stochastic_field: StochasticField,
    cloud: OrientedPointCloud,
    n_points: int,
    steps: int = config.MH_STEPS,
    proposal_sigma: Optional[float] = None,
    seed: int = config.DEFAULT_SEED,
) -> np.ndarray:
    """
    Draw new surface points from the surface density with Metropolis-Hastings.

    Chains start at randomly chosen cloud points; the final state of each chain is
    returned, so steps = 0 returns the starting points.

    Args:
        stochastic_field: Reconstructed field
        cloud: Cloud the field was built from
        n_points: Number of points (chains)
        steps: Proposals per chain
        proposal_sigma: Random-walk scale, defaults to the grid spacing

    Returns:
        (n_points, dim) positions

    Raises:
        SamplingError: the surface density vanishes at every node
    """
    if n_points < 1:
        raise ArgumentError(f"n_points must be at least 1, got {n_points}")
    if len(cloud) == 0:
        raise ArgumentError("point repair needs at least one existing sample to start from")
    mean, variance = stochastic_field.mean, stochastic_field.variance
    with np.errstate(divide="ignore", invalid="ignore"):
        node_density = np.where(variance > 0.0, np.exp(-0.5 * mean ** 2 / variance), (mean == 0.0).astype(float))
    if not np.any(node_density > 0.0):
        raise SamplingError("surface density is zero everywhere in the grid")

    rng = np.random.default_rng(seed)
    initial = cloud.positions[rng.integers(0, len(cloud), size=n_points)]
    sigma = proposal_sigma if proposal_sigma is not None else stochastic_field.grid.spacing
    result = metropolis_hastings(surface_log_density(stochastic_field), initial, steps, sigma, rng)
    logger.info(f"Point repair: {n_points} points, acceptance rate {result.acceptance_rate:.3f}")
    return result.states


def transmittance(opacity: np.ndarray) -> np.ndarray:
    """T_i = prod_{j <= i} (1 - p_j)"""
    return np.cumprod(1.0 - np.asarray(opacity, dtype=float))


def sample_free_path(opacity: np.ndarray, rng: np.random.Generator) -> int:
    """
    Index of the step where the ray stops, or -1 when it passes every step.

    Step i is hit with probability T_{i-1} p_i.
    """
    opacity = np.asarray(opacity, dtype=float)
    if opacity.size == 0:
        return -1
    cdf = 1.0 - transmittance(opacity)
    index = int(np.searchsorted(cdf, rng.random(), side="right"))
    return index if index < opacity.size else -1


def ray_box_interval(grid: UniformGrid, origin: np.ndarray, direction: np.ndarray) -> Optional[Tuple[float, float]]:
    """Parametric interval [t0, t1], t0 >= 0, where the ray is inside the grid box"""
    origin = np.asarray(origin, dtype=float)[:grid.dim]
    direction = np.asarray(direction, dtype=float)[:grid.dim]
    with np.errstate(divide="ignore", invalid="ignore"):
        t_lo = (grid.lower - origin) / direction
        t_hi = (grid.upper - origin) / direction
    parallel = direction == 0.0
    outside = parallel & ((origin < grid.lower) | (origin > grid.upper))
    if np.any(outside):
        return None
    near = np.where(parallel, -np.inf, np.minimum(t_lo, t_hi))
    far = np.where(parallel, np.inf, np.maximum(t_lo, t_hi))
    t0, t1 = max(float(near.max()), 0.0), float(far.min())
    return (t0, t1) if t0 <= t1 else None


def _ray_steps(grid: UniformGrid, origin, direction, step: float) -> Tuple[np.ndarray, np.ndarray]:
    interval = ray_box_interval(grid, origin, direction)
    if interval is None:
        return np.zeros(0), np.zeros((0, grid.dim))
    t0, t1 = interval
    t = t0 + step * np.arange(int(np.floor((t1 - t0) / step)) + 1)
    points = np.asarray(origin, dtype=float)[:grid.dim] + t[:, None] * np.asarray(direction, dtype=float)[:grid.dim]
    return t, np.clip(points, grid.lower, grid.upper)


def cast_ray_probabilistic(
    stochastic_field: StochasticField,
    origin: np.ndarray,
    direction: np.ndarray,
    step: Optional[float] = None,
    seed: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> Optional[float]:
    """
    Sample the distance a ray travels before it is stopped by the surface.

    p_inside at each march step acts as its opacity. Steps are `step` apart
    (h / 2 by default), starting where the ray enters the grid box.

    Returns:
        Hit distance along the normalized direction, or None for a miss
    """
    rng = rng if rng is not None else np.random.default_rng(seed)
    hits = cast_rays_probabilistic(stochastic_field, np.atleast_2d(origin), np.atleast_2d(direction), step, rng)
    return None if np.isnan(hits[0]) else float(hits[0])


def cast_rays_probabilistic(
    stochastic_field: StochasticField,
    origins: np.ndarray,
    directions: np.ndarray,
    step: Optional[float] = None,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """Batched free-path sampling; misses are NaN"""
    grid = stochastic_field.grid
    rng = rng if rng is not None else np.random.default_rng(config.DEFAULT_SEED)
    step = step if step is not None else config.RAY_STEP_FRACTION * grid.spacing
    directions = np.asarray(directions, dtype=float)
    directions = directions / np.linalg.norm(directions, axis=1, keepdims=True)

    marches = [_ray_steps(grid, o, d, step) for o, d in zip(np.asarray(origins, dtype=float), directions)]
    counts = [len(t) for t, _ in marches]
    if sum(counts) == 0:
        return np.full(len(marches), np.nan)
    points = np.vstack([p for _, p in marches if len(p)])
    opacity = inside_probability(stochastic_field.interpolate_mean(points), stochastic_field.interpolate_variance(points))
    splits = np.split(opacity, np.cumsum(counts)[:-1])

    distances = np.full(len(marches), np.nan)
    for i, ((t, _), ray_opacity) in enumerate(zip(marches, splits)):
        index = sample_free_path(ray_opacity, rng)
        if index >= 0:
            distances[i] = t[index]
    return distances
