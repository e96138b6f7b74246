"""
Scan simulation against a triangle mesh and next-view camera scoring.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union
import sys

import numpy as np
import trimesh
from loguru import logger
from tqdm import tqdm

sys.path.append(str(Path(__file__).parent.parent))

import config
from config import RunConfig
from .covariance import OrientedPointCloud
from .errors import ArgumentError
from .grid import UniformGrid
from .poisson import StochasticField
from .priors import MeanPrior
from .queries import total_uncertainty
from .reconstruction import reconstruct
from .sampling import cast_ray_probabilistic

_PARALLEL_EPS = 1e-12


@dataclass(eq=False)
class Camera:
    """
    Viewpoint emitting rays uniformly in a cone.

    In 3D the cone is a spherical cap, in 2D an angular interval.

    Attributes:
        position: Camera centre (length 2 or 3)
        direction: Cone axis, normalized on construction
        half_angle: Cone half-angle in radians, in (0, pi/2)
        sigma_p: Standard deviation of the position noise of scanned points
        sigma_normal: Standard deviation of the normal noise of scanned points
    """

    position: np.ndarray
    direction: np.ndarray
    half_angle: float
    sigma_p: float = 0.0
    sigma_normal: float = 0.0

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        direction = np.asarray(self.direction, dtype=float)
        if self.position.shape != direction.shape or self.position.size not in (2, 3):
            raise ArgumentError(f"camera position {self.position} and direction {direction} must both be 2D or 3D")
        length = np.linalg.norm(direction)
        if length == 0.0:
            raise ArgumentError("camera direction must be nonzero")
        self.direction = direction / length
        if not 0.0 < self.half_angle < np.pi / 2:
            raise ArgumentError(f"camera half-angle must lie in (0, pi/2), got {self.half_angle}")
        if self.sigma_p < 0 or self.sigma_normal < 0:
            raise ArgumentError("camera noise levels must be nonnegative")

    @property
    def dim(self) -> int:
        return self.position.size

    def sample_directions(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """n unit directions uniform in the cone, shape (n, dim)"""
        if self.dim == 2:
            angle = rng.uniform(-self.half_angle, self.half_angle, size=n)
            c, s = np.cos(angle), np.sin(angle)
            dx, dy = self.direction
            return np.stack([c * dx - s * dy, s * dx + c * dy], axis=1)

        cos_theta = 1.0 - rng.random(n) * (1.0 - np.cos(self.half_angle))
        sin_theta = np.sqrt(np.maximum(1.0 - cos_theta ** 2, 0.0))
        phi = 2.0 * np.pi * rng.random(n)
        helper = np.array([1.0, 0.0, 0.0]) if abs(self.direction[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        e1 = np.cross(self.direction, helper)
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(self.direction, e1)
        return (
            cos_theta[:, None] * self.direction
            + (sin_theta * np.cos(phi))[:, None] * e1
            + (sin_theta * np.sin(phi))[:, None] * e2
        )


@dataclass(eq=False)
class CameraScore:
    """Mean |Delta U| over repeats; misses contribute 0"""

    score: float
    repeats: int
    values: List[float] = field(default_factory=list)
    signed_deltas: List[float] = field(default_factory=list)
    misses: int = 0


def ray_mesh_intersections(
    origins: np.ndarray,
    directions: np.ndarray,
    triangles: np.ndarray,
    chunk_size: int = 2_000_000,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Nearest ray/triangle hits by vectorized Moller-Trumbore over every triangle.

    Args:
        origins: (n, 3) ray origins
        directions: (n, 3) unit directions
        triangles: (f, 3, 3) triangle corners

    Returns:
        (t, face) per ray; t is inf and face -1 for a miss
    """
    n = origins.shape[0]
    best_t = np.full(n, np.inf)
    best_face = np.full(n, -1, dtype=np.int64)
    v0 = triangles[:, 0]
    edge1 = triangles[:, 1] - v0
    edge2 = triangles[:, 2] - v0
    rays_per_chunk = max(1, chunk_size // max(len(triangles), 1))

    for start in range(0, n, rays_per_chunk):
        stop = min(start + rays_per_chunk, n)
        d = directions[start:stop, None, :]
        pvec = np.cross(d, edge2[None])
        det = np.sum(pvec * edge1[None], axis=2)
        valid = np.abs(det) > _PARALLEL_EPS
        inv_det = np.where(valid, 1.0 / np.where(valid, det, 1.0), 0.0)
        tvec = origins[start:stop, None, :] - v0[None]
        u = np.sum(tvec * pvec, axis=2) * inv_det
        qvec = np.cross(tvec, edge1[None])
        v = np.sum(d * qvec, axis=2) * inv_det
        t = np.sum(qvec * edge2[None], axis=2) * inv_det
        hit = valid & (u >= 0.0) & (v >= 0.0) & (u + v <= 1.0) & (t > _PARALLEL_EPS)
        t = np.where(hit, t, np.inf)
        face = np.argmin(t, axis=1)
        best_t[start:stop] = t[np.arange(stop - start), face]
        best_face[start:stop] = np.where(np.isfinite(best_t[start:stop]), face, -1)
    return best_t, best_face


def simulate_scan(
    mesh: trimesh.Trimesh,
    camera: Camera,
    n_rays: int = config.SCAN_RAYS,
    seed: Union[int, Sequence[int]] = config.DEFAULT_SEED,
) -> OrientedPointCloud:
    """
    Scan a triangle mesh from a camera.

    Each ray keeps its nearest hit; the geometric normal is flipped to face the
    camera, then Gaussian noise is added to positions and normals. Misses are dropped.

    Args:
        mesh: Triangle mesh, open or closed
        camera: 3D camera
        n_rays: Rays cast uniformly in the camera cone
        seed: RNG seed or seed sequence

    Returns:
        OrientedPointCloud, possibly empty
    """
    if camera.dim != 3:
        raise ArgumentError("scan simulation needs a 3D camera")
    if n_rays < 1:
        raise ArgumentError(f"n_rays must be at least 1, got {n_rays}")
    rng = np.random.default_rng(seed)
    directions = camera.sample_directions(n_rays, rng)
    origins = np.broadcast_to(camera.position, directions.shape)
    t, face = ray_mesh_intersections(origins, directions, np.asarray(mesh.triangles))

    hit = face >= 0
    if not np.any(hit):
        logger.warning(f"None of the {n_rays} scan rays hit the mesh")
        return OrientedPointCloud.empty(3, camera.sigma_normal)

    positions = origins[hit] + t[hit, None] * directions[hit]
    normals = np.asarray(mesh.face_normals)[face[hit]].copy()
    facing_away = np.sum(normals * directions[hit], axis=1) > 0.0
    normals[facing_away] *= -1.0

    positions = positions + camera.sigma_p * rng.standard_normal(positions.shape)
    normals = normals + camera.sigma_normal * rng.standard_normal(normals.shape)
    logger.info(f"Simulated scan: {int(hit.sum())} of {n_rays} rays hit the mesh")
    return OrientedPointCloud(positions, normals, camera.sigma_normal)


def _score_repeat(
    cloud: OrientedPointCloud,
    stochastic_field: StochasticField,
    camera: Camera,
    base_uncertainty: float,
    rng: np.random.Generator,
    run: RunConfig,
    prior: Optional[MeanPrior],
    box,
) -> Optional[float]:
    """Signed U(P) - U(P + p) for one simulated hit, None on a miss"""
    grid = stochastic_field.grid
    direction = camera.sample_directions(1, rng)[0]
    distance = cast_ray_probabilistic(stochastic_field, camera.position, direction, rng=rng)
    if distance is None:
        return None
    margin = 1e-6 * grid.spacing
    point = np.clip(camera.position + distance * direction, grid.lower + margin, grid.upper - margin)

    normal = stochastic_field.mean_gradient(point)[0]
    length = np.linalg.norm(normal)
    normal = normal / length if length > 0.0 else -direction
    if stochastic_field.flip_sign:
        normal = -normal

    extended = cloud.union(OrientedPointCloud(point[None], normal[None], cloud.noise_sigma))
    updated = reconstruct(extended, run, grid=grid, prior=prior)
    return base_uncertainty - total_uncertainty(updated, box)


def camera_score(
    cloud: OrientedPointCloud,
    stochastic_field: StochasticField,
    camera: Camera,
    repeats: int = config.CAMERA_REPEATS,
    seed: int = config.DEFAULT_SEED,
    run: Optional[RunConfig] = None,
    prior: Optional[MeanPrior] = None,
    camera_index: int = 0,
    box=None,
    threads: Optional[int] = None,
) -> CameraScore:
    """
    Expected change in total uncertainty from one more scan point seen by `camera`.

    Each repeat samples a probabilistic hit, takes the normalized gradient of the
    mean field there as its normal, rebuilds the field on P + p and records
    |U(P) - U(P + p)|. Repeat r uses the RNG stream (seed, camera_index, r).

    Args:
        cloud: Cloud the field was built from
        stochastic_field: Current field
        camera: Candidate camera
        repeats: Number of simulated hits
        run: Settings for the rebuild; must match the ones used for the field
        prior: Mean prior for the rebuild
        box: Region for U, the whole grid by default

    Returns:
        CameraScore
    """
    if repeats < 1:
        raise ArgumentError(f"repeats must be at least 1, got {repeats}")
    if camera.dim != stochastic_field.grid.dim:
        raise ArgumentError(f"{camera.dim}D camera cannot score a {stochastic_field.grid.dim}D field")
    run = run or RunConfig()
    base = total_uncertainty(stochastic_field, box)
    rngs = [np.random.default_rng([seed, camera_index, r]) for r in range(repeats)]

    def _run(rng):
        return _score_repeat(cloud, stochastic_field, camera, base, rng, run, prior, box)

    workers = max(1, min(threads or config.THREADS, repeats))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        outcomes = list(tqdm(pool.map(_run, rngs), total=repeats, desc=f"camera {camera_index}",
                             disable=not config.SHOW_PROGRESS))

    signed = [0.0 if o is None else float(o) for o in outcomes]
    misses = sum(o is None for o in outcomes)
    if misses == repeats:
        logger.warning(f"Camera {camera_index}: all {repeats} rays missed; score is 0")
    values = [abs(s) for s in signed]
    score = float(np.mean(values))
    logger.info(f"Camera {camera_index}: score {score:.6g} over {repeats} repeats ({misses} misses)")
    return CameraScore(score=score, repeats=repeats, values=values, signed_deltas=signed, misses=misses)


@dataclass(eq=False)
class ScanSession:
    """
    Outcome of scanning until the total uncertainty drops below a threshold.

    Attributes:
        cloud: Merged cloud of every scan
        stochastic_field: Reconstruction of `cloud`, None while no scan has hit the mesh
        camera_order: Camera indices in the order they were used
        uncertainties: Total uncertainty after each scan, inf before the first hit
        converged: The last uncertainty is at or below the threshold
    """

    cloud: OrientedPointCloud
    stochastic_field: Optional[StochasticField]
    camera_order: List[int] = field(default_factory=list)
    uncertainties: List[float] = field(default_factory=list)
    converged: bool = False


def _next_camera(
    remaining: List[int],
    cameras: Sequence[Camera],
    cloud: OrientedPointCloud,
    stochastic_field: Optional[StochasticField],
    choose_next: bool,
    repeats: int,
    seed: int,
    run: RunConfig,
    box,
    threads: Optional[int],
) -> int:
    if stochastic_field is None or not choose_next or len(remaining) == 1:
        return remaining[0]
    scores = [
        camera_score(cloud, stochastic_field, cameras[i], repeats, seed, run=run, camera_index=i, box=box,
                     threads=threads).score
        for i in remaining
    ]
    return remaining[int(np.argmax(scores))]


def scan_until_uncertainty(
    mesh: trimesh.Trimesh,
    cameras: Sequence[Camera],
    threshold: float,
    run: Optional[RunConfig] = None,
    grid: Optional[UniformGrid] = None,
    n_rays: int = config.SCAN_RAYS,
    seed: int = config.DEFAULT_SEED,
    repeats: int = config.CAMERA_REPEATS,
    choose_next: bool = True,
    max_scans: Optional[int] = None,
    box=None,
    threads: Optional[int] = None,
) -> ScanSession:
    """
    Scan a mesh one camera at a time until the total uncertainty reaches `threshold`.

    The first scan uses the first camera. Later scans use the unused camera with
    the highest `camera_score`, or the next one in list order when `choose_next`
    is False. Every camera is used at most once and camera i draws its rays from
    the RNG stream (seed, i), as in a plain multi-camera scan.

    Args:
        mesh: Ground-truth mesh
        cameras: Candidate 3D cameras
        threshold: Stop once U is at or below this value
        run: Reconstruction settings for every rebuild
        grid: Fixed grid, fitted around the mesh when omitted
        max_scans: Upper bound on the number of scans, all cameras by default
        box: Region for U, the whole grid by default

    Returns:
        ScanSession
    """
    if len(cameras) == 0:
        raise ArgumentError("scanning needs at least one camera")
    if threshold < 0.0:
        raise ArgumentError(f"uncertainty threshold must be nonnegative, got {threshold}")
    run = run or RunConfig()
    grid = grid or UniformGrid.fit(np.asarray(mesh.vertices), run.resolution, run.padding)
    limit = len(cameras) if max_scans is None else min(max_scans, len(cameras))

    session = ScanSession(OrientedPointCloud.empty(3, max((c.sigma_normal for c in cameras), default=0.0)), None)
    remaining = list(range(len(cameras)))
    uncertainty = np.inf
    while remaining and len(session.camera_order) < limit and uncertainty > threshold:
        index = _next_camera(remaining, cameras, session.cloud, session.stochastic_field, choose_next,
                             repeats, seed, run, box, threads)
        remaining.remove(index)
        scan = simulate_scan(mesh, cameras[index], n_rays, seed=[seed, index])
        inside = grid.contains(scan.positions, strict=True)
        if not np.all(inside):
            logger.warning(f"Camera {index}: dropping {int(np.count_nonzero(~inside))} scan point(s) outside the grid")
            scan = scan.subset(inside)
        session.cloud = session.cloud.union(scan)
        session.camera_order.append(index)
        if len(session.cloud):
            session.stochastic_field = reconstruct(session.cloud, run, grid=grid)
            uncertainty = total_uncertainty(session.stochastic_field, box)
        session.uncertainties.append(float(uncertainty))
        logger.info(f"Scan {len(session.camera_order)} (camera {index}): {len(session.cloud)} points, U={uncertainty:.6g}")

    session.converged = bool(uncertainty <= threshold)
    if not session.converged:
        logger.warning(f"Stopped after {len(session.camera_order)} scans with U={uncertainty:.6g} above {threshold:g}")
    return session
