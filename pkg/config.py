"""
Configuration settings for the Stochastic Poisson Surface Reconstruction toolkit
"""
import os
from dataclasses import dataclass
from typing import Optional, Tuple


def _env_float(name: str, default: float) -> float:
    return float(os.getenv(name, default))


def _env_int(name: str, default: int) -> int:
    return int(os.getenv(name, default))


def _env_bool(name: str, default: bool) -> bool:
    return os.getenv(name, str(default)).strip().lower() in ("1", "true", "yes", "on")


# Grid Configuration (normalized unit-cube setup, 100^3 in 3D and 100^2 in 2D)
GRID_RESOLUTION = _env_int("SPSR_RESOLUTION", 100)
GRID_PADDING = _env_float("SPSR_PADDING", 0.1)

# Gaussian Process Configuration
SIGMA_G = _env_float("SPSR_SIGMA_G", 0.02)
SIGMA_N = _env_float("SPSR_SIGMA_N", 0.0)
PRIOR_KIND = os.getenv("SPSR_PRIOR", "zero")
PRIOR_ALPHA = _env_float("SPSR_ALPHA", 0.05)  # relative L2 change of the data-only mean

# Eigenspace reduction
EIGEN_K = _env_int("SPSR_EIGEN_K", 3000)

# Poisson solve
SOLVER_METHOD = os.getenv("SPSR_SOLVER", "cg")  # "cg" or "bicgstab"
SOLVER_RTOL = _env_float("SPSR_SOLVER_RTOL", 1e-10)
SOLVER_MAX_RESIDUAL = _env_float("SPSR_SOLVER_MAX_RESIDUAL", 1e-8)
SOLVER_MAX_ITERATIONS = _env_int("SPSR_SOLVER_MAX_ITERATIONS", 20000)

# Covariance assembly
COVARIANCE_CHUNK_SIZE = _env_int("SPSR_COVARIANCE_CHUNK", 2048)  # samples per projection block
VARIANCE_CHUNK_SIZE = _env_int("SPSR_VARIANCE_CHUNK", 4096)  # grid rows per diagonal block

# Joint queries
JOINT_QUERY_CAP = _env_int("SPSR_JOINT_QUERY_CAP", 512)
JITTER_RELATIVE = 1e-10
JITTER_MAX_RELATIVE = 1e-3
MC_SAMPLES = _env_int("SPSR_MC_SAMPLES", 100000)

# Applications
MH_STEPS = _env_int("SPSR_MH_STEPS", 2000)
MH_BURN_IN_FRACTION = 0.2
CAMERA_REPEATS = _env_int("SPSR_CAMERA_REPEATS", 10)
RAY_STEP_FRACTION = 0.5  # march step in units of h
SCAN_RAYS = _env_int("SPSR_SCAN_RAYS", 1000)

# Reproducibility
DEFAULT_SEED = _env_int("SPSR_SEED", 0)

# Concurrency
THREADS = _env_int("SPSR_THREADS", os.cpu_count() or 1)

# Logging Configuration
LOG_LEVEL = os.getenv("SPSR_LOG_LEVEL", "INFO")
LOG_FILE = os.getenv("SPSR_LOG_FILE", "")
SHOW_PROGRESS = _env_bool("SPSR_SHOW_PROGRESS", False)

# Output format
FIELD_FORMAT_VERSION = 1
LAPLACIAN_SIGN_CONVENTION = "negative-semidefinite: interior diagonal -2d/h^2, off-diagonal +1/h^2"


@dataclass
class RunConfig:
    """Per-run parameters; CLI flags override the module defaults above"""

    resolution: int = GRID_RESOLUTION
    sigma_g: float = SIGMA_G
    sigma_n: float = SIGMA_N
    eigen_k: int = EIGEN_K
    prior: str = PRIOR_KIND
    alpha: float = PRIOR_ALPHA
    prior_center: Optional[Tuple[float, ...]] = None
    flip_sign: bool = False
    seed: int = DEFAULT_SEED
    output_prefix: str = "spsr"
    padding: float = GRID_PADDING
    binary: bool = False
    solver: str = SOLVER_METHOD

    @classmethod
    def from_namespace(cls, args) -> "RunConfig":
        """Build a RunConfig from an argparse namespace, keeping defaults for missing flags"""
        values = {}
        for name in cls.__dataclass_fields__:
            value = getattr(args, name, None)
            if value is not None:
                values[name] = value
        return cls(**values)
