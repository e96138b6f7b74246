"""
Exception hierarchy shared by the numerical core, the agents and the CLI.

Every error carries the process exit code the CLI reports for it.
"""
from typing import Optional


class SPSRError(Exception):
    """Base class for all reconstruction errors"""

    exit_code = 1


class ArgumentError(SPSRError, ValueError):
    """Invalid parameter value (k out of range, unsupported level, cap exceeded)"""

    exit_code = 1


class InputError(SPSRError):
    """Unreadable, empty or malformed input file"""

    exit_code = 2

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        self.path = path
        self.line = line
        location = ""
        if path is not None:
            location = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(f"{location}{message}")


class DomainError(SPSRError, ValueError):
    """Position outside the grid bounding box"""

    exit_code = 2


class NumericalError(SPSRError):
    """Factorization or other numerical failure"""

    exit_code = 3


class SolverError(NumericalError):
    """Krylov solver did not reach the requested residual"""

    def __init__(self, message: str, residual: float, iterations: int):
        self.residual = residual
        self.iterations = iterations
        super().__init__(f"{message} (relative residual {residual:.3e} after {iterations} iterations)")


class SamplingError(NumericalError):
    """Sampler target density vanishes everywhere"""


def failure_result(error: Exception) -> dict:
    """Result dictionary for a failed task; unexpected errors map to exit code 1"""
    exit_code = error.exit_code if isinstance(error, SPSRError) else (2 if isinstance(error, OSError) else 1)
    return {'success': False, 'error': str(error), 'exit_code': exit_code}
