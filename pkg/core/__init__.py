"""
Stochastic Poisson Surface Reconstruction - numerical core

Modules:
- grid: uniform grid, smoothing kernel, interpolation and finite-difference operators
- covariance: oriented point clouds, semicovariance, lumping, node/sample covariance
- gp_field: posterior of the interpolated normal field
- poisson: mean solve, eigenbasis and reduced covariance
- queries: probabilities, intervals, total uncertainty, collisions, level sets
- priors: geometric mean priors
- sampling / scanning: point repair, free-path rays, scan simulation, camera scores
"""

from .covariance import OrientedPointCloud, k_psr, k_spsr, lumped_covariance, build_K2
from .errors import (
    ArgumentError,
    DomainError,
    InputError,
    NumericalError,
    SamplingError,
    SolverError,
    SPSRError,
)
from .grid import UniformGrid, Kernel
from .poisson import EigenBasis, StochasticField, build_eigenbasis
from .priors import MeanPrior
from .reconstruction import reconstruct

__all__ = [
    'OrientedPointCloud',
    'UniformGrid',
    'Kernel',
    'EigenBasis',
    'StochasticField',
    'MeanPrior',
    'reconstruct',
    'build_eigenbasis',
    'k_psr',
    'k_spsr',
    'lumped_covariance',
    'build_K2',
    'SPSRError',
    'ArgumentError',
    'InputError',
    'DomainError',
    'NumericalError',
    'SolverError',
    'SamplingError',
]
