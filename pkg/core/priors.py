"""
Primitive geometric mean priors for the vector-field Gaussian process
"""
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence
import sys

import numpy as np
from loguru import logger

sys.path.append(str(Path(__file__).parent.parent))

import config
from .errors import ArgumentError

PRIOR_KINDS = ("zero", "sphere", "ellipsoid")


@dataclass(eq=False)
class MeanPrior:
    """
    Prior mean m(x) of the normal field.

    Attributes:
        kind: "zero", "sphere" or "ellipsoid"
        center: Prior centre c
        alpha: Magnitude of m away from the centre
        axes: Symmetric positive scaling A (ellipsoid only)
    """

    kind: str = "zero"
    center: Optional[np.ndarray] = None
    alpha: float = config.PRIOR_ALPHA
    axes: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in PRIOR_KINDS:
            raise ArgumentError(f"unknown prior '{self.kind}', expected one of {', '.join(PRIOR_KINDS)}")
        if self.kind != "zero" and self.center is None:
            raise ArgumentError(f"{self.kind} prior needs a centre")
        if self.center is not None:
            self.center = np.asarray(self.center, dtype=float)
        if self.axes is not None:
            self.axes = np.asarray(self.axes, dtype=float)

    @classmethod
    def from_spec(
        cls,
        kind: str,
        positions: np.ndarray,
        alpha: float = config.PRIOR_ALPHA,
        center: Optional[Sequence[float]] = None,
    ) -> "MeanPrior":
        """
        Build a prior from CLI-style settings.

        Args:
            kind: Prior kind
            positions: (n, dim) cloud positions, used for the default centre and the ellipsoid fit
            alpha: Prior strength
            center: Explicit centre, defaults to the centroid of the positions

        Returns:
            MeanPrior
        """
        positions = np.atleast_2d(np.asarray(positions, dtype=float))
        if kind == "zero":
            return cls("zero", alpha=alpha)
        if center is None:
            if positions.shape[0] == 0:
                raise ArgumentError(f"{kind} prior needs a centre or at least one sample")
            center = positions.mean(axis=0)
        center = np.asarray(center, dtype=float)[:positions.shape[1]]
        axes = fit_ellipsoid_axes(positions) if kind == "ellipsoid" else None
        prior = cls(kind, center=center, alpha=alpha, axes=axes)
        logger.info(f"Mean prior: {kind}, alpha={alpha}, center={np.round(center, 6).tolist()}")
        return prior

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """m at each row of `points`, shape (m, dim); zero at the centre itself"""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if self.kind == "zero":
            return np.zeros_like(points)
        offset = points - self.center[:points.shape[1]]
        if self.kind == "ellipsoid" and self.axes is not None:
            offset = offset @ self.axes[:points.shape[1], :points.shape[1]].T
        norm = np.linalg.norm(offset, axis=1, keepdims=True)
        safe = np.where(norm > 0.0, norm, 1.0)
        return np.where(norm > 0.0, self.alpha * offset / safe, 0.0)


def eval_prior(prior: MeanPrior, x) -> np.ndarray:
    """Prior mean at a single position or an array of positions"""
    x = np.asarray(x, dtype=float)
    values = prior.evaluate(x)
    return values[0] if x.ndim == 1 else values


def fit_ellipsoid_axes(positions: np.ndarray) -> np.ndarray:
    """
    Principal-axis scaling A = R diag(s) R^T from the covariance of the positions.

    s holds the inverse principal extents normalized so the largest entry is 1.
    Too few points or a flat cloud fall back to the identity (a sphere).
    """
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    n, dim = positions.shape
    if n < dim + 1:
        logger.warning(f"Ellipsoid fit needs at least {dim + 1} points, got {n}; using a sphere")
        return np.eye(dim)
    eigenvalues, rotation = np.linalg.eigh(np.cov(positions.T))
    if eigenvalues[0] <= 1e-12 * max(eigenvalues[-1], np.finfo(float).tiny):
        logger.warning("Ellipsoid fit is degenerate (points are coplanar); using a sphere")
        return np.eye(dim)
    extents = np.sqrt(eigenvalues)
    scale = extents.min() / extents
    return rotation @ np.diag(scale) @ rotation.T
