"""Support functions and Monte Carlo mean width of perturbed random polytopes.

For a cloud X_1..X_N and weights y the perturbed hull
conv{+-y_1 X_1, ..., +-y_N X_N} has support function
max_i |y_i <X_i, theta>|, which is all we ever need: no facet enumeration.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .randsrc import (
    IsotropicModel,
    Perturbation,
    PointCloud,
    RngState,
    sample_isotropic,
    uniform_directions,
)

__all__ = [
    "DirectionSet",
    "WidthEstimate",
    "support",
    "support_many",
    "sample_directions",
    "mean_width_mc",
    "f_estimate",
    "f_replicates",
    "f_replicates_multi",
    "centroid_support",
    "centroid_mean_width",
    "DEFAULT_M",
    "DEFAULT_R",
]

DEFAULT_M = 1024
DEFAULT_R = 64


@dataclass
class DirectionSet:
    directions: np.ndarray
    rng: Optional[RngState] = None

    def __post_init__(self):
        self.directions = np.atleast_2d(np.asarray(self.directions, dtype=float))
        norms = np.linalg.norm(self.directions, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-12):
            raise ValueError("direction rows must be unit vectors")

    @property
    def n(self) -> int:
        return self.directions.shape[1]

    @property
    def M(self) -> int:
        return self.directions.shape[0]


@dataclass
class WidthEstimate:
    value: float
    std_error: float
    M: int
    R: int = 1
    rng: Optional[RngState] = None


def sample_directions(n: int, M: int, rng: RngState) -> DirectionSet:
    return DirectionSet(uniform_directions(n, M, rng.generator()), rng)


def _values(y) -> np.ndarray:
    if isinstance(y, Perturbation):
        return y.values
    return np.asarray(y, dtype=float).ravel()


def support_many(points: np.ndarray, y: np.ndarray, thetas: np.ndarray) -> np.ndarray:
    """Support values max_i |y_i <X_i, theta>| for every row of ``thetas``."""
    if points.shape[0] != y.shape[0]:
        raise ValueError(f"cloud has {points.shape[0]} points but y has length {y.shape[0]}")
    if points.shape[1] != thetas.shape[1]:
        raise ValueError(f"cloud dimension {points.shape[1]} does not match direction dimension {thetas.shape[1]}")
    proj = points @ thetas.T
    return np.max(np.abs(y[:, None] * proj), axis=0)


def support(cloud: PointCloud, y, theta) -> float:
    theta = np.asarray(theta, dtype=float).ravel()
    if abs(np.linalg.norm(theta) - 1.0) > 1e-9:
        raise ValueError("theta must be a unit vector")
    return float(support_many(cloud.points, _values(y), theta[None, :])[0])


def mean_width_mc(cloud: PointCloud, y, M: int, rng: RngState) -> WidthEstimate:
    """Average of the support function over M uniform directions."""
    if M < 2:
        raise ValueError(f"M must be >= 2, got {M}")
    thetas = sample_directions(cloud.n, M, rng).directions
    h = support_many(cloud.points, _values(y), thetas)
    return WidthEstimate(float(h.mean()), float(h.std(ddof=1) / math.sqrt(M)), M, 1, rng)


def f_replicates(model: IsotropicModel, N: int, y, R: int, M: int, rng: RngState) -> np.ndarray:
    """Per-replicate mean widths; replicate r uses substreams (r, 0) and (r, 1).

    Clouds for different N share a prefix (the draws are sequential), so with a
    common ``rng`` the hull at a smaller N is contained in the hull at a larger
    one and the directions coincide.
    """
    return f_replicates_multi(model, N, _values(y)[None, :], R, M, rng)[0]


def f_replicates_multi(model: IsotropicModel, N: int, ys: np.ndarray, R: int, M: int,
                       rng: RngState) -> np.ndarray:
    """Replicate mean widths for several weight vectors on shared clouds and directions.

    Returns an array of shape (len(ys), R).
    """
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    if ys.shape[1] != N:
        raise ValueError(f"y has length {ys.shape[1]}, expected N={N}")
    out = np.empty((ys.shape[0], R))
    for r in range(R):
        X = sample_isotropic(model, N, rng.substream(r, 0)).points
        thetas = sample_directions(model.n, M, rng.substream(r, 1)).directions
        proj = np.abs(X @ thetas.T)
        for k, yv in enumerate(ys):
            out[k, r] = np.max(np.abs(yv)[:, None] * proj, axis=0).mean()
    return out


def f_estimate(model: IsotropicModel, N: int, y, R: int, M: int, rng: RngState) -> WidthEstimate:
    """Nested estimate of E_X w(K_{N,y}) over R independent clouds."""
    if R < 2 or M < 2:
        raise ValueError(f"need R >= 2 and M >= 2, got R={R}, M={M}")
    yv = _values(y)
    if not np.any(yv):
        return WidthEstimate(0.0, 0.0, M, R, rng)
    vals = f_replicates(model, N, yv, R, M, rng)
    return WidthEstimate(float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(R)), M, R, rng)


def _centroid_from_projections(proj: np.ndarray, p: float) -> np.ndarray:
    a = np.abs(proj)
    # rescale by the column max so large p cannot overflow
    scale = a.max(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    return scale * np.mean((a / scale) ** p, axis=0) ** (1.0 / p)


def centroid_support(model: IsotropicModel, p: float, theta, samples: int, rng: RngState) -> float:
    """Plug-in estimate of (E|<X, theta>|^p)^(1/p)."""
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    if samples < 100:
        raise ValueError(f"samples must be >= 100, got {samples}")
    theta = np.asarray(theta, dtype=float).ravel()
    if theta.shape[0] != model.n:
        raise ValueError(f"theta has dimension {theta.shape[0]}, model has {model.n}")
    X = model.draw(samples, rng.generator())
    return float(_centroid_from_projections((X @ theta)[:, None], p)[0])


def centroid_mean_width(model: IsotropicModel, p: float, n: int, M: int, samples: int, rng: RngState) -> WidthEstimate:
    """Sphere average of the centroid-body support function.

    One sample of ``samples`` points (substream 0) is shared by all M
    directions (substream 1), so estimates at different p are coupled.
    """
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    if samples < 100:
        raise ValueError(f"samples must be >= 100, got {samples}")
    if M < 2:
        raise ValueError(f"M must be >= 2, got {M}")
    if n != model.n:
        raise ValueError(f"n={n} does not match model dimension {model.n}")
    X = model.draw(samples, rng.substream(0).generator())
    thetas = sample_directions(n, M, rng.substream(1)).directions
    h = _centroid_from_projections(X @ thetas.T, p)
    return WidthEstimate(float(h.mean()), float(h.std(ddof=1) / math.sqrt(M)), M, 1, rng)
