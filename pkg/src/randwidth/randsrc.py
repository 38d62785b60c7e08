"""Seeded randomness and exact samplers.

Every random quantity in the package is drawn from an :class:`RngState`, a
``(seed, stream_path)`` pair that maps deterministically onto a numpy PCG64
bit generator.  Child streams are derived with :meth:`RngState.substream`, so
a computation split into cells gives the same numbers no matter how many
workers execute it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "RngState",
    "IsotropicModel",
    "PerturbationLaw",
    "PointCloud",
    "Perturbation",
    "FAMILIES",
    "LAW_KINDS",
    "make_rng",
    "sample_isotropic",
    "sample_perturbation",
    "stable_variates",
    "generalized_gaussian",
    "factor_variates",
    "uniform_directions",
]

FAMILIES = ("gaussian", "cube", "laplace")
LAW_KINDS = ("gaussian", "sphere", "bp_ball", "p_stable", "fixed")

_U64 = 2**64
_SQRT3 = math.sqrt(3.0)


@dataclass(frozen=True)
class RngState:
    seed: int
    stream_path: tuple = ()

    def __post_init__(self):
        if not 0 <= int(self.seed) < _U64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if any(int(k) < 0 for k in self.stream_path):
            raise ValueError("stream_path entries must be non-negative")
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "stream_path", tuple(int(k) for k in self.stream_path))

    def substream(self, *keys: int) -> "RngState":
        """Child state whose path extends this one by ``keys``."""
        return RngState(self.seed, self.stream_path + tuple(keys))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=self.stream_path)
        return np.random.Generator(np.random.PCG64(ss))


def make_rng(seed: int) -> RngState:
    return RngState(seed)


@dataclass(frozen=True)
class IsotropicModel:
    """Product isotropic log-concave law on R^n.

    ``gaussian`` is N(0, 1) per coordinate, ``cube`` is uniform on
    [-sqrt(3), sqrt(3)] and ``laplace`` has density exp(-sqrt(2)|t|)/sqrt(2).
    All three have mean zero and identity covariance.
    """

    family: str
    n: int

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown isotropic family {self.family!r}; expected one of {FAMILIES}")
        if int(self.n) < 1:
            raise ValueError(f"dimension must be positive, got {self.n}")

    def draw(self, count: int, gen: np.random.Generator) -> np.ndarray:
        shape = (count, self.n)
        if self.family == "gaussian":
            return gen.standard_normal(shape)
        if self.family == "cube":
            return gen.uniform(-_SQRT3, _SQRT3, shape)
        return gen.laplace(0.0, 1.0 / math.sqrt(2.0), shape)


@dataclass(frozen=True)
class PerturbationLaw:
    kind: str
    p: Optional[float] = None
    fixed_vector: Optional[tuple] = None

    def __post_init__(self):
        if self.kind not in LAW_KINDS:
            raise ValueError(f"unknown perturbation law {self.kind!r}; expected one of {LAW_KINDS}")
        if self.kind == "bp_ball":
            if self.p is None or not 1.0 <= self.p <= math.inf:
                raise ValueError(f"bp_ball requires 1 <= p <= inf, got p={self.p}")
        elif self.kind == "p_stable":
            if self.p is None or not 1.0 < self.p < 2.0:
                raise ValueError(f"p_stable requires 1 < p < 2, got p={self.p}")
        elif self.kind == "fixed":
            if self.fixed_vector is None:
                raise ValueError("fixed law requires fixed_vector")
            vec = tuple(float(v) for v in np.ravel(self.fixed_vector))
            if not all(math.isfinite(v) for v in vec):
                raise ValueError("fixed_vector must be finite")
            object.__setattr__(self, "fixed_vector", vec)
        if self.p is not None:
            object.__setattr__(self, "p", float(self.p))

    @classmethod
    def ones(cls, N: int) -> "PerturbationLaw":
        return cls("fixed", fixed_vector=(1.0,) * N)


@dataclass
class PointCloud:
    points: np.ndarray
    model: IsotropicModel
    rng: Optional[RngState] = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        if self.points.ndim != 2 or self.points.shape[0] < 1 or self.points.shape[1] < 1:
            raise ValueError(f"points must be a nonempty N x n array, got shape {self.points.shape}")
        if not np.all(np.isfinite(self.points)):
            raise ValueError("point cloud contains non-finite entries")

    @property
    def N(self) -> int:
        return self.points.shape[0]

    @property
    def n(self) -> int:
        return self.points.shape[1]


@dataclass
class Perturbation:
    values: np.ndarray
    law: PerturbationLaw = field(default_factory=lambda: PerturbationLaw("fixed", fixed_vector=()))

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).ravel()

    @property
    def N(self) -> int:
        return self.values.shape[0]

    def scaled(self, factor: float) -> "Perturbation":
        return Perturbation(self.values * factor, self.law)

    @classmethod
    def of(cls, values: Sequence[float]) -> "Perturbation":
        vals = np.asarray(values, dtype=float).ravel()
        return cls(vals, PerturbationLaw("fixed", fixed_vector=tuple(vals)))


def sample_isotropic(model: IsotropicModel, count: int, rng: RngState) -> PointCloud:
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    return PointCloud(model.draw(count, rng.generator()), model, rng)


def stable_variates(p: float, size, gen: np.random.Generator) -> np.ndarray:
    """Symmetric stable variates with characteristic function exp(-|x|^p).

    Uses the uniform-angle / exponential transform.  Any 0 < p <= 2 is
    accepted here; the perturbation law itself restricts to 1 < p < 2.
    """
    if not 0.0 < p <= 2.0:
        raise ValueError(f"stability index must lie in (0, 2], got {p}")
    v = gen.uniform(-math.pi / 2, math.pi / 2, size)
    w = gen.standard_exponential(size)
    if p == 1.0:
        return np.tan(v)
    return np.sin(p * v) / np.cos(v) ** (1.0 / p) * (np.cos(v - p * v) / w) ** ((1.0 - p) / p)


def generalized_gaussian(p: float, size, gen: np.random.Generator) -> np.ndarray:
    """Variates with density exp(-|t|^p) / (2 Gamma(1 + 1/p))."""
    mag = gen.standard_gamma(1.0 / p, size) ** (1.0 / p)
    sign = np.where(gen.random(size) < 0.5, -1.0, 1.0)
    return sign * mag


def _bp_ball(p: float, N: int, gen: np.random.Generator) -> np.ndarray:
    if math.isinf(p):
        return gen.uniform(-1.0, 1.0, N)
    g = generalized_gaussian(p, N, gen)
    w = gen.standard_exponential()
    return g / (np.sum(np.abs(g) ** p) + w) ** (1.0 / p)


def sample_perturbation(law: PerturbationLaw, N: int, rng: RngState) -> Perturbation:
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    gen = rng.generator()
    if law.kind == "gaussian":
        vals = gen.standard_normal(N)
    elif law.kind == "sphere":
        g = gen.standard_normal(N)
        vals = g / np.linalg.norm(g)
    elif law.kind == "bp_ball":
        vals = _bp_ball(law.p, N, gen)
    elif law.kind == "p_stable":
        vals = stable_variates(law.p, N, gen)
    else:
        if len(law.fixed_vector) != N:
            raise ValueError(f"fixed_vector has length {len(law.fixed_vector)}, expected N={N}")
        vals = np.array(law.fixed_vector, dtype=float)
    return Perturbation(vals, law)


def factor_variates(law: PerturbationLaw, size, gen: np.random.Generator) -> np.ndarray:
    """I.i.d. one-dimensional factors matching a coordinate-independent law.

    gaussian gives N(0, 1), p_stable gives stable variates and bp_ball gives
    the exp(-|t|^p) variables whose normalisation produces the ball law.
    """
    if law.kind == "gaussian":
        return gen.standard_normal(size)
    if law.kind == "p_stable":
        return stable_variates(law.p, size, gen)
    if law.kind == "bp_ball":
        if math.isinf(law.p):
            return gen.uniform(-1.0, 1.0, size)
        return generalized_gaussian(law.p, size, gen)
    raise ValueError(f"law {law.kind!r} has no i.i.d. coordinate factor")


def uniform_directions(n: int, M: int, gen: np.random.Generator) -> np.ndarray:
    """M directions drawn uniformly from the unit sphere in R^n."""
    g = gen.standard_normal((M, n))
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    # a zero Gaussian row has probability zero but would poison the division
    while np.any(norms == 0):
        bad = (norms == 0).ravel()
        g[bad] = gen.standard_normal((int(bad.sum()), n))
        norms = np.linalg.norm(g, axis=1, keepdims=True)
    return g / norms
