"""Desk-scale experiments on perturbed random polytopes.

Each experiment is split into independent cells (an N value, a perturbation
draw, a pair, a trial).  A cell takes its randomness from a substream keyed
only by its own indices, and results are collected in cell order, so reports
do not depend on the worker count.

Unknown absolute constants are always fitted and reported; nothing here
assumes their values.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from .errors import RegimeError, ResolvabilityError
from .polytope import (
    _centroid_from_projections,
    f_estimate,
    f_replicates_multi,
    sample_directions,
    support_many,
)
from .randsrc import (
    IsotropicModel,
    Perturbation,
    PerturbationLaw,
    RngState,
    sample_isotropic,
    sample_perturbation,
    uniform_directions,
)

__all__ = [
    "ScalingReport",
    "TailCurve",
    "LipschitzReport",
    "TailProbe",
    "InclusionReport",
    "LowerBoundReport",
    "BoundEstimate",
    "rate",
    "run_cells",
    "median_of_means",
    "perturbation_for",
    "sweep_rate",
    "stable_threshold",
    "concentration_probe",
    "pair_difference",
    "lipschitz_probe",
    "tail_probe",
    "inclusion_probe",
    "arbitrary_lower_bound",
    "bound_vs_estimate",
    "fit_rate",
]

MOM_BLOCKS = 8
MOM_DISAGREEMENT = 0.2
STABLE_PROBE_RANGE = (1.6, 1.9)


def run_cells(fn: Callable, cells: Sequence, workers: int = 1) -> list:
    """Apply ``fn`` to every cell; output order is cell order."""
    if workers <= 1 or len(cells) <= 1:
        return [fn(c) for c in cells]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, cells))


def rate(law: PerturbationLaw, N: int) -> float:
    """Predicted order of E_y f(y) for the given law (natural logarithms).

    ``fixed`` laws have no prediction and get rate 1.
    """
    L = math.log(N)
    if law.kind == "gaussian":
        return L
    if law.kind == "sphere":
        return L / math.sqrt(N)
    if law.kind == "bp_ball":
        if math.isinf(law.p):
            return math.sqrt(L)
        return L ** (1.0 / law.p + 0.5) / N ** (1.0 / law.p)
    if law.kind == "p_stable":
        return N ** (1.0 / law.p)
    return 1.0


def fit_rate(xs, ys) -> tuple:
    """Least-squares line through (ln x, ln y); returns (slope, intercept)."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ValueError("xs and ys must be 1-d and of equal length")
    if xs.size < 3:
        raise ValueError(f"need at least 3 points, got {xs.size}")
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise ValueError("fit_rate needs strictly positive inputs")
    lx, ly = np.log(xs), np.log(ys)
    dx, dy = lx - lx.mean(), ly - ly.mean()
    slope = float(np.sum(dx * dy) / np.sum(dx * dx))
    return slope, float(ly.mean() - slope * lx.mean())


def median_of_means(values, blocks: int = MOM_BLOCKS) -> float:
    values = np.asarray(values, dtype=float)
    if values.size < blocks:
        return float(np.median(values))
    return float(np.median([b.mean() for b in np.array_split(values, blocks)]))


def perturbation_for(law: PerturbationLaw, N: int, rng: RngState) -> Perturbation:
    """Draw y of length N; a length-1 fixed vector is broadcast to all coordinates."""
    if law.kind == "fixed" and len(law.fixed_vector) == 1 and N != 1:
        return Perturbation(np.full(N, law.fixed_vector[0]), law)
    return sample_perturbation(law, N, rng)


def _check_grid(N_grid: Sequence[int], n: int) -> List[int]:
    grid = [int(N) for N in N_grid]
    if not grid or any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError(f"N grid must be strictly increasing, got {grid}")
    if grid[0] < n:
        raise RegimeError(f"min(N_grid)={grid[0]} is below the dimension n={n}")
    return grid


def _draw_f(law, model, N, R, M, rng, d):
    y = perturbation_for(law, N, rng.substream(0, d))
    return f_estimate(model, N, y, R, M, rng.substream(1, d)).value


@dataclass
class ScalingReport:
    law: PerturbationLaw
    model: IsotropicModel
    n: int
    N_grid: List[int]
    raw: np.ndarray
    std_error: np.ndarray
    rate: np.ndarray
    plain_mean: np.ndarray
    median_of_means: np.ndarray
    draws: np.ndarray = field(repr=False)
    fitted_exponent: float = math.nan
    normalized_exponent: float = math.nan

    @property
    def normalized(self) -> np.ndarray:
        return self.raw / self.rate

    @property
    def dispersion(self) -> float:
        v = self.normalized
        return float(v.max() / v.min())

    @property
    def mom_disagrees(self) -> np.ndarray:
        """Cells where the plain mean and median-of-means differ by more than 20%."""
        return np.abs(self.plain_mean - self.median_of_means) > MOM_DISAGREEMENT * np.abs(self.median_of_means)


def sweep_rate(law: PerturbationLaw, model: IsotropicModel, n: int, N_grid: Sequence[int], R: int, M: int,
               y_draws: int, rng: RngState, workers: int = 1) -> ScalingReport:
    """Estimate E_y f(y) across an N grid and fit its log-log slope.

    Draw d at every N uses substreams (0, d) for y and (1, d) for the clouds,
    so the grid shares common random numbers; with a fixed y this makes the
    estimates exactly nondecreasing in N.  For p-stable laws the reported
    estimate is the median of means over 8 blocks, otherwise the plain mean.
    """
    if n != model.n:
        raise ValueError(f"n={n} does not match model dimension {model.n}")
    if y_draws < 1:
        raise ValueError(f"y_draws must be >= 1, got {y_draws}")
    grid = _check_grid(N_grid, n)
    cells = [(N, d) for N in grid for d in range(y_draws)]
    vals = run_cells(lambda c: _draw_f(law, model, c[0], R, M, rng, c[1]), cells, workers)
    table = np.asarray(vals).reshape(len(grid), y_draws)

    plain = table.mean(axis=1)
    mom = np.array([median_of_means(row) for row in table])
    raw = mom if law.kind == "p_stable" else plain
    se = table.std(axis=1, ddof=1) / math.sqrt(y_draws) if y_draws > 1 else np.zeros(len(grid))
    rates = np.array([rate(law, N) for N in grid])
    rep = ScalingReport(law, model, n, grid, raw, se, rates, plain, mom, table)
    if len(grid) >= 3 and np.all(raw > 0):
        rep.fitted_exponent = fit_rate(grid, raw)[0]
        rep.normalized_exponent = fit_rate(grid, raw / rates)[0]
    return rep


def stable_threshold(p: float) -> float:
    """Lower limit on t^p above which the stable tail bound C t^-p applies."""
    M = 1.0 / (2.0 - p)
    return 4.0 * M * math.log(M) * math.log(1.0 + 2.0 * M * math.log(M))


@dataclass
class TailCurve:
    """Empirical tail P(|f/center - 1| > t) with the fitted bound constant.

    ``scaled_t`` is the deviation in units of sqrt(log N) (the Lipschitz scale
    of f times ``lipschitz``): s = t * center / (lipschitz * sqrt(log N)).
    """

    law: PerturbationLaw
    N: int
    t_grid: np.ndarray
    empirical_tail: np.ndarray
    center: float
    f_values: np.ndarray = field(repr=False)
    scaled_t: np.ndarray = field(repr=False)
    fit_mask: np.ndarray = field(repr=False)
    fitted_c: float = math.nan
    threshold: Optional[float] = None

    @property
    def std_error(self) -> np.ndarray:
        q = self.empirical_tail
        return np.sqrt(q * (1.0 - q) / self.f_values.size)


def _fit_tail(law: PerturbationLaw, N: int, s: np.ndarray, tail: np.ndarray, mask: np.ndarray) -> float:
    """Least-squares constant of the law's tail shape over the masked points."""
    use = mask & (tail > 0) & (tail < 1)
    if not np.any(use):
        return math.nan
    if law.kind == "p_stable":
        # P <= C s^-p  ->  log C = log P + p log s
        return float(np.exp(np.mean(np.log(tail[use]) + law.p * np.log(s[use]))))
    if law.kind == "sphere":
        x = s[use] ** 2 * N
    elif law.kind == "bp_ball" and not math.isinf(law.p):
        x = s[use] ** law.p * N / law.p
    else:
        x = s[use] ** 2
    # P ~ exp(-c x) through the origin in (x, -log P)
    return float(np.sum(x * -np.log(tail[use])) / np.sum(x * x))


def concentration_probe(law: PerturbationLaw, model: IsotropicModel, n: int, N: int, draws: int,
                        t_grid: Sequence[float], R: int, M: int, rng: RngState, workers: int = 1,
                        lipschitz: float = 1.0) -> TailCurve:
    """Empirical relative-deviation tail of f(y) over independent perturbations."""
    if draws < 100:
        raise ValueError(f"draws must be >= 100, got {draws}")
    if N < 2:
        raise ValueError("concentration probe needs N >= 2")
    if n != model.n:
        raise ValueError(f"n={n} does not match model dimension {model.n}")
    t = np.asarray(t_grid, dtype=float)
    if np.any(t <= 0):
        raise ValueError("t grid must be positive")
    if law.kind == "p_stable" and not STABLE_PROBE_RANGE[0] < law.p < STABLE_PROBE_RANGE[1]:
        # the threshold constant blows up as p -> 2 and the tail is too heavy near 1
        raise RegimeError(f"p_stable concentration probes need p in {STABLE_PROBE_RANGE}, got {law.p}")
    f = np.asarray(run_cells(lambda d: _draw_f(law, model, N, R, M, rng, d), list(range(draws)), workers))
    center = float(np.median(f))
    dev = np.abs(f / center - 1.0)
    tail = np.array([np.mean(dev > ti) for ti in t])
    s = t * center / (lipschitz * math.sqrt(math.log(N)))
    threshold = None
    mask = np.ones(t.shape, dtype=bool)
    if law.kind == "p_stable":
        threshold = stable_threshold(law.p)
        mask = s ** law.p >= threshold
    fitted = math.nan if law.kind == "fixed" else _fit_tail(law, N, s, tail, mask)
    return TailCurve(law, N, t, tail, center, f, s, mask, fitted, threshold)


def pair_difference(model: IsotropicModel, N: int, y1, y2, R: int, M: int, rng: RngState) -> tuple:
    """(f_hat(y1) - f_hat(y2), |y1 - y2|) with both estimates on the same clouds."""
    ys = np.vstack([np.asarray(y1, dtype=float).ravel(), np.asarray(y2, dtype=float).ravel()])
    reps = f_replicates_multi(model, N, ys, R, M, rng)
    f1, f2 = reps.mean(axis=1)
    return float(f1 - f2), float(np.linalg.norm(ys[0] - ys[1]))


def _random_pair(N: int, gen: np.random.Generator) -> tuple:
    # y1 spread over the sphere; y2 adds a Gaussian bump on a support whose
    # size is log-uniform in [1, N], so sparse (steep) directions get sampled
    g = gen.standard_normal(N)
    y1 = g / np.linalg.norm(g)
    k = int(min(N, max(1, math.floor(math.exp(gen.random() * math.log(N + 1))))))
    idx = gen.choice(N, size=k, replace=False)
    bump = np.zeros(N)
    bump[idx] = 4.0 * gen.standard_normal(k)
    return y1, y1 + bump


@dataclass
class LipschitzReport:
    N: int
    C_hat: float
    diffs: np.ndarray
    dists: np.ndarray

    @property
    def ratios(self) -> np.ndarray:
        return np.abs(self.diffs) / (self.dists * math.sqrt(math.log(self.N)))


def lipschitz_probe(model: IsotropicModel, n: int, N: int, pairs: int, R: int, M: int, rng: RngState,
                    workers: int = 1) -> LipschitzReport:
    """max over random pairs of |f(y1) - f(y2)| / (|y1 - y2| sqrt(log N)).

    Pair k draws (y1, y2) from substream (0, k) and its clouds from (1, k).
    """
    if pairs < 10:
        raise ValueError(f"pairs must be >= 10, got {pairs}")
    if N < 2:
        raise ValueError("lipschitz probe needs N >= 2")
    if n != model.n:
        raise ValueError(f"n={n} does not match model dimension {model.n}")

    def cell(k):
        y1, y2 = _random_pair(N, rng.substream(0, k).generator())
        return pair_difference(model, N, y1, y2, R, M, rng.substream(1, k))

    out = np.asarray(run_cells(cell, list(range(pairs)), workers))
    rep = LipschitzReport(N, math.nan, out[:, 0], out[:, 1])
    rep.C_hat = float(rep.ratios.max())
    return rep


@dataclass
class TailProbe:
    N: int
    alpha: float
    theta: np.ndarray
    empirical: float
    reference: float
    samples: int

    @property
    def ratio(self) -> float:
        return self.empirical / self.reference

    @property
    def std_error(self) -> float:
        q = self.empirical
        return math.sqrt(q * (1.0 - q) / self.samples)

    @property
    def level(self) -> float:
        return self.alpha * math.sqrt(math.log(self.N))


def tail_probe(model: IsotropicModel, n: int, N: int, alpha: float, samples: int, rng: RngState) -> TailProbe:
    """Marginal tail P(|<X, theta>| >= alpha sqrt(log N)) in a uniform direction.

    The reference is 1 / (N^(alpha^2/2) sqrt(log N)), the lower-bound shape
    with its constant set to 1.
    """
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    if N < 2:
        raise ValueError("tail probe needs N >= 2")
    if n != model.n:
        raise ValueError(f"n={n} does not match model dimension {model.n}")
    theta = uniform_directions(n, 1, rng.substream(0).generator())[0]
    proj = np.abs(sample_isotropic(model, samples, rng.substream(1)).points @ theta)
    L = math.log(N)
    hits = int(np.count_nonzero(proj >= alpha * math.sqrt(L)))
    if hits < 10:
        raise ResolvabilityError(
            f"only {hits} of {samples} samples exceed alpha*sqrt(log N)={alpha * math.sqrt(L):.4g}; "
            "increase samples or decrease alpha")
    reference = 1.0 / (N ** (alpha ** 2 / 2.0) * math.sqrt(L))
    return TailProbe(N, alpha, theta, hits / samples, reference, samples)


@dataclass
class InclusionReport:
    N: int
    c_hat: float
    per_trial: np.ndarray


def inclusion_probe(model: IsotropicModel, n: int, N: int, trials: int, M: int, samples: int, rng: RngState,
                    scale: float = 1.0, workers: int = 1) -> InclusionReport:
    """Fitted constant c in K_{N,G} >= c sqrt(log N) Z_{log N}(X).

    Per trial: min over M directions of h_{K_{N,G}}(theta) divided by
    sqrt(log N) times the plug-in support of Z_{log N}; ``scale`` multiplies
    the Gaussian perturbation.
    """
    if N <= n * n:
        raise RegimeError(f"inclusion needs N > n^2 (N={N}, n^2={n * n})")
    if n != model.n:
        raise ValueError(f"n={n} does not match model dimension {model.n}")
    if trials < 1 or M < 1 or samples < 100:
        raise ValueError("need trials >= 1, M >= 1 and samples >= 100")
    L = math.log(N)

    def cell(k):
        sub = rng.substream(k)
        X = sample_isotropic(model, N, sub.substream(0)).points
        G = scale * sub.substream(1).generator().standard_normal(N)
        thetas = sample_directions(n, M, sub.substream(2)).directions
        Xs = model.draw(samples, sub.substream(3).generator())
        h_z = _centroid_from_projections(Xs @ thetas.T, L)
        return float(np.min(support_many(X, G, thetas) / (math.sqrt(L) * h_z)))

    per = np.asarray(run_cells(cell, list(range(trials)), workers))
    return InclusionReport(N, float(per.min()), per)


@dataclass
class LowerBoundReport:
    y_sorted: np.ndarray
    n: int
    c1: float
    c2: float
    harmonic_term: np.ndarray
    admissibility: np.ndarray
    I_y: List[int]
    k_star: Optional[int]
    sup_term: float
    strict: bool = False

    @property
    def bound_value(self) -> float:
        return self.c2 * self.sup_term


def arbitrary_lower_bound(y, n: int, c1: float = 0.5, c2: float = 1.0, strict: bool = False) -> LowerBoundReport:
    """Lower bound c2 * sup_{k in I(y)} sqrt(log(k+1)) / H_k for E w(K_{N,y}).

    H_k = sqrt((1/k) sum_{i<=k} 1/|y*_i|^2) over the decreasing rearrangement
    y*, and k is admissible when 1 / (|y*_k| H_k) <= n^c1 (with ``strict``,
    also |y*_1| / |y*_k| <= n^c1).  Only k <= n is considered.
    """
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    if c1 <= 0 or c2 <= 0:
        raise ValueError("c1 and c2 must be positive")
    ys = np.sort(np.abs(np.asarray(y, dtype=float).ravel()))[::-1]
    if ys.size == 0 or ys[0] == 0:
        raise ValueError("arbitrary_lower_bound needs a nonzero y")
    K = min(n, ys.size)
    head = ys[:K]
    with np.errstate(divide="ignore"):
        inv_sq = np.where(head > 0, 1.0 / head ** 2, np.inf)
    H = np.sqrt(np.cumsum(inv_sq) / np.arange(1, K + 1))
    with np.errstate(divide="ignore", invalid="ignore"):
        adm = np.where(head > 0, 1.0 / (head * H), np.inf)
    limit = float(n) ** c1
    ok = adm <= limit
    if strict:
        with np.errstate(divide="ignore"):
            ok &= np.where(head > 0, ys[0] / head, np.inf) <= limit
    ks = np.arange(1, K + 1)
    terms = np.sqrt(np.log(ks + 1.0)) / H
    I_y = [int(k) for k in ks[ok]]
    if I_y:
        j = int(np.argmax(np.where(ok, terms, -np.inf)))
        k_star, sup = j + 1, float(terms[j])
    else:
        k_star, sup = None, 0.0
    return LowerBoundReport(ys, n, c1, c2, H, adm, I_y, k_star, sup, strict)


@dataclass
class BoundEstimate:
    N: int
    f_hat: float
    std_error: float
    report: LowerBoundReport

    @property
    def sup_term(self) -> float:
        return self.report.sup_term

    @property
    def fitted_c2(self) -> float:
        return self.f_hat / self.sup_term if self.sup_term > 0 else math.nan


def bound_vs_estimate(model: IsotropicModel, y, n: int, N: int, c1: float, R: int, M: int, rng: RngState,
                      c2: float = 1.0, strict: bool = False) -> BoundEstimate:
    """f_hat(y) next to the supremum term; their quotient is the fitted c2."""
    yv = np.asarray(y.values if isinstance(y, Perturbation) else y, dtype=float).ravel()
    if yv.size != N:
        raise ValueError(f"y has length {yv.size}, expected N={N}")
    if n != model.n:
        raise ValueError(f"n={n} does not match model dimension {model.n}")
    report = arbitrary_lower_bound(yv, n, c1, c2, strict)
    est = f_estimate(model, N, yv, R, M, rng)
    return BoundEstimate(N, est.value, est.std_error, report)
