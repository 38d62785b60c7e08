"""Orlicz functions, the Luxemburg norm, and the E max ~ Orlicz norm check.

For i.i.d. scalars a with finite first moment, the function

    M(s) = int_0^s E[|a| ; |a| >= 1/t] dt

controls E max_i |x_i a_i| up to absolute constants through the Luxemburg
norm ||x||_M = inf{rho > 0 : sum_i M(|x_i| / rho) <= 1}.  Replacing the law
of a by a sample a_1..a_m gives the exact piecewise-linear plug-in

    M_hat(s) = (1/m) sum_j |a_j| max(0, s - 1/|a_j|).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .randsrc import (
    IsotropicModel,
    Perturbation,
    PerturbationLaw,
    RngState,
    factor_variates,
    sample_isotropic,
)

__all__ = [
    "OrliczFn",
    "EquivalenceRecord",
    "BracketError",
    "power",
    "gaussian_marginal",
    "empirical",
    "orlicz_eval",
    "luxemburg_norm",
    "empirical_orlicz",
    "equivalence_check",
    "adaptive_simpson",
]

_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


class BracketError(ArithmeticError):
    """No bracket for the Luxemburg norm was found; the Orlicz function is malformed."""


def adaptive_simpson(f, a: float, b: float, tol: float, max_depth: int = 60) -> float:
    """Adaptive Simpson quadrature with Richardson correction."""

    def simpson(fa, fm, fb, h):
        return h / 6.0 * (fa + 4.0 * fm + fb)

    def recurse(a, b, fa, fm, fb, whole, tol, depth):
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = simpson(fa, flm, fm, m - a)
        right = simpson(fm, frm, fb, b - m)
        delta = left + right - whole
        if depth <= 0 or abs(delta) <= 15.0 * tol:
            return left + right + delta / 15.0
        return (recurse(a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                + recurse(m, b, fm, frm, fb, right, tol / 2.0, depth - 1))

    if b == a:
        return 0.0
    fa, fb, fm = f(a), f(b), f(0.5 * (a + b))
    return recurse(a, b, fa, fm, fb, simpson(fa, fm, fb, b - a), tol, max_depth)


def _gauss_integrand(t: float) -> float:
    # exp(-1/(2t^2)) underflows to zero well above t = 0.03
    if t <= 0.03:
        return 0.0
    return math.exp(-0.5 / (t * t))


@dataclass(frozen=True, eq=False)
class OrliczFn:
    """An Orlicz function in one of three forms.

    ``power``: M(t) = t^p.  ``gaussian_marginal``: the first-moment
    function of a standard normal, sqrt(2/pi) int_0^s exp(-1/(2t^2)) dt.
    ``empirical``: the plug-in M_hat built from ``samples``.
    """

    form: str
    p: Optional[float] = None
    samples: Optional[np.ndarray] = field(default=None, repr=False, compare=False)
    tol: float = 1e-9

    def __post_init__(self):
        if self.form == "power":
            if self.p is None or self.p < 1:
                raise ValueError(f"power Orlicz function needs p >= 1, got {self.p}")
        elif self.form == "empirical":
            a = np.abs(np.asarray(self.samples, dtype=float).ravel())
            if a.size == 0 or not np.all(np.isfinite(a)):
                raise ValueError("empirical Orlicz function needs finite samples")
            a = a[a > 0]
            if a.size == 0:
                raise ValueError("empirical Orlicz function needs a nonzero sample")
            m = np.asarray(self.samples).size
            # zero samples contribute nothing but still count in 1/m
            srt = np.sort(a)[::-1]
            object.__setattr__(self, "samples", srt)
            object.__setattr__(self, "_m", m)
            object.__setattr__(self, "_kinks", 1.0 / srt)
            object.__setattr__(self, "_csum", np.concatenate(([0.0], np.cumsum(srt))))
        elif self.form != "gaussian_marginal":
            raise ValueError(f"unknown Orlicz form {self.form!r}")

    @property
    def max_abs(self) -> float:
        if self.form == "empirical":
            return float(self.samples[0])
        return 1.0

    def __call__(self, s):
        return orlicz_eval(self, s)

    def _eval_array(self, s: np.ndarray) -> np.ndarray:
        if self.form == "power":
            return s ** self.p
        if self.form == "empirical":
            # terms with |a_j| > 1/s, i.e. the first k of the descending sort
            k = np.searchsorted(self._kinks, s, side="left")
            return (s * self._csum[k] - k) / self._m
        return np.array([_SQRT_2_OVER_PI * adaptive_simpson(_gauss_integrand, 0.0, float(v), self.tol)
                         for v in s.ravel()]).reshape(s.shape)


def power(p: float) -> OrliczFn:
    return OrliczFn("power", p=float(p))


def gaussian_marginal(tol: float = 1e-9) -> OrliczFn:
    return OrliczFn("gaussian_marginal", tol=tol)


def empirical(samples) -> OrliczFn:
    return OrliczFn("empirical", samples=np.asarray(samples, dtype=float))


def orlicz_eval(M: OrliczFn, s):
    arr = np.asarray(s, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise ValueError("Orlicz functions are evaluated at s >= 0 only")
    out = M._eval_array(np.atleast_1d(arr))
    return float(out[0]) if arr.ndim == 0 else out


def _sum_at(M: OrliczFn, ax: np.ndarray, rho: float) -> float:
    return float(np.sum(M._eval_array(ax / rho)))


def luxemburg_norm(M: OrliczFn, x, rtol: float = 1e-10, max_doublings: int = 200) -> float:
    """inf{rho > 0 : sum_i M(|x_i| / rho) <= 1} by bisection.

    The returned value is the upper end of the final bracket, so the
    constraint sum always holds at it.
    """
    ax = np.abs(np.asarray(x, dtype=float).ravel())
    if ax.size == 0 or not np.any(ax):
        raise ValueError("Luxemburg norm of the zero vector is not defined here")
    ax = ax[ax > 0]

    hi = float(ax.max()) * M.max_abs
    for _ in range(max_doublings):
        if _sum_at(M, ax, hi) <= 1.0:
            break
        hi *= 2.0
    else:
        raise BracketError(f"no upper bracket after {max_doublings} doublings")

    lo = hi
    for _ in range(max_doublings):
        lo *= 0.5
        if _sum_at(M, ax, lo) > 1.0:
            break
    else:
        raise BracketError(f"no lower bracket after {max_doublings} halvings")

    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if _sum_at(M, ax, mid) > 1.0:
            lo = mid
        else:
            hi = mid
    return hi


def empirical_orlicz(model: IsotropicModel, theta, factor_law: Optional[PerturbationLaw], samples: int,
                     rng: RngState) -> OrliczFn:
    """Plug-in Orlicz function of the marginal <X, theta>, optionally times an i.i.d. factor."""
    if samples < 1000:
        raise ValueError(f"samples must be >= 1000, got {samples}")
    theta = np.asarray(theta, dtype=float).ravel()
    if theta.shape[0] != model.n:
        raise ValueError(f"theta has dimension {theta.shape[0]}, model has {model.n}")
    a = sample_isotropic(model, samples, rng.substream(0)).points @ theta
    if factor_law is not None:
        a = a * factor_variates(factor_law, samples, rng.substream(1).generator())
    return empirical(a)


@dataclass
class EquivalenceRecord:
    theta: np.ndarray
    y: Perturbation
    lhs: float
    rhs: float
    lhs_std_error: float = 0.0

    @property
    def ratio(self) -> float:
        return self.lhs / self.rhs


def equivalence_check(model: IsotropicModel, n: int, N: int, y, theta, R: int, M: int, samples: int,
                      rng: RngState) -> EquivalenceRecord:
    """Compare E max_i |y_i <X_i, theta>| against ||y||_{M_hat_theta}.

    ``M`` is the number of i.i.d. maxima averaged per cloud replicate; each
    replicate draws M independent clouds of N points.
    """
    if n != model.n:
        raise ValueError(f"n={n} does not match model dimension {model.n}")
    yv = y.values if isinstance(y, Perturbation) else np.asarray(y, dtype=float).ravel()
    if yv.shape[0] != N:
        raise ValueError(f"y has length {yv.shape[0]}, expected N={N}")
    if not np.any(yv):
        raise ValueError("equivalence check needs y != 0")
    theta = np.asarray(theta, dtype=float).ravel()
    ay = np.abs(yv)
    reps = np.empty(R)
    for r in range(R):
        gen = rng.substream(0, r).generator()
        proj = model.draw(N * M, gen).reshape(M, N, n) @ theta
        reps[r] = np.max(ay * np.abs(proj), axis=1).mean()
    rhs = luxemburg_norm(empirical_orlicz(model, theta, None, samples, rng.substream(1)), yv)
    pert = y if isinstance(y, Perturbation) else Perturbation.of(yv)
    se = float(reps.std(ddof=1) / math.sqrt(R)) if R > 1 else 0.0
    return EquivalenceRecord(theta, pert, float(reps.mean()), rhs, se)
