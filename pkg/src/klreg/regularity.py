"""Measured regularity: J- and T-rates, the distance function and variational envelopes."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import optimize

from .fitting import PowerFit, fit_power_envelope, fit_power_law
from .index_calculus import IndexFunction, phi4_from_phi3
from .solver import TikhonovProblem, dual_objective, objective_gap, solve

__all__ = [
    "DEFAULT_ALPHA_GRID",
    "RateSample",
    "DistanceBound",
    "default_alpha_grid",
    "j_rate",
    "t_rate",
    "fit_rate",
    "distance_function",
    "distance_transform",
    "variational_pairs",
    "variational_fit",
    "samples_to_csv",
    "write_samples_csv",
    "fit_to_json",
]

MIN_POSITIVE_PAIRS = 10


def default_alpha_grid(count: int = 40, lo: float = 1e-8, hi: float = 1.0) -> np.ndarray:
    return np.logspace(math.log10(lo), math.log10(hi), count)


DEFAULT_ALPHA_GRID = default_alpha_grid()


@dataclass(frozen=True)
class RateSample:
    abscissa: float
    value: float
    kind: str = ""

    def __post_init__(self):
        if not self.abscissa > 0:
            raise ValueError(f"abscissa must be positive, got {self.abscissa}")
        if not math.isfinite(self.value):
            raise ValueError("sample value must be finite")


def _noise_free(prob: TikhonovProblem) -> TikhonovProblem:
    prob.require_truth()
    return prob if prob.delta == 0 else prob.noise_free()


def _grid(alpha_grid) -> np.ndarray:
    g = DEFAULT_ALPHA_GRID if alpha_grid is None else np.asarray(alpha_grid, dtype=float)
    if g.ndim != 1 or g.size == 0 or np.any(g <= 0):
        raise ValueError("alpha grid must be a non-empty list of positive values")
    return g


def j_rate(prob: TikhonovProblem, alpha_grid=None) -> list[RateSample]:
    """``J(x_true) - J(x_alpha)`` on the noise-free path.

    Values stay signed and unclipped.  When ``x_true`` is not the J-minimizing
    solution the samples level off at ``J(x_true) - J(x_min)`` instead of
    vanishing.
    """
    prob = _noise_free(prob)
    xt = prob.x_true
    out = []
    for a in _grid(alpha_grid):
        x = solve(prob, a).x_alpha
        out.append(RateSample(float(a), -prob.J.difference(x, xt), "j_rate"))
    return out


def t_rate(prob: TikhonovProblem, alpha_grid=None) -> list[RateSample]:
    """``(T_alpha(x_true) - T_alpha(x_alpha)) / alpha`` on the noise-free path."""
    prob = _noise_free(prob)
    out = []
    for a in _grid(alpha_grid):
        sol = solve(prob, a)
        out.append(RateSample(float(a), objective_gap(prob, a, prob.x_true, sol) / a, "t_rate"))
    return out


def fit_rate(samples: list[RateSample], trim: int = 0, window=None) -> PowerFit:
    """Power law through the positive samples."""
    x = np.array([s.abscissa for s in samples])
    y = np.array([s.value for s in samples])
    return fit_power_law(x, y, trim=trim, window=window)


@dataclass(frozen=True)
class DistanceBound:
    """Bracket ``lower <= D(r) <= upper``.

    ``lower`` is the objective at the best point found; ``upper`` is the dual
    value at a feasible multiplier.  ``phi3_bound`` is ``sup_t (Phi3(t) - r t)``
    when a variational function was supplied.
    """

    r: float
    lower: float
    upper: float
    alpha: float | None = None
    phi3_bound: float | None = None

    @property
    def value(self) -> float:
        return self.lower

    def to_dict(self) -> dict:
        return asdict(self)


def _distance_objective(prob: TikhonovProblem, r: float, x) -> float:
    xt = prob.x_true
    v = prob.A.apply(np.asarray(x, dtype=float) - xt)
    return -prob.J.difference(x, xt) - r * float(np.linalg.norm(v))


def _ascent(prob: TikhonovProblem, r: float, iterations: int) -> tuple[float, np.ndarray]:
    """Subgradient ascent with steps ``c / sqrt(k+1)`` from ``x_true``, then a line polish."""
    xt = prob.x_true
    x = xt.copy()
    best_val, best_x = 0.0, xt.copy()
    scale = max(float(np.linalg.norm(xt)), 1e-300)
    for k in range(iterations):
        v = prob.A.apply(x - xt)
        nv = float(np.linalg.norm(v))
        g = -prob.J.subgradient(x)
        if nv > 0:
            g = g - (r / nv) * prob.A.adjoint(v)
        ng = float(np.linalg.norm(g))
        if ng == 0:
            break
        x = x + (0.5 * scale / math.sqrt(k + 1.0)) * g / ng
        val = _distance_objective(prob, r, x)
        if val > best_val:
            best_val, best_x = val, x.copy()
    d = best_x - xt
    if np.any(d):
        res = optimize.minimize_scalar(
            lambda t: -_distance_objective(prob, r, xt + t * d), bounds=(0.0, 2.0), method="bounded"
        )
        if -res.fun > best_val:
            best_val, best_x = float(-res.fun), xt + res.x * d
    return best_val, best_x


def distance_function(
    prob: TikhonovProblem, r: float, phi3: IndexFunction | None = None, iterations: int = 300
) -> DistanceBound:
    """Bracket ``D(r) = sup_x (J(x_true) - J(x) - r ||A x - A x_true||)``.

    The supremum is attained on the noise-free Tikhonov path at the ``alpha``
    whose dual certificate has norm ``r``; that certificate is feasible for
    the dual problem ``min_{||p|| <= r} J(x_true) + J*(A* p) - <p, A x_true>``,
    which yields the upper bound.  The lower bound is the better of that path
    point and a subgradient-ascent run.
    """
    if not r >= 0:
        raise ValueError("r must be nonnegative")
    prob = _noise_free(prob)
    xt = prob.x_true
    j_true = prob.J(xt)
    phi3_bound = None
    if phi3 is not None:
        phi3_bound = float(phi4_from_phi3(phi3)(1.0 / r)) if r > 0 else math.inf
    if r == 0:
        return DistanceBound(0.0, j_true, j_true, math.inf, phi3_bound)

    def znorm(log_a):
        return math.log(float(np.linalg.norm(solve(prob, math.exp(log_a)).dual_z)))

    ynorm = float(np.linalg.norm(prob.y_obs))
    if ynorm == 0:
        return DistanceBound(float(r), 0.0, 0.0, None, phi3_bound)
    sig_min = float(np.min(prob.A.singular_values))
    lo = math.log(1e-16 * max(sig_min * sig_min, 1e-300))
    hi = math.log(2.0 * ynorm / r)
    logr = math.log(r)
    if znorm(lo) <= logr:
        alpha = math.exp(lo)
    else:
        alpha = math.exp(optimize.brentq(lambda u: znorm(u) - logr, lo, hi, xtol=1e-14, rtol=1e-14))
    sol = solve(prob, alpha)
    p = sol.dual_z
    pn = float(np.linalg.norm(p))
    if pn > r:
        p = p * (r / pn)
    upper = dual_objective(prob, 0.0, p)
    lower = _distance_objective(prob, r, sol.x_alpha)
    if iterations > 0:
        lower = max(lower, _ascent(prob, r, iterations)[0])
    lower = lower if lower > 0 else 0.0
    return DistanceBound(float(r), lower, max(upper, lower), alpha, phi3_bound)


def distance_transform(bounds: list[DistanceBound], t) -> np.ndarray:
    """Variational bound ``min_j (D(r_j) + r_j t)`` built from distance-function upper bounds."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    r = np.array([b.r for b in bounds])
    d = np.array([b.upper for b in bounds])
    return np.min(d[None, :] + r[None, :] * t[:, None], axis=1)


def variational_pairs(
    prob: TikhonovProblem, sample_count: int = 200, seed=0, alpha_grid=None
) -> tuple[np.ndarray, np.ndarray]:
    """Pairs ``(||A(x - x_true)||, J(x_true) - J(x))`` with positive ordinate.

    Points come from the noise-free path and from random perturbations of
    ``x_true`` at log-uniform relative sizes in ``[1e-4, 1]``.
    """
    prob = _noise_free(prob)
    xt = prob.x_true
    pts = [solve(prob, a).x_alpha for a in _grid(alpha_grid)]
    rng = np.random.default_rng(seed)
    scale = max(float(np.linalg.norm(xt)), 1.0)
    for _ in range(sample_count):
        g = rng.standard_normal(xt.size)
        pts.append(xt + (10.0 ** rng.uniform(-4.0, 0.0)) * scale * g / np.linalg.norm(g))
    t, v = [], []
    for x in pts:
        h = x - xt
        if not np.any(h):
            continue
        gain = -prob.J.difference(x, xt)
        dist = float(np.linalg.norm(prob.A.apply(h)))
        if gain > 0 and dist > 0:
            t.append(dist)
            v.append(gain)
    return np.array(t), np.array(v)


def variational_fit(prob: TikhonovProblem, sample_count: int = 200, seed=0, alpha_grid=None, quantile: float = 0.99) -> PowerFit:
    """Upper power-law envelope ``Phi3`` of the variational pairs."""
    t, v = variational_pairs(prob, sample_count, seed, alpha_grid)
    if t.size < MIN_POSITIVE_PAIRS:
        raise ValueError(f"only {t.size} positive-ordinate samples; need {MIN_POSITIVE_PAIRS}")
    return fit_power_envelope(t, v, quantile)


def samples_to_csv(samples: list[RateSample]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["abscissa", "value", "kind"])
    for s in samples:
        w.writerow([repr(s.abscissa), repr(s.value), s.kind])
    return buf.getvalue()


def write_samples_csv(path, samples: list[RateSample]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(samples_to_csv(samples))


def fit_to_json(fit: PowerFit) -> str:
    return json.dumps(fit.to_dict(), sort_keys=True)
