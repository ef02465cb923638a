"""KL inequality along the Tikhonov path: remoteness, verification, fits and level-set bounds.

Exponent convention: ``phi(t) = c * t**(1 - theta)``.  If ``Delta T`` scales
like ``remoteness**m`` then ``phi'(Delta T) * remoteness`` is constant for
``1 - theta = 1 - 1/m``, i.e. ``theta = 1/m``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .index_calculus import IndexFunction, KLDescription
from .model import DiagonalOperator
from .penalty import QuadraticNorm
from .solver import TikhonovProblem, objective_gap, solve

__all__ = [
    "GAP_FLOOR",
    "FIT_RESIDUAL_LIMIT",
    "KLFit",
    "KLVerification",
    "StabilityCheck",
    "tikhonov_remoteness",
    "kl_samples",
    "kl_verify",
    "kl_fit",
    "fit_from_samples",
    "path_kl_exponent",
    "interpolation_kl_exponent",
    "interpolation_samples",
    "interpolation_kl_fit",
    "levelset_bound_check",
    "conditional_stability_kl",
    "operator_decay",
]

GAP_FLOOR = 1e-14
FIT_RESIDUAL_LIMIT = 0.1


def tikhonov_remoteness(prob: TikhonovProblem, alpha: float, x) -> float:
    """``||A*(A x - y) + alpha dJ(x)||`` for the minimal-norm (here unique) subgradient."""
    x = np.asarray(x, dtype=float)
    g = prob.A.adjoint(prob.A.apply(x) - prob.y_obs) + alpha * prob.J.subgradient(x)
    return float(np.linalg.norm(g))


def _path_problem(prob: TikhonovProblem) -> TikhonovProblem:
    prob.require_truth()
    if prob.delta != 0:
        raise ValueError("KL quantities are only evaluated on noise-free data")
    return prob


def kl_samples(prob: TikhonovProblem, alpha_grid) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(alpha, Delta T, remoteness at x_true)`` along the noise-free path."""
    prob = _path_problem(prob)
    alphas = np.asarray(alpha_grid, dtype=float)
    gaps = np.empty(alphas.size)
    rem = np.empty(alphas.size)
    for i, a in enumerate(alphas):
        gaps[i] = objective_gap(prob, a, prob.x_true, solve(prob, a))
        rem[i] = tikhonov_remoteness(prob, a, prob.x_true)
    return alphas, gaps, rem


@dataclass(frozen=True)
class KLVerification:
    """Outcome of checking ``phi'(Delta T) * remoteness >= 1/k`` on a grid.

    ``k`` is the smallest constant that works for all samples and ``spread``
    is the ratio of the largest to the smallest per-sample constant.
    ``holds`` additionally requires that the per-sample constants do not
    grow as ``Delta T`` shrinks (log-log slope at least ``-0.05``).
    """

    holds: bool
    k: float
    spread: float
    trend: float
    alphas: np.ndarray = field(repr=False)
    gaps: np.ndarray = field(repr=False)
    remoteness: np.ndarray = field(repr=False)
    per_sample_k: np.ndarray = field(repr=False)

    def __iter__(self):
        # allows ``holds, k = kl_verify(...)``
        return iter((self.holds, self.k))


def _verify(phi: IndexFunction, alphas, gaps, rem) -> KLVerification:
    keep = gaps > GAP_FLOOR
    alphas, gaps, rem = alphas[keep], gaps[keep], rem[keep]
    if gaps.size == 0:
        return KLVerification(False, math.inf, math.inf, math.nan, alphas, gaps, rem, np.array([]))
    prod = np.asarray(phi.derivative(gaps), dtype=float) * rem
    with np.errstate(divide="ignore"):
        ks = 1.0 / prod
    k = float(np.max(ks))
    spread = float(np.max(ks) / np.min(ks)) if np.all(np.isfinite(ks)) else math.inf
    if gaps.size >= 2 and np.all(np.isfinite(ks)) and np.ptp(np.log(gaps)) > 0:
        trend = float(np.polyfit(np.log(gaps), np.log(ks), 1)[0])
    else:
        trend = math.nan
    holds = math.isfinite(k) and (math.isnan(trend) or trend >= -0.05)
    return KLVerification(holds, k, spread, trend, alphas, gaps, rem, ks)


def kl_verify(prob: TikhonovProblem, phi, alpha_grid) -> KLVerification:
    """Check the KL inequality at ``x_true`` along the path for a given ``phi``.

    Samples with ``Delta T <= 1e-14`` are skipped.
    """
    if isinstance(phi, KLDescription):
        phi = phi.phi
    if not phi.concave:
        raise ValueError("phi must be concave")
    return _verify(phi, *kl_samples(prob, alpha_grid))


@dataclass(frozen=True)
class KLFit:
    """Power-law desingularization function fitted on ``(Delta T, remoteness)`` samples."""

    m: float
    theta: float
    phi: IndexFunction
    k: float
    residual: float
    flagged: bool
    samples: list[tuple[float, float]]
    alphas: list[float] = field(default_factory=list)

    @property
    def exponent(self) -> float:
        return self.phi.exponent

    def description(self, subgradient_norm: float) -> KLDescription:
        return KLDescription(self.phi, self.k, subgradient_norm)

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "theta": self.theta,
            "phi": self.phi.to_dict(),
            "k": self.k,
            "residual": self.residual,
            "flagged": self.flagged,
            "samples": [list(s) for s in self.samples],
            "alphas": list(self.alphas),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def samples_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["delta_t", "remoteness"])
        for g, r in self.samples:
            w.writerow([repr(g), repr(r)])
        return buf.getvalue()


def fit_from_samples(gaps, rem, alphas=None) -> KLFit:
    """Regress ``log Delta T`` on ``log remoteness`` and certify ``k`` for ``phi = t**(1 - 1/m)``."""
    gaps = np.asarray(gaps, dtype=float)
    rem = np.asarray(rem, dtype=float)
    alphas = np.full(gaps.size, math.nan) if alphas is None else np.asarray(alphas, dtype=float)
    keep = (gaps > GAP_FLOOR) & (rem > 0)
    gaps, rem, alphas = gaps[keep], rem[keep], alphas[keep]
    if gaps.size < 2:
        raise ValueError("need at least two samples with Delta T above the floor")
    lr, lg = np.log(rem), np.log(gaps)
    m, icpt = np.polyfit(lr, lg, 1)
    residual = float(np.max(np.abs(lg - (icpt + m * lr))))
    if not m > 1:
        raise ValueError(f"slope m = {m:.3g} <= 1 gives no concave power-law phi")
    theta = 1.0 / m
    phi = IndexFunction.power(1.0, 1.0 - theta)
    ver = _verify(phi, alphas, gaps, rem)
    return KLFit(
        m=float(m),
        theta=float(theta),
        phi=phi,
        k=ver.k,
        residual=residual,
        flagged=residual > FIT_RESIDUAL_LIMIT,
        samples=[(float(g), float(r)) for g, r in zip(gaps, rem)],
        alphas=[float(a) for a in alphas],
    )


def kl_fit(prob: TikhonovProblem, alpha_grid) -> KLFit:
    """Fit ``phi(t) = t**(1 - theta)`` to the noise-free path.

    Large residuals (non-power-law samples) set ``flagged`` but the fit is
    still returned.
    """
    alphas, gaps, rem = kl_samples(prob, alpha_grid)
    return fit_from_samples(gaps, rem, alphas)


def path_kl_exponent(mu: float) -> float:
    """Exponent of ``phi`` obtained along the path at ``x_true`` under a source condition."""
    return 2.0 * mu / (2.0 * mu + 1.0)


def interpolation_kl_exponent(mu: float) -> float:
    """Exponent of ``phi`` obtained from the interpolation inequality for arbitrary ``x``."""
    return mu / (2.0 * mu + 1.0)


def interpolation_samples(prob: TikhonovProblem, alpha: float, mu: float, modes=None, separation: float = 100.0, max_modes: int = 64):
    """``(Delta T, remoteness)`` at ``x = x_alpha + (A*A)^mu v_j``.

    Each offset is a single singular mode with unit source element, the case
    where the interpolation estimate is sharp.  Only modes with
    ``sigma_j**2 >= separation * alpha`` are used unless ``modes`` is given;
    at most ``max_modes`` of them, spaced logarithmically in ``j``.
    """
    if not mu > 0:
        raise ValueError("mu must be positive")
    sol = solve(prob, alpha)
    s = prob.A.singular_values
    if modes is None:
        eligible = int(np.count_nonzero(s * s >= separation * alpha))
        if eligible < 2:
            raise ValueError("fewer than two modes are well separated from alpha")
        modes = np.unique(np.geomspace(1, eligible, min(max_modes, eligible)).astype(int) - 1)
    gaps, rem = [], []
    for j in modes:
        x = sol.x_alpha + prob.A.power_AstarA(mu, prob.A.singular_vector(int(j)))
        gaps.append(objective_gap(prob, alpha, x, sol))
        rem.append(tikhonov_remoteness(prob, alpha, x))
    return np.array(gaps), np.array(rem)


def interpolation_kl_fit(prob: TikhonovProblem, alpha: float, mu: float, modes=None) -> KLFit:
    """KL fit on the single-mode source family around ``x_alpha``."""
    gaps, rem = interpolation_samples(prob, alpha, mu, modes)
    return fit_from_samples(gaps, rem, np.full(gaps.size, alpha))


def levelset_bound_check(prob: TikhonovProblem, alpha: float, phi: IndexFunction, k: float, test_points, rtol: float = 1e-12) -> bool:
    """Check ``||x - x_alpha|| <= k phi(T_alpha(x) - T_alpha(x_alpha))`` at every test point.

    ``rtol`` only absorbs rounding when both sides agree to working precision.
    """
    if not (prob.A.injective or prob.J.q > 1):
        raise ValueError("needs an injective operator or a strictly convex penalty")
    sol = solve(prob, alpha)
    for x in test_points:
        x = np.asarray(x, dtype=float)
        lhs = float(np.linalg.norm(x - sol.x_alpha))
        rhs = k * float(phi(objective_gap(prob, alpha, x, sol)))
        if lhs > rhs * (1.0 + rtol):
            return False
    return True


def operator_decay(A) -> float:
    """Decay exponent ``s`` of ``sigma_k = sigma_1 k**-s``; raises if the spectrum is not of that form."""
    if not isinstance(A, DiagonalOperator):
        raise TypeError("conditional stability needs a diagonal operator")
    s = A.singular_values
    if s.size < 2:
        raise ValueError("need at least two singular values to identify the decay")
    k = np.arange(1, s.size + 1, dtype=float)
    rate = -math.log(s[-1] / s[0]) / math.log(s.size)
    if not np.allclose(s, s[0] * k**-rate, rtol=1e-9, atol=0):
        raise ValueError("singular values are not a pure power law")
    return rate


@dataclass(frozen=True)
class StabilityCheck:
    """``Delta T**(1 - a/2) <= C * slope_X`` at the supplied points.

    ``constant`` is the smallest ``C`` that fits the points, ``bound`` the
    constant it was checked against.
    """

    holds: bool
    a: float
    constant: float
    bound: float
    ratios: np.ndarray = field(repr=False)


def conditional_stability_kl(prob: TikhonovProblem, alpha: float, x_points, s: float | None = None, constant: float | None = None) -> StabilityCheck:
    """Weak-norm KL inequality with ``phi(t) = t**(a/2)``, ``a = b/s``.

    The slope of ``T_alpha`` with respect to the weak norm is the dual weighted
    norm of the gradient, ``sqrt(sum_k k**(2b) g_k**2)``, which is the exact
    supremum of ``<g, x - z> / ||x - z||_X`` over all directions.

    For ``a <= 1`` the interpolation ``||h||_X <= ||A h||**a ||h||**(1-a)``
    gives the explicit bound ``2**(a/2 - 1) max ||x - x_alpha||**(1-a)``.
    For ``1 < a < 2`` no such bound is available and ``constant`` must be given.
    """
    if prob.weights is None:
        raise ValueError("problem carries no weak-norm weights")
    if not isinstance(prob.J, QuadraticNorm):
        raise TypeError("conditional stability is formulated for the quadratic penalty")
    if s is None:
        s = operator_decay(prob.A)
    s_scale = prob.A.singular_values[0]
    if not math.isclose(s_scale, 1.0, rel_tol=1e-12):
        raise ValueError("expected sigma_1 = 1")
    b = prob.weights.b
    a = b / s
    if a >= 2:
        raise ValueError(f"stability exponent a = b/s = {a:g} must be below 2")
    if not a > 0:
        raise ValueError("a = 0 is the plain quadratic case; use levelset_bound_check")
    sol = solve(prob, alpha)
    pts = [np.asarray(x, dtype=float) for x in x_points]
    ratios = []
    hmax = 0.0
    for x in pts:
        h = x - sol.x_alpha
        if not np.any(h):
            continue
        hmax = max(hmax, float(np.linalg.norm(h)))
        g = prob.A.adjoint(prob.A.apply(x) - prob.y_obs) + alpha * x
        slope = prob.weights.dual_norm(g)
        gap = objective_gap(prob, alpha, x, sol)
        ratios.append(gap ** (1.0 - a / 2.0) / slope)
    ratios = np.array(ratios)
    if constant is None:
        if a > 1:
            raise ValueError("no explicit constant for a > 1; pass constant=")
        constant = 2.0 ** (a / 2.0 - 1.0) * hmax ** (1.0 - a)
    c_fit = float(np.max(ratios)) if ratios.size else 0.0
    return StabilityCheck(bool(c_fit <= constant * (1.0 + 1e-12)), a, c_fit, float(constant), ratios)
