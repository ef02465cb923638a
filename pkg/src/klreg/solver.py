"""Exact Tikhonov minimizers ``argmin 0.5 ||Ax - y||^2 + alpha J(x)``."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .model import DenseOperator, DiagonalOperator, NormWeights, Operator
from .penalty import Penalty, QuadraticNorm

__all__ = [
    "TikhonovProblem",
    "Solution",
    "SolverError",
    "solve",
    "tikhonov_objective",
    "objective_gap",
    "dual_objective",
]

SCALAR_TOL = 1e-13
SCALAR_MAXITER = 200


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class TikhonovProblem:
    A: Operator
    J: Penalty
    y_obs: np.ndarray
    x_true: np.ndarray | None = None
    delta: float = 0.0
    weights: NormWeights | None = None

    def __post_init__(self):
        y = np.array(self.y_obs, dtype=float)
        y.setflags(write=False)
        object.__setattr__(self, "y_obs", y)
        if y.shape != (self.A.shape[0],):
            raise ValueError(f"data has shape {y.shape}, operator range is {self.A.shape[0]}")
        if self.delta < 0:
            raise ValueError("delta must be nonnegative")
        if self.x_true is not None:
            xt = np.array(self.x_true, dtype=float)
            xt.setflags(write=False)
            object.__setattr__(self, "x_true", xt)
            if self.delta == 0:
                r = np.linalg.norm(self.A.apply(xt) - y)
                if r > 1e-12 * max(1.0, float(np.linalg.norm(y))):
                    raise ValueError(f"noise-free data inconsistent with x_true (residual {r:.3g})")

    @classmethod
    def from_solution(cls, A: Operator, J: Penalty, x_true, weights=None) -> TikhonovProblem:
        x_true = np.asarray(x_true, dtype=float)
        return cls(A, J, A.apply(x_true), x_true, 0.0, weights)

    def with_data(self, y_obs, delta: float) -> TikhonovProblem:
        return dataclasses.replace(self, y_obs=y_obs, delta=delta)

    def noise_free(self) -> TikhonovProblem:
        if self.x_true is None:
            raise ValueError("problem has no true solution")
        return self.with_data(self.A.apply(self.x_true), 0.0)

    def require_truth(self) -> np.ndarray:
        if self.x_true is None:
            raise ValueError("this operation needs x_true")
        return self.x_true


@dataclass(frozen=True, eq=False)
class Solution:
    x_alpha: np.ndarray
    alpha: float
    objective: float
    residual_norm: float
    penalty_value: float
    dual_z: np.ndarray

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "x_alpha": self.x_alpha.tolist(),
            "objective": self.objective,
            "residual_norm": self.residual_norm,
            "penalty_value": self.penalty_value,
            "dual_z": self.dual_z.tolist(),
        }


def tikhonov_objective(prob: TikhonovProblem, alpha: float, x) -> float:
    r = prob.A.apply(x) - prob.y_obs
    return 0.5 * float(np.dot(r, r)) + alpha * prob.J(x)


def solve(prob: TikhonovProblem, alpha: float) -> Solution:
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    A, J, y = prob.A, prob.J, prob.y_obs
    # the certificate z = (y - A x)/alpha is formed from the optimality
    # condition A* z = dJ(x) rather than by subtracting, so it keeps full
    # relative accuracy when alpha is tiny
    if isinstance(A, DiagonalOperator):
        s = A.singular_values
        if isinstance(J, QuadraticNorm):
            x = s * y / (s * s + alpha)
        else:
            x = _solve_separable(s, y, alpha, J.q)
        z = J.subgradient(x) / s
    elif isinstance(A, DenseOperator):
        if not isinstance(J, QuadraticNorm):
            raise NotImplementedError("non-quadratic penalties need a diagonal operator")
        u, s, vt = A.svd
        c = u.T @ y
        x = vt.T @ (s / (s * s + alpha) * c)
        # component of y outside the range of A stays in the residual
        z = u @ (c / (s * s + alpha)) + (y - u @ c) / alpha
    else:
        raise TypeError(f"unsupported operator {type(A).__name__}")
    rn = alpha * float(np.linalg.norm(z))
    pv = J(x)
    return Solution(
        x_alpha=x,
        alpha=float(alpha),
        objective=0.5 * rn * rn + alpha * pv,
        residual_norm=rn,
        penalty_value=pv,
        dual_z=z,
    )


def _solve_separable(sigma, y, alpha, q):
    """Per component: ``sigma^2 u + alpha u^(q-1) = sigma |y|`` for ``u = |x| >= 0``.

    Safeguarded Newton inside a shrinking bracket; the left side is strictly
    increasing in ``u`` so the root is unique.
    """
    b = sigma * np.abs(y)
    s2 = sigma * sigma
    lo = np.zeros_like(b)
    hi = np.minimum(b / s2, (b / alpha) ** (1.0 / (q - 1.0)))
    u = 0.5 * hi
    scale = np.where(b > 0, b, 1.0)
    done = b == 0
    u[done] = 0.0
    for _ in range(SCALAR_MAXITER):
        g = s2 * u + alpha * u ** (q - 1.0) - b
        done |= (np.abs(g) <= SCALAR_TOL * scale) | (hi - lo <= 4 * np.finfo(float).eps * np.maximum(u, 1e-300))
        if done.all():
            break
        pos = g > 0
        hi = np.where(pos & ~done, u, hi)
        lo = np.where(~pos & ~done, u, lo)
        with np.errstate(divide="ignore", invalid="ignore"):
            gp = s2 + alpha * (q - 1.0) * u ** (q - 2.0)
            step = u - g / gp
        bad = ~np.isfinite(step) | (step <= lo) | (step >= hi)
        step = np.where(bad, 0.5 * (lo + hi), step)
        u = np.where(done, u, step)
    else:
        idx = int(np.flatnonzero(~done)[0])
        raise SolverError(f"scalar solve did not converge at component {idx}")
    return np.sign(y) * u


def objective_gap(prob: TikhonovProblem, alpha: float, x_ref, solution: Solution | None = None) -> float:
    """``T_alpha(x_ref) - T_alpha(x_alpha) >= 0`` without subtracting objectives.

    For the quadratic penalty this is ``0.5 ||A h||^2 + 0.5 alpha ||h||^2``
    with ``h = x_ref - x_alpha``.
    """
    sol = solution if solution is not None else solve(prob, alpha)
    x_ref = np.asarray(x_ref, dtype=float)
    h = x_ref - sol.x_alpha
    ah = prob.A.apply(h)
    if isinstance(prob.J, QuadraticNorm):
        return 0.5 * float(np.dot(ah, ah)) + 0.5 * alpha * float(np.dot(h, h))
    resid = -alpha * sol.dual_z
    gap = 0.5 * float(np.dot(ah, ah)) + float(np.dot(ah, resid)) + alpha * prob.J.difference(x_ref, sol.x_alpha)
    # rounding can leave a tiny negative value at the minimizer
    return max(gap, 0.0)


def dual_objective(prob: TikhonovProblem, alpha: float, z) -> float:
    """Dual T-rate expression ``J*(A*z) - J*(x*) - <x_true, A*z - x*> + alpha/2 ||z||^2``.

    ``x*`` is the subgradient of ``J`` at ``x_true``.  At the dual certificate
    of the noise-free solve this equals ``objective_gap(x_true) / alpha``.
    """
    xt = prob.require_truth()
    z = np.asarray(z, dtype=float)
    J = prob.J
    xstar = J.subgradient(xt)
    atz = prob.A.adjoint(z)
    # the first three terms form the Bregman distance of J* at x*; summed per component
    if isinstance(J, QuadraticNorm):
        d = atz - xt
        breg = 0.5 * float(np.dot(d, d))
    else:
        qs = J.conjugate_exponent
        breg = float(np.sum((np.abs(atz) ** qs - np.abs(xstar) ** qs) / qs - xt * (atz - xstar)))
    return breg + 0.5 * alpha * float(np.dot(z, z))
