"""Finite-dimensional forward operators, weak norms and noise injection."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Operator",
    "DiagonalOperator",
    "DenseOperator",
    "NormWeights",
    "polynomial_operator",
    "x_norm",
    "make_noisy",
    "operator_from_dict",
]


class Operator:
    """Linear map ``R^m -> R^n`` with adjoint and powers of ``A*A``."""

    form: str

    @property
    def shape(self) -> tuple[int, int]:
        raise NotImplementedError

    @property
    def singular_values(self) -> np.ndarray:
        raise NotImplementedError

    def apply(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def power_AstarA(self, mu: float, w: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def singular_vector(self, j: int) -> np.ndarray:
        """Right singular vector ``j`` (0-based, ordered by decreasing value)."""
        raise NotImplementedError

    @property
    def injective(self) -> bool:
        n, m = self.shape
        return m <= n and bool(np.all(self.singular_values > 0)) and self.singular_values.size == m

    def _check_domain(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.shape[1],):
            raise ValueError(f"expected a vector of length {self.shape[1]}, got shape {x.shape}")
        return x

    def _check_range(self, y):
        y = np.asarray(y, dtype=float)
        if y.shape != (self.shape[0],):
            raise ValueError(f"expected a vector of length {self.shape[0]}, got shape {y.shape}")
        return y

    def __matmul__(self, x):
        return self.apply(x)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


class DiagonalOperator(Operator):
    """``A = diag(sigma)`` with ``sigma_1 >= ... >= sigma_n > 0``."""

    form = "diagonal"

    def __init__(self, singular_values):
        s = np.array(singular_values, dtype=float)
        if s.ndim != 1 or s.size == 0:
            raise ValueError("singular values must be a non-empty 1-d array")
        if np.any(~np.isfinite(s)) or np.any(s <= 0):
            raise ValueError("singular values must be finite and strictly positive")
        if np.any(np.diff(s) > 0):
            raise ValueError("singular values must be nonincreasing")
        s.setflags(write=False)
        self._s = s

    @property
    def shape(self):
        return (self._s.size, self._s.size)

    @property
    def singular_values(self):
        return self._s

    def apply(self, x):
        return self._s * self._check_domain(x)

    def adjoint(self, y):
        return self._s * self._check_range(y)

    def power_AstarA(self, mu, w):
        if mu < 0:
            raise ValueError("mu must be nonnegative")
        w = self._check_domain(w)
        if mu == 0:
            return w.copy()
        return self._s ** (2.0 * mu) * w

    def singular_vector(self, j):
        e = np.zeros(self._s.size)
        e[j] = 1.0
        return e

    def to_dict(self):
        return {"form": "diagonal", "singular_values": self._s.tolist()}

    def __repr__(self):
        return f"DiagonalOperator(n={self._s.size}, sigma=[{self._s[0]:.3g} .. {self._s[-1]:.3g}])"


class DenseOperator(Operator):
    """Dense matrix with its thin SVD cached at construction."""

    form = "dense"

    def __init__(self, matrix):
        a = np.array(matrix, dtype=float)
        if a.ndim != 2 or a.size == 0:
            raise ValueError("matrix must be a non-empty 2-d array")
        if not np.all(np.isfinite(a)):
            raise ValueError("matrix entries must be finite")
        a.setflags(write=False)
        self._a = a
        u, s, vt = np.linalg.svd(a, full_matrices=False)
        for arr in (u, s, vt):
            arr.setflags(write=False)
        self._u, self._s, self._vt = u, s, vt

    @property
    def matrix(self):
        return self._a

    @property
    def svd(self):
        return self._u, self._s, self._vt

    @property
    def shape(self):
        return self._a.shape

    @property
    def singular_values(self):
        return self._s

    def apply(self, x):
        return self._a @ self._check_domain(x)

    def adjoint(self, y):
        return self._a.T @ self._check_range(y)

    def power_AstarA(self, mu, w):
        if mu < 0:
            raise ValueError("mu must be nonnegative")
        w = self._check_domain(w)
        if mu == 0:
            return w.copy()
        # null-space components are annihilated for mu > 0
        return self._vt.T @ (self._s ** (2.0 * mu) * (self._vt @ w))

    def singular_vector(self, j):
        return self._vt[j].copy()

    def to_dict(self):
        return {"form": "dense", "matrix": self._a.tolist()}

    def __repr__(self):
        return f"DenseOperator(shape={self._a.shape})"


def operator_from_dict(d: dict) -> Operator:
    form = d.get("form")
    if form == "diagonal":
        return DiagonalOperator(d["singular_values"])
    if form == "dense":
        return DenseOperator(d["matrix"])
    raise ValueError(f"unknown operator form {form!r}")


def polynomial_operator(n: int = 200, s: float = 1.0) -> DiagonalOperator:
    """The canonical ill-posed test operator ``sigma_k = k**-s``."""
    if n < 1:
        raise ValueError("n must be positive")
    if not s > 0:
        raise ValueError("decay exponent s must be positive")
    return DiagonalOperator(np.arange(1, n + 1, dtype=float) ** -s)


@dataclass(frozen=True)
class NormWeights:
    """Weak norm ``||x||_X^2 = sum_k k^(-2b) x_k^2``; ``b = 0`` is the Euclidean norm."""

    b: float

    def __post_init__(self):
        if not self.b >= 0:
            raise ValueError("weight exponent b must be nonnegative")

    def weights(self, n: int) -> np.ndarray:
        return np.arange(1, n + 1, dtype=float) ** (-2.0 * self.b)

    def norm(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return math.sqrt(float(np.sum(self.weights(x.size) * x * x)))

    def dual_norm(self, g) -> float:
        """Norm of ``g`` as a functional on ``(R^n, ||.||_X)``."""
        g = np.asarray(g, dtype=float)
        return math.sqrt(float(np.sum(g * g / self.weights(g.size))))


def x_norm(weights: NormWeights, x) -> float:
    return weights.norm(x)


def make_noisy(y, delta: float, direction=None, seed=None, envelope=None) -> np.ndarray:
    """Return ``y + delta * d / ||d||``, so the perturbation has norm exactly ``delta``.

    ``direction`` gives ``d`` explicitly.  Otherwise ``d`` is drawn from a
    standard normal with ``seed``, optionally multiplied componentwise by
    ``envelope`` (e.g. ``k**-0.5`` for noise concentrated on the smooth modes).
    """
    y = np.asarray(y, dtype=float)
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    if delta == 0:
        return y.copy()
    if direction is None:
        if seed is None:
            raise ValueError("need a direction or a seed")
        d = np.random.default_rng(seed).standard_normal(y.size)
        if envelope is not None:
            d = d * np.asarray(envelope, dtype=float)
    else:
        d = np.asarray(direction, dtype=float)
        if d.shape != y.shape:
            raise ValueError("direction must match the data shape")
    nd = np.linalg.norm(d)
    if nd == 0 or not np.isfinite(nd):
        raise ValueError("noise direction must be nonzero and finite")
    return y + (delta / nd) * d
