"""Convex penalties with closed-form subgradients and conjugates."""

from __future__ import annotations

import numpy as np

__all__ = ["Penalty", "QuadraticNorm", "PowerNorm", "penalty_from_spec"]


class Penalty:
    """Separable convex penalty ``J(x) = (1/q) sum |x_k|^q`` with ``1 < q <= 2``.

    Both shipped forms are strictly convex, differentiable and vanish only at 0,
    so the subdifferential is a singleton everywhere.
    """

    q: float

    @property
    def conjugate_exponent(self) -> float:
        return self.q / (self.q - 1.0)

    @property
    def spec(self) -> str:
        raise NotImplementedError

    def __call__(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(np.sum(np.abs(x) ** self.q)) / self.q

    def eval(self, x) -> float:
        return self(x)

    def subgradient(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.sign(x) * np.abs(x) ** (self.q - 1.0)

    def conjugate(self, xstar) -> float:
        p = np.asarray(xstar, dtype=float)
        qs = self.conjugate_exponent
        return float(np.sum(np.abs(p) ** qs)) / qs

    def conjugate_gradient(self, xstar) -> np.ndarray:
        """Gradient of the conjugate, i.e. the inverse of the subgradient map."""
        p = np.asarray(xstar, dtype=float)
        return np.sign(p) * np.abs(p) ** (self.conjugate_exponent - 1.0)

    def difference(self, x, z) -> float:
        """``J(x) - J(z)`` summed componentwise to limit cancellation."""
        x = np.asarray(x, dtype=float)
        z = np.asarray(z, dtype=float)
        return float(np.sum(np.abs(x) ** self.q - np.abs(z) ** self.q)) / self.q

    def bregman(self, x, z, xi=None, check: bool = False) -> float:
        """Bregman distance ``J(x) - J(z) - <xi, x - z>`` with ``xi`` in dJ(z)."""
        x = np.asarray(x, dtype=float)
        z = np.asarray(z, dtype=float)
        if xi is None:
            xi = self.subgradient(z)
        else:
            xi = np.asarray(xi, dtype=float)
            if check:
                self._check_subgradient(z, xi)
        return max(self.difference(x, z) - float(np.dot(xi, x - z)), 0.0)

    def remoteness(self, x) -> float:
        """``dist(0, dJ(x))``; the subdifferential is a singleton here."""
        return float(np.linalg.norm(self.subgradient(x)))

    def _check_subgradient(self, z, xi, probes: int = 32, rtol: float = 1e-10):
        rng = np.random.default_rng(0)
        scale = max(1.0, float(np.linalg.norm(z)))
        jz = self(z)
        for _ in range(probes):
            x = z + scale * rng.standard_normal(z.size) * rng.uniform(1e-3, 1.0)
            lhs = self(x)
            rhs = jz + float(np.dot(xi, x - z))
            if lhs < rhs - rtol * max(abs(lhs), abs(rhs), 1.0):
                raise ValueError("xi violates the subgradient inequality at z")

    def __repr__(self):
        return f"{type(self).__name__}(q={self.q})"

    def __eq__(self, other):
        return isinstance(other, Penalty) and self.q == other.q

    def __hash__(self):
        return hash(("penalty", self.q))


class QuadraticNorm(Penalty):
    """``J(x) = 0.5 ||x||^2``; self-conjugate."""

    q = 2.0

    @property
    def spec(self):
        return "quadratic"

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return 0.5 * float(np.dot(x, x))

    def subgradient(self, x):
        return np.array(x, dtype=float)

    def conjugate(self, xstar):
        return self(xstar)

    def conjugate_gradient(self, xstar):
        return np.array(xstar, dtype=float)

    def difference(self, x, z):
        x = np.asarray(x, dtype=float)
        z = np.asarray(z, dtype=float)
        d = x - z
        return float(np.dot(d, z)) + 0.5 * float(np.dot(d, d))

    def bregman(self, x, z, xi=None, check=False):
        x = np.asarray(x, dtype=float)
        z = np.asarray(z, dtype=float)
        if xi is not None:
            xi = np.asarray(xi, dtype=float)
            if check:
                self._check_subgradient(z, xi)
            if not np.array_equal(xi, z):
                return super().bregman(x, z, xi)
        d = x - z
        return 0.5 * float(np.dot(d, d))


class PowerNorm(Penalty):
    """``J(x) = (1/q) sum |x_k|^q`` for ``1 < q <= 2``."""

    def __init__(self, q: float):
        q = float(q)
        if not 1.0 < q <= 2.0:
            raise ValueError(f"power-norm exponent must lie in (1, 2], got {q}")
        self.q = q

    @property
    def spec(self):
        return f"power:{self.q:g}"


def penalty_from_spec(spec: str) -> Penalty:
    """Parse ``"quadratic"`` or ``"power:q"``."""
    spec = spec.strip()
    if spec == "quadratic":
        return QuadraticNorm()
    if spec.startswith("power:"):
        try:
            q = float(spec.split(":", 1)[1])
        except ValueError:
            raise ValueError(f"bad power exponent in penalty spec {spec!r}") from None
        return PowerNorm(q)
    raise ValueError(f"unknown penalty {spec!r}; expected 'quadratic' or 'power:q'")
