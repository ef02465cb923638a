"""Index functions and the transforms that convert between regularity conditions.

Every transform has two routes:

* a closed form for power laws ``c * t**p``;
* a numeric route for tabulated (piecewise-linear) functions, where the
  inner sup/inf is found by a coarse scan over ``log10 t`` followed by
  golden-section refinement.

The two routes are cross-checked in the test-suite.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from scipy import optimize

__all__ = [
    "IndexFunction",
    "KLDescription",
    "KLChoice",
    "DegenerateTransformError",
    "psi2_from_phi3",
    "phi3_from_psi2",
    "phi4_from_phi3",
    "phi3_from_phi4",
    "companion",
    "a_priori_alpha",
    "psi_from_kl",
    "kl_from_psi",
    "kl_alpha_choice",
]

LOG10_RANGE = (-30.0, 30.0)
N_BRACKETS = 600


class DegenerateTransformError(ValueError):
    """The requested sup/inf is identically zero or infinite."""


class IndexFunction:
    """Monotone function on ``[0, domain_upper)`` with value 0 at 0.

    Use :meth:`power` or :meth:`tabulated` to construct one.
    """

    __slots__ = ("_c", "_p", "_t", "_v", "domain_upper")

    def __init__(self, *, c=None, p=None, t=None, v=None, domain_upper=math.inf):
        self._c = self._p = self._t = self._v = None
        if c is not None:
            c, p = float(c), float(p)
            if not (c > 0 and p > 0 and math.isfinite(c) and math.isfinite(p)):
                raise ValueError(f"power law needs c > 0 and p > 0, got c={c}, p={p}")
            self._c, self._p = c, p
        else:
            t = np.array(t, dtype=float)
            v = np.array(v, dtype=float)
            if t.ndim != 1 or t.shape != v.shape or t.size < 2:
                raise ValueError("tabulated form needs two 1-d arrays of equal length >= 2")
            if t[0] != 0.0 or v[0] != 0.0:
                raise ValueError("tabulated form must start at (0, 0)")
            if np.any(np.diff(t) <= 0):
                raise ValueError("abscissae must be strictly increasing")
            if np.any(np.diff(v) <= 0):
                raise ValueError("values must be strictly increasing")
            t.setflags(write=False)
            v.setflags(write=False)
            self._t, self._v = t, v
            if domain_upper is None or domain_upper == math.inf:
                domain_upper = float(t[-1])
        if not domain_upper > 0:
            raise ValueError("domain_upper must be positive")
        self.domain_upper = float(domain_upper)

    @classmethod
    def power(cls, c: float, p: float, domain_upper: float = math.inf) -> IndexFunction:
        return cls(c=c, p=p, domain_upper=domain_upper)

    @classmethod
    def tabulated(cls, t, v) -> IndexFunction:
        return cls(t=t, v=v, domain_upper=None)

    @classmethod
    def sample(cls, f: IndexFunction, t) -> IndexFunction:
        """Tabulate ``f`` on the positive abscissae ``t`` (0 is prepended)."""
        t = np.asarray(t, dtype=float)
        t = np.concatenate(([0.0], t[t > 0]))
        return cls.tabulated(t, f(t))

    # -- structure ---------------------------------------------------------
    @property
    def is_power(self) -> bool:
        return self._c is not None

    @property
    def coefficient(self) -> float:
        self._require_power()
        return self._c

    @property
    def exponent(self) -> float:
        self._require_power()
        return self._p

    @property
    def points(self) -> tuple[np.ndarray, np.ndarray]:
        if self.is_power:
            raise TypeError("power law has no table")
        return self._t, self._v

    @property
    def concave(self) -> bool:
        if self.is_power:
            return self._p <= 1.0
        s = self._slopes()
        return bool(np.all(np.diff(s) <= 1e-12 * np.abs(s[:-1])))

    def _require_power(self):
        if not self.is_power:
            raise TypeError("closed form requires a power law")

    def _slopes(self) -> np.ndarray:
        return np.diff(self._v) / np.diff(self._t)

    def _check_domain(self, t: np.ndarray):
        if np.any(t < 0) or np.any(t > self.domain_upper) or np.any(np.isnan(t)):
            raise ValueError(f"argument outside [0, {self.domain_upper}]")

    # -- evaluation --------------------------------------------------------
    def __call__(self, t):
        arr = np.asarray(t, dtype=float)
        self._check_domain(arr)
        if self.is_power:
            out = self._c * arr**self._p
        else:
            out = np.interp(arr, self._t, self._v)
        return float(out) if np.ndim(out) == 0 else out

    def derivative(self, t):
        """Derivative; ``math.inf`` at 0 when it diverges there."""
        arr = np.asarray(t, dtype=float)
        self._check_domain(arr)
        if self.is_power:
            c, p = self._c, self._p
            with np.errstate(divide="ignore"):
                out = np.where(arr > 0, c * p * arr ** (p - 1.0), _power_derivative_at_zero(c, p))
        else:
            s = self._slopes()
            idx = np.clip(np.searchsorted(self._t, arr, side="right") - 1, 0, s.size - 1)
            out = s[idx]
        return float(out) if np.ndim(out) == 0 else out

    def inverse_derivative(self, z):
        """Inverse of the (decreasing) derivative of a concave index function."""
        arr = np.asarray(z, dtype=float)
        if np.any(arr <= 0):
            raise ValueError("inverse_derivative needs z > 0")
        if self.is_power:
            c, p = self._c, self._p
            if p >= 1.0:
                raise ValueError(f"derivative of c*t^{p} is not strictly decreasing")
            out = (arr / (c * p)) ** (1.0 / (p - 1.0))
        else:
            s = self._slopes()
            if np.any(np.diff(s) >= 0):
                raise ValueError("tabulated derivative is not strictly decreasing")
            mid = 0.5 * (self._t[1:] + self._t[:-1])
            if np.any(arr > s[0]) or np.any(arr < s[-1]):
                raise ValueError(f"z outside the tabulated slope range [{s[-1]:.3g}, {s[0]:.3g}]")
            out = np.interp(arr, s[::-1], mid[::-1])
        return float(out) if np.ndim(out) == 0 else out

    def inverse(self, v):
        arr = np.asarray(v, dtype=float)
        if np.any(arr < 0):
            raise ValueError("inverse needs v >= 0")
        if self.is_power:
            out = (arr / self._c) ** (1.0 / self._p)
            if np.any(out > self.domain_upper):
                raise ValueError("value above the range of the function")
        else:
            if np.any(arr > self._v[-1]):
                raise ValueError(f"value above the tabulated range (max {self._v[-1]:.6g})")
            out = np.interp(arr, self._v, self._t)
        return float(out) if np.ndim(out) == 0 else out

    # -- serialization -----------------------------------------------------
    def to_dict(self) -> dict:
        upper = None if math.isinf(self.domain_upper) else self.domain_upper
        if self.is_power:
            return {"form": "power", "c": self._c, "p": self._p, "domain_upper": upper}
        return {"form": "tabulated", "points": np.column_stack([self._t, self._v]).tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> IndexFunction:
        form = d.get("form")
        if form == "power":
            upper = d.get("domain_upper")
            return cls.power(d["c"], d["p"], math.inf if upper is None else upper)
        if form == "tabulated":
            pts = np.asarray(d["points"], dtype=float)
            return cls.tabulated(pts[:, 0], pts[:, 1])
        raise ValueError(f"unknown index-function form {form!r}")

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, s: str) -> IndexFunction:
        return cls.from_dict(json.loads(s))

    def __repr__(self):
        if self.is_power:
            return f"IndexFunction.power(c={self._c:.6g}, p={self._p:.6g})"
        return f"IndexFunction.tabulated(<{self._t.size} points up to {self._t[-1]:.3g}>)"

    def __eq__(self, other):
        if not isinstance(other, IndexFunction):
            return NotImplemented
        if self.is_power != other.is_power:
            return False
        if self.is_power:
            return (self._c, self._p, self.domain_upper) == (other._c, other._p, other.domain_upper)
        return np.array_equal(self._t, other._t) and np.array_equal(self._v, other._v)

    __hash__ = None


def _power_derivative_at_zero(c, p):
    if p < 1:
        return math.inf
    if p == 1:
        return c
    return 0.0


# ---------------------------------------------------------------------------
# numeric sup / inf


def _extremum(objective: Callable[[np.ndarray], np.ndarray], lo: float, hi: float, maximize: bool):
    """Extremum of ``objective(10**u)`` for ``u`` in ``[lo, hi]``.

    Returns ``(value, u_star, at_edge)``; ``at_edge`` flags an optimum on the
    boundary of the scan, i.e. a sup/inf that is not attained inside.
    """
    sign = -1.0 if maximize else 1.0
    grid = np.linspace(lo, hi, N_BRACKETS + 1)
    vals = sign * objective(10.0**grid)
    i = int(np.nanargmin(vals))
    if i == 0 or i == grid.size - 1:
        return sign * vals[i], grid[i], True
    res = optimize.minimize_scalar(
        lambda u: sign * float(objective(np.array([10.0**u]))[0]),
        bracket=(grid[i - 1], grid[i], grid[i + 1]),
        method="golden",
        options={"xtol": 1e-12},
    )
    best = min(res.fun, vals[i])
    return sign * best, (res.x if res.fun <= vals[i] else grid[i]), False


def _search_bounds(f: IndexFunction) -> tuple[float, float]:
    lo, hi = LOG10_RANGE
    if math.isfinite(f.domain_upper):
        hi = min(hi, math.log10(f.domain_upper))
    return lo, hi


def _default_grid(f: IndexFunction, grid) -> np.ndarray:
    if grid is not None:
        g = np.asarray(grid, dtype=float)
    elif f.is_power:
        g = np.logspace(-6, 2, 81)
    else:
        g = f.points[0][1:]
    if np.any(g <= 0):
        raise ValueError("output grid must be positive")
    return g


def _tabulate(grid: np.ndarray, values: list[float]) -> IndexFunction:
    return IndexFunction.tabulated(np.concatenate(([0.0], grid)), np.concatenate(([0.0], values)))


# ---------------------------------------------------------------------------
# transform ladder


def psi2_from_phi3(phi3: IndexFunction, grid=None, numeric: bool = False) -> IndexFunction:
    """T-rate bound from a variational-inequality function.

    ``Psi2(alpha) = sup_{t>0} (Phi3(t) - t**2 / (2 alpha))``.
    """
    if phi3.is_power and not numeric:
        c, k = phi3.coefficient, phi3.exponent
        if k >= 2:
            raise DegenerateTransformError(f"sup is infinite for Phi3 exponent {k} >= 2")
        # stationary point c k t^(k-1) = t / alpha
        coef = (2.0 - k) / (2.0 * k) * (c * k) ** (2.0 / (2.0 - k))
        return IndexFunction.power(coef, k / (2.0 - k))
    g = _default_grid(phi3, grid)
    lo, hi = _search_bounds(phi3)
    out = []
    for a in g:
        val, _, edge = _extremum(lambda t: phi3(t) - t**2 / (2.0 * a), lo, hi, maximize=True)
        if edge and val > 0:
            raise DegenerateTransformError(f"sup not attained inside the search range at alpha={a:g}")
        out.append(val)
    return _tabulate(g, out)


def phi3_from_psi2(psi2: IndexFunction, grid=None, numeric: bool = False) -> IndexFunction:
    """Variational-inequality function from a T-rate.

    ``Phi3(s) = inf_{t>0} (Psi2(t) + s**2 / (2 t))``.
    """
    if psi2.is_power and not numeric:
        c, p = psi2.coefficient, psi2.exponent
        coef = c * (1.0 + p) * (2.0 * c * p) ** (-p / (p + 1.0))
        return IndexFunction.power(coef, 2.0 * p / (p + 1.0))
    g = _default_grid(psi2, grid)
    lo, hi = _search_bounds(psi2)
    out = []
    for s in g:
        val, _, edge = _extremum(lambda t: psi2(t) + s**2 / (2.0 * t), lo, hi, maximize=False)
        if edge:
            raise DegenerateTransformError(f"inf not attained inside the search range at s={s:g}")
        out.append(val)
    return _tabulate(g, out)


def phi4_from_phi3(phi3: IndexFunction, grid=None, numeric: bool = False) -> IndexFunction:
    """Distance-function bound from a variational-inequality function.

    The conjugate ``Phi4(rho) = sup_{t>0} (Phi3(t) - rho t)`` is decreasing
    in ``rho``.  It is returned in the variable ``r = 1/rho`` of the
    distance-function condition, ``D(1/r) <= Psi4(r) = Phi4(1/r)``, which is
    an index function.  Evaluate ``result(1/rho)`` to get ``Phi4(rho)``.
    """
    if phi3.is_power and not numeric:
        c, k = phi3.coefficient, phi3.exponent
        if k >= 1:
            raise DegenerateTransformError(
                f"sup_t(c t^{k} - rho t) is 0 or infinite for exponent {k} >= 1"
            )
        coef = (1.0 - k) * k ** (k / (1.0 - k)) * c ** (1.0 / (1.0 - k))
        return IndexFunction.power(coef, k / (1.0 - k))
    g = _default_grid(phi3, grid)
    lo, hi = _search_bounds(phi3)
    kept, out = [], []
    for r in g:
        rho = 1.0 / r
        val, _, edge = _extremum(lambda t: phi3(t) - rho * t, lo, hi, maximize=True)
        if edge or val <= 0:
            continue
        kept.append(r)
        out.append(val)
    if not kept:
        raise DegenerateTransformError("conjugate is identically 0 or unbounded on the sampled domain")
    return _tabulate(np.asarray(kept), out)


def phi3_from_phi4(psi4: IndexFunction, grid=None, numeric: bool = False) -> IndexFunction:
    """Inverse of :func:`phi4_from_phi3`.

    ``Phi3(s) = inf_{rho>0} (Phi4(rho) + rho s) = inf_{r>0} (Psi4(r) + s / r)``.
    """
    if psi4.is_power and not numeric:
        C, q = psi4.coefficient, psi4.exponent
        coef = (1.0 + q) * q ** (-q / (q + 1.0)) * C ** (1.0 / (q + 1.0))
        return IndexFunction.power(coef, q / (q + 1.0))
    g = _default_grid(psi4, grid)
    lo, hi = _search_bounds(psi4)
    out = []
    for s in g:
        val, _, edge = _extremum(lambda r: psi4(r) + s / r, lo, hi, maximize=False)
        if edge:
            raise DegenerateTransformError(f"inf not attained inside the search range at s={s:g}")
        out.append(val)
    return _tabulate(g, out)


# ---------------------------------------------------------------------------
# companion and a-priori choice


def companion(psi2: IndexFunction) -> IndexFunction:
    """``Theta(alpha) = sqrt(alpha * Psi2(alpha))``."""
    if psi2.is_power:
        return IndexFunction.power(
            math.sqrt(psi2.coefficient), (psi2.exponent + 1.0) / 2.0, psi2.domain_upper
        )
    t, v = psi2.points
    return IndexFunction.tabulated(t, np.sqrt(t * v))


def a_priori_alpha(psi2: IndexFunction, delta: float) -> float:
    """Equilibrating parameter choice ``Theta^{-1}(delta / sqrt 2)``."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    try:
        return companion(psi2).inverse(delta / math.sqrt(2.0))
    except ValueError as exc:
        raise ValueError(f"delta/sqrt(2) = {delta / math.sqrt(2):.3g} is above the range of Theta") from exc


# ---------------------------------------------------------------------------
# KL <-> T-rate


@dataclass(frozen=True)
class KLDescription:
    """Desingularization function ``phi`` with KL constant ``k``.

    ``subgradient_norm`` is the remoteness of the penalty subdifferential at
    the exact solution.
    """

    phi: IndexFunction
    k: float
    subgradient_norm: float

    def __post_init__(self):
        if not self.k > 0:
            raise ValueError("KL constant must be positive")
        if not self.subgradient_norm > 0:
            raise ValueError("subgradient norm must be positive")
        if not self.phi.concave:
            raise ValueError("desingularization function must be concave")
        _check_kl_shape(self.phi)


def _check_kl_shape(phi: IndexFunction):
    """``z -> (dphi)^{-1}(z) z`` must be nonincreasing with limit 0."""
    if phi.is_power:
        if not phi.exponent < 1:
            raise ValueError("(dphi)^{-1}(z) z does not decay for exponent >= 1")
        return
    t, v = phi.points
    s = np.diff(v) / np.diff(t)
    z = np.geomspace(s[-1], s[0], 64)
    prod = phi.inverse_derivative(z) * z
    # z ascending -> product must not increase
    if np.any(np.diff(prod) > 1e-9 * np.max(prod)):
        raise ValueError("(dphi)^{-1}(z) z is not nonincreasing on the sampled slopes")


def psi_from_kl(kl: KLDescription, grid=None) -> IndexFunction:
    """``Psi(t) = (1/t) (dphi)^{-1}(1 / (t k g))`` with ``g`` the subgradient norm."""
    kg = kl.k * kl.subgradient_norm
    phi = kl.phi
    if phi.is_power:
        c, p = phi.coefficient, phi.exponent
        return IndexFunction.power((c * p * kg) ** (1.0 / (1.0 - p)), p / (1.0 - p))
    t, v = phi.points
    s = np.diff(v) / np.diff(t)
    if grid is None:
        # arguments 1/(t k g) must stay inside the slope range
        grid = np.geomspace(1.0 / (kg * s[0]), 1.0 / (kg * s[-1]), 64)[1:-1]
    g = np.asarray(grid, dtype=float)
    vals = phi.inverse_derivative(1.0 / (g * kg)) / g
    return _tabulate(g, vals)


def kl_from_psi(psi: IndexFunction, subgradient_norm: float, grid=None) -> KLDescription:
    """KL description whose derivative is the inverse of ``Psi(1/a) / a``.

    The constant is carried explicitly: ``k = 1 / subgradient_norm`` makes
    :func:`psi_from_kl` an exact left inverse.
    """
    if not subgradient_norm > 0:
        raise ValueError("subgradient norm must be positive")
    k = 1.0 / subgradient_norm
    if psi.is_power:
        c, q = psi.coefficient, psi.exponent
        # Theta_bar(a) = c a^{-(q+1)}  =>  dphi(z) = c^{1/(q+1)} z^{-1/(q+1)}
        p = q / (q + 1.0)
        phi = IndexFunction.power(c ** (1.0 / (q + 1.0)) / p, p)
        return KLDescription(phi, k, subgradient_norm)
    t, v = psi.points
    t, v = t[1:], v[1:]
    # with a = 1/t: Theta_bar(a) = t Psi(t), so dphi(t Psi(t)) = 1/t
    z = t * v
    slope = 1.0 / t
    if grid is not None:
        zg = np.asarray(grid, dtype=float)
        slope = np.interp(zg, z, slope)
        z = zg
    zz = np.concatenate(([0.0], z))
    increments = np.diff(zz) * np.concatenate(([slope[0]], 0.5 * (slope[1:] + slope[:-1])))
    phi = IndexFunction.tabulated(zz, np.cumsum(np.concatenate(([0.0], increments))))
    return KLDescription(phi, k, subgradient_norm)


class KLChoice(NamedTuple):
    alpha: float
    rate_bound: float
    phi_value: float


def kl_alpha_choice(kl: KLDescription | IndexFunction, delta: float) -> KLChoice:
    """``alpha* = 1 / dphi(delta**2)`` with the formal rate ``dphi(delta^2) delta^2``."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    phi = kl.phi if isinstance(kl, KLDescription) else kl
    t = delta**2
    d = phi.derivative(t)
    if math.isinf(d):
        return KLChoice(0.0, math.inf, phi(t))
    return KLChoice(1.0 / d, d * t, phi(t))
