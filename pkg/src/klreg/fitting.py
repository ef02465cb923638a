"""Power-law fits in log-log space."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import optimize

from .index_calculus import IndexFunction

__all__ = ["PowerFit", "fit_power_law", "fit_power_envelope"]


@dataclass(frozen=True)
class PowerFit:
    """``value ~ coefficient * abscissa**exponent`` on ``window``.

    ``residual`` is the largest log-space deviation of the fitted samples
    (for envelopes: the lift applied to the quantile line).
    """

    exponent: float
    coefficient: float
    residual: float
    window: tuple[float, float]
    count: int = 0

    def __call__(self, t):
        return self.coefficient * np.asarray(t, dtype=float) ** self.exponent

    def as_index_function(self) -> IndexFunction:
        return IndexFunction.power(self.coefficient, self.exponent)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["window"] = list(self.window)
        return d


def _clean(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError("abscissae and values differ in shape")
    keep = (x > 0) & (y > 0) & np.isfinite(x) & np.isfinite(y)
    return x[keep], y[keep]


def fit_power_law(x, y, trim: int = 0, window=None) -> PowerFit:
    """Least squares on ``(log x, log y)``.

    ``trim`` drops that many points from each end (after sorting by ``x``);
    ``window=(lo, hi)`` restricts to ``lo <= x <= hi``.  Nonpositive values
    are excluded.
    """
    x, y = _clean(x, y)
    order = np.argsort(x)
    x, y = x[order], y[order]
    if trim:
        x, y = x[trim:-trim], y[trim:-trim]
    if window is not None:
        keep = (x >= window[0]) & (x <= window[1])
        x, y = x[keep], y[keep]
    if x.size < 2:
        raise ValueError("need at least two positive samples to fit a power law")
    lx, ly = np.log(x), np.log(y)
    slope, icpt = np.polyfit(lx, ly, 1)
    dev = ly - (icpt + slope * lx)
    return PowerFit(float(slope), math.exp(icpt), float(np.max(np.abs(dev))), (float(x[0]), float(x[-1])), int(x.size))


def fit_power_envelope(x, y, quantile: float = 0.99) -> PowerFit:
    """Upper power-law envelope: quantile regression in log space, then lifted.

    The slope comes from linear quantile regression at ``quantile``; the
    coefficient is then raised just enough that every sample lies on or below
    the envelope.
    """
    x, y = _clean(x, y)
    if x.size < 2:
        raise ValueError("need at least two positive samples")
    lx, ly = np.log(x), np.log(y)
    m = lx.size
    # variables: intercept, slope (free), u+ (m), u- (m)
    cost = np.concatenate(([0.0, 0.0], np.full(m, quantile), np.full(m, 1.0 - quantile)))
    a_eq = np.hstack([np.ones((m, 1)), lx[:, None], np.eye(m), -np.eye(m)])
    bounds = [(None, None), (None, None)] + [(0, None)] * (2 * m)
    res = optimize.linprog(cost, A_eq=a_eq, b_eq=ly, bounds=bounds, method="highs")
    if not res.success:
        raise RuntimeError(f"quantile regression failed: {res.message}")
    icpt, slope = res.x[0], res.x[1]
    # the small floor keeps the touching sample below the envelope after rounding
    lift = max(float(np.max(ly - (icpt + slope * lx))), 0.0) + 1e-12
    return PowerFit(float(slope), math.exp(icpt + lift), lift, (float(x.min()), float(x.max())), int(m))
