"""Value distributions indexed by quantile, revenue curves and ironing.

Every family is given by its quantile function ``v(q) = F^{-1}(q)`` on
[0, 1] with values in [0, 1]. Revenue curves, virtual values and their
ironed versions are derived from ``v`` and its slope.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .exceptions import DomainError
from .hull import bridges, upper_concave_envelope

H_FD = 1e-5
GRID_SIZE = 4096
TOL_CONCAVE = 1e-9


def check_quantile(q, *, open_interval: bool = False) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if np.any(~np.isfinite(q)):
        raise DomainError("quantile must be finite")
    if open_interval:
        if np.any((q <= 0.0) | (q >= 1.0)):
            raise DomainError(f"quantile must lie in (0, 1), got {q}")
    elif np.any((q < 0.0) | (q > 1.0)):
        raise DomainError(f"quantile must lie in [0, 1], got {q}")
    return q


def _scalar_or_array(q, out):
    return float(out) if np.ndim(q) == 0 else out


class ValueDistribution:
    """Base class; subclasses implement ``_v`` and optionally ``_v_prime``."""

    family: str = "abstract"

    def _v(self, q: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _v_prime(self, q: np.ndarray) -> np.ndarray:
        # central difference, one-sided within H_FD of the boundary
        lo = np.clip(q - H_FD, 0.0, 1.0)
        hi = np.clip(q + H_FD, 0.0, 1.0)
        return (self._v(hi) - self._v(lo)) / (hi - lo)

    @property
    def breakpoints(self) -> tuple[float, ...]:
        """Quantiles where ``v'`` may jump; used to split quadrature."""
        return ()

    def params(self) -> dict:
        return {}

    def v(self, q):
        q = check_quantile(q)
        return _scalar_or_array(q, self._v(np.atleast_1d(q)).reshape(q.shape))

    def v_prime(self, q):
        q = check_quantile(q)
        return _scalar_or_array(q, self._v_prime(np.atleast_1d(q)).reshape(q.shape))

    def revenue_curve(self) -> "RevenueCurve":
        return RevenueCurve(self)

    def to_dict(self) -> dict:
        return {"family": self.family, **self.params()}

    def __repr__(self) -> str:
        args = ", ".join(f"{k}={v!r}" for k, v in self.params().items())
        return f"{type(self).__name__}({args})"

    def __eq__(self, other) -> bool:
        return type(self) is type(other) and self.params() == other.params()

    def __hash__(self) -> int:
        return hash((type(self).__name__, repr(self.params())))


class Uniform01(ValueDistribution):
    family = "uniform01"

    def _v(self, q):
        return np.asarray(q, dtype=float).copy()

    def _v_prime(self, q):
        return np.ones_like(q, dtype=float)


class TruncatedExponential(ValueDistribution):
    """Exponential(rate) conditioned on [0, 1]."""

    family = "truncated_exponential"

    def __init__(self, rate: float = 1.0):
        if not rate > 0:
            raise DomainError("rate must be positive")
        self.rate = float(rate)
        self._mass = -math.expm1(-self.rate)

    def params(self):
        return {"rate": self.rate}

    def _v(self, q):
        return -np.log1p(-q * self._mass) / self.rate

    def _v_prime(self, q):
        return self._mass / (self.rate * (1.0 - q * self._mass))


class PiecewiseLinearQuantile(ValueDistribution):
    """Quantile function interpolating knots ``(q, v)`` linearly.

    Knots must start at q=0, end at q=1, be strictly increasing in q and
    nondecreasing in v, with values inside [0, 1].
    """

    family = "piecewise_linear"

    def __init__(self, knots: Sequence[Sequence[float]]):
        k = np.asarray(knots, dtype=float)
        if k.ndim != 2 or k.shape[1] != 2 or k.shape[0] < 2:
            raise DomainError("knots must be a list of at least two (q, v) pairs")
        qs, vs = k[:, 0], k[:, 1]
        if qs[0] != 0.0 or qs[-1] != 1.0:
            raise DomainError("knots must span q = 0 to q = 1")
        if np.any(np.diff(qs) <= 0):
            raise DomainError("knot quantiles must be strictly increasing")
        if np.any(np.diff(vs) < 0):
            raise DomainError("knot values must be nondecreasing")
        if vs[0] < 0 or vs[-1] > 1:
            raise DomainError("values must lie in [0, 1]")
        self._qs = qs
        self._vs = vs
        self._slopes = np.diff(vs) / np.diff(qs)

    @property
    def knots(self) -> list[tuple[float, float]]:
        return [(float(a), float(b)) for a, b in zip(self._qs, self._vs)]

    def params(self):
        return {"knots": self.knots}

    @property
    def breakpoints(self):
        return tuple(float(x) for x in self._qs[1:-1])

    def _v(self, q):
        return np.interp(q, self._qs, self._vs)

    def _v_prime(self, q):
        # right slope; left slope at q = 1
        seg = np.clip(np.searchsorted(self._qs, q, side="right") - 1, 0, self._slopes.size - 1)
        return self._slopes[seg]


class BimodalIrregular(PiecewiseLinearQuantile):
    """Two near-atoms of values joined by a thin bridge of quantiles.

    Quantiles ``[0, 1 - high_mass - bridge]`` map onto a band of width
    ``width`` around ``low``; the top ``high_mass`` quantiles onto a band
    around ``high``. The bridge keeps ``v`` continuous. With the defaults
    the revenue curve dips just below ``q = 0.9``, so it is not concave.
    """

    family = "bimodal_irregular"

    def __init__(self, low: float = 0.3, high: float = 0.9, high_mass: float = 0.1,
                 width: float = 0.02, bridge: float = 0.01):
        if not (0 < high_mass < 1 and 0 < bridge < 1 - high_mass):
            raise DomainError("need 0 < high_mass and 0 < bridge < 1 - high_mass")
        if not (0 <= low - width / 2 and low + width / 2 <= high - width / 2 and high + width / 2 <= 1):
            raise DomainError("value bands must be ordered and inside [0, 1]")
        self.low, self.high, self.high_mass = float(low), float(high), float(high_mass)
        self.width, self.bridge = float(width), float(bridge)
        q1 = 1.0 - high_mass - bridge
        q2 = 1.0 - high_mass
        half = width / 2
        super().__init__([(0.0, low - half), (q1, low + half), (q2, high - half), (1.0, high + half)])

    def params(self):
        return {"low": self.low, "high": self.high, "high_mass": self.high_mass,
                "width": self.width, "bridge": self.bridge}


FAMILIES = {
    cls.family: cls
    for cls in (Uniform01, TruncatedExponential, PiecewiseLinearQuantile, BimodalIrregular)
}


def distribution_from_dict(spec: dict) -> ValueDistribution:
    """Build a distribution from ``{"family": name, **params}``."""
    spec = dict(spec)
    try:
        cls = FAMILIES[spec.pop("family")]
    except KeyError as exc:
        raise DomainError(f"unknown or missing distribution family: {exc}") from None
    return cls(**spec)


# --- revenue curves ----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RevenueCurve:
    """``R(q) = v(q) (1 - q)`` with ``R(0) = R(1) = 0`` by convention."""

    underlying: ValueDistribution

    def R(self, q):
        q = check_quantile(q)
        qa = np.atleast_1d(q)
        out = self.underlying._v(qa) * (1.0 - qa)
        out = np.where((qa == 0.0) | (qa == 1.0), 0.0, out)
        return _scalar_or_array(q, out.reshape(q.shape))

    def R_prime(self, q):
        """Slope of ``v(q)(1 - q)`` (the interior formula, also at endpoints)."""
        q = check_quantile(q)
        qa = np.atleast_1d(q)
        d = self.underlying
        out = d._v_prime(qa) * (1.0 - qa) - d._v(qa)
        return _scalar_or_array(q, out.reshape(q.shape))

    def _R_raw(self, q):
        return self.underlying._v(q) * (1.0 - q)

    def _R_prime_raw(self, q):
        d = self.underlying
        return d._v_prime(q) * (1.0 - q) - d._v(q)

    def revenue_at(self, q):
        return self.R(q)

    def virtual_value(self, q):
        """``-R'(q) = v(q) - (1 - q) v'(q)``; positive where serving pays."""
        q = check_quantile(q)
        return -self.R_prime(q) if np.ndim(q) else -float(self.R_prime(q))


def value_at(d: ValueDistribution, q):
    return d.v(q)


def revenue_at(rc: RevenueCurve, q):
    return rc.R(q)


def virtual_value(rc: RevenueCurve, q):
    return rc.virtual_value(q)


@dataclass(frozen=True, eq=False)
class IronedRevenueCurve:
    """Smallest concave majorant of ``R`` sampled on a uniform grid.

    With ``exclude_top`` the majorant is taken on ``[0, 1 - 1/n]`` only and
    ``R`` is kept verbatim above that quantile.
    """

    curve: RevenueCurve
    grid: np.ndarray
    R_grid: np.ndarray
    R_bar: np.ndarray
    intervals: tuple[tuple[float, float], ...] = field(default=())
    exclude_top: bool = False
    cutoff: float = 1.0

    def __call__(self, q):
        q = check_quantile(q)
        return np.interp(q, self.grid, self.R_bar)

    def in_ironed_interval(self, q) -> np.ndarray:
        q = np.atleast_1d(np.asarray(q, dtype=float))
        mask = np.zeros(q.shape, dtype=bool)
        for lo, hi in self.intervals:
            mask |= (q > lo) & (q < hi)
        return mask

    def ironed_virtual_value(self, q):
        """``-R_bar'(q)``: analytic off ironed intervals, the chord slope on them."""
        q = check_quantile(q)
        qa = np.atleast_1d(q)
        out = -self.curve._R_prime_raw(qa)
        for lo, hi in self.intervals:
            inside = (qa > lo) & (qa < hi)
            if np.any(inside):
                slope = (np.interp(hi, self.grid, self.R_bar) - np.interp(lo, self.grid, self.R_bar)) / (hi - lo)
                out = np.where(inside, -slope, out)
        return _scalar_or_array(q, out.reshape(q.shape))


def ironed_revenue_curve(rc: RevenueCurve, G: int = GRID_SIZE, exclude_top: bool = False,
                         n: int | None = None) -> IronedRevenueCurve:
    if G < 16:
        raise DomainError("grid size must be at least 16")
    grid = np.linspace(0.0, 1.0, G)
    R = rc.R(grid)
    cutoff = 1.0
    if exclude_top:
        if n is None or n < 2:
            raise DomainError("exclude_top needs the agent count n >= 2")
        cutoff = 1.0 - 1.0 / n
        grid = np.union1d(grid, [cutoff])
        R = rc.R(grid)
    m = int(np.searchsorted(grid, cutoff, side="right"))
    R_bar = R.copy()
    env, vertices = upper_concave_envelope(grid[:m], R[:m])
    R_bar[:m] = env
    intervals = tuple(
        (float(grid[a]), float(grid[b])) for a, b in bridges(vertices)
        if np.any(env[a + 1:b] > R[a + 1:b])
    )
    return IronedRevenueCurve(rc, grid, R, R_bar, intervals, exclude_top, cutoff)


def is_regular(rc: RevenueCurve, G: int = GRID_SIZE, tol: float = TOL_CONCAVE) -> bool:
    """Whether the sampled revenue curve is concave within ``tol``."""
    grid = np.linspace(0.0, 1.0, G)
    second = np.diff(rc.R(grid), 2)
    return bool(np.all(second <= tol))
