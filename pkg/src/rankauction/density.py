"""Nonparametric inference of values and revenue curves from bids.

The bid-function slope is read off a histogram estimate of the bid
density, ``b'(q) = 1 / g(b(q))``; values then follow from the
first-order conditions ``v = b' / x'`` (all-pay) and
``v = b + x b' / x'`` (first-price).
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.isotonic import IsotonicRegression

from .distributions import ValueDistribution, check_quantile
from .equilibrium import BidFunction, bid_function, multiunit_revenues
from .exceptions import DomainError
from .inference import (DEFAULT_N_GRID, EmpiricalBidFunction, estimator_weights, fit_rate,
                        sample_bids, trial_seed)
from .positions import PaymentFormat, RankBasedAuction

log = logging.getLogger(__name__)

V_CEILING = 1.5
CENTRAL_BAND = (0.1, 0.9)


def default_bandwidth(bids, scale: float = 1.0) -> float:
    """``scale * (max bid - min bid) * N**(-1/3)``."""
    bids = np.asarray(bids, dtype=float)
    spread = float(bids.max() - bids.min()) if bids.size else 0.0
    if spread <= 0:
        spread = 1.0
    return scale * spread * bids.size ** (-1.0 / 3.0)


class HistogramDensity:
    """Windowed-count bid density ``g(z) = #{|z - b_i| <= h} / (2 N h)``."""

    kind = "histogram"

    def __init__(self, bids, h: float):
        if not h > 0:
            raise DomainError("bandwidth must be positive")
        self.bids = np.sort(np.asarray(bids, dtype=float))
        self.N = self.bids.size
        self.h = float(h)
        if self.N and self.h * self.N / max(math.log(self.N), 1.0) < 10:
            warnings.warn(f"h N / log N = {self.h * self.N / max(math.log(self.N), 1.0):.3g} < 10: "
                          "the density window holds too few bids", stacklevel=2)

    def counts(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        hi = np.searchsorted(self.bids, z + self.h, side="right")
        lo = np.searchsorted(self.bids, z - self.h, side="left")
        return hi - lo

    def __call__(self, z):
        out = self.counts(z) / (2.0 * self.N * self.h)
        return float(out) if np.ndim(z) == 0 else out

    def inverse(self, z) -> np.ndarray:
        """``1 / g(z)``: the implied bid slope, ``+inf`` (with a warning) on empty windows."""
        g = np.atleast_1d(np.asarray(self(z), dtype=float))
        empty = g == 0
        if np.any(empty):
            warnings.warn(f"{int(empty.sum())} point(s) fall in empty density windows; "
                          "their slope estimate is +inf", stacklevel=2)
        with np.errstate(divide="ignore"):
            out = 1.0 / g
        return float(out[0]) if np.ndim(z) == 0 else out.reshape(np.shape(z))

    def mass(self, points: int = 20001) -> float:
        """Trapezoid integral of the estimate over ``[min bid, max bid]``."""
        if self.N == 0 or self.bids[-1] == self.bids[0]:
            return 1.0
        z = np.linspace(self.bids[0], self.bids[-1], points)
        return float(np.trapezoid(self(z), z))


def histogram_density(fn, h: float, q):
    """``1 / b_hat'(q) = g_hat(b_hat(q))``.

    The window around a sample bid always holds that bid, so this is
    positive; empty windows only arise at other points (see
    ``HistogramDensity.inverse``).
    """
    fn = fn if isinstance(fn, EmpiricalBidFunction) else EmpiricalBidFunction(fn)
    return HistogramDensity(fn.bids, h)(fn(q))


def bid_slope(fn, h: float, q) -> np.ndarray:
    """``b_hat'(q) = 1 / g_hat(b_hat(q))``."""
    fn = fn if isinstance(fn, EmpiricalBidFunction) else EmpiricalBidFunction(fn)
    return HistogramDensity(fn.bids, h).inverse(fn(q))


@dataclass
class ValueEstimate:
    grid: np.ndarray
    v_hat: np.ndarray
    clamp_events: int = 0
    sentinels: int = 0


def estimate_value_fn(fn, a: RankBasedAuction, payment=None, h: float | None = None, grid=None, *,
                      b=None, b_prime=None, isotonic: bool = True,
                      clamp: tuple[float, float] = (0.0, V_CEILING)) -> ValueEstimate:
    """Plug-in values on ``grid`` from the first-order conditions.

    Passing callables ``b`` and ``b_prime`` switches to oracle mode (exact
    bid function and slope); otherwise both come from the sample.
    """
    payment = PaymentFormat.parse(payment or a.payment)
    grid = np.asarray(check_quantile(np.linspace(0, 1, 513) if grid is None else grid), dtype=float)
    rule = a.allocation()
    if b_prime is None:
        fn = fn if isinstance(fn, EmpiricalBidFunction) else EmpiricalBidFunction(fn)
        if h is None:
            h = default_bandwidth(fn.bids)
        slope = bid_slope(fn, h, grid)
        level = fn(grid)
    else:
        slope = np.asarray(b_prime(grid), dtype=float)
        level = np.asarray(b(grid), dtype=float) if b is not None else None
    xp = rule.x_prime(grid)
    with np.errstate(divide="ignore", invalid="ignore"):
        if payment is PaymentFormat.ALL_PAY:
            v = slope / xp
        else:
            if level is None:
                raise DomainError("first-price oracle mode needs the bid function b as well")
            v = level + rule.x(grid) * slope / xp
    sentinels = int(np.sum(~np.isfinite(v)))
    lo, hi = clamp
    clamped = (v < lo) | (v > hi) | ~np.isfinite(v)
    if np.any(clamped):
        log.debug("clamped %d of %d value estimates", int(clamped.sum()), v.size)
    v = np.clip(np.nan_to_num(v, nan=hi, posinf=hi, neginf=lo), lo, hi)
    if isotonic and b_prime is None:
        v = IsotonicRegression(y_min=lo, y_max=hi).fit_transform(grid, v)
    return ValueEstimate(grid, v, int(clamped.sum()), sentinels)


@dataclass
class RevenueCurveEstimate:
    grid: np.ndarray
    v_hat: np.ndarray
    R_hat: np.ndarray
    v_true: np.ndarray | None = None
    R_true: np.ndarray | None = None
    bandwidth: float | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def rel_err(self) -> np.ndarray | None:
        if self.R_true is None:
            return None
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.R_true > 0, np.abs(self.R_hat - self.R_true) / self.R_true, np.nan)

    def sup_error(self, band=CENTRAL_BAND) -> float:
        if self.R_true is None:
            raise DomainError("no reference curve attached")
        m = (self.grid >= band[0]) & (self.grid <= band[1])
        return float(np.max(np.abs(self.R_hat[m] - self.R_true[m])))

    def rows(self):
        rel = self.rel_err
        for i, q in enumerate(self.grid):
            yield {
                "q": float(q),
                "v_true": None if self.v_true is None else float(self.v_true[i]),
                "v_hat": float(self.v_hat[i]),
                "R_true": None if self.R_true is None else float(self.R_true[i]),
                "R_hat": float(self.R_hat[i]),
                "rel_err": None if rel is None or not np.isfinite(rel[i]) else float(rel[i]),
            }


def estimate_revenue_curve(fn, a: RankBasedAuction, payment=None, h: float | None = None, grid=None, *,
                           truth: ValueDistribution | None = None, **kwargs) -> RevenueCurveEstimate:
    """``R_hat(q) = (1 - q) v_hat(q)``, optionally scored against ``truth``."""
    ve = estimate_value_fn(fn, a, payment, h, grid, **kwargs)
    R_hat = np.maximum((1.0 - ve.grid) * ve.v_hat, 0.0)
    R_hat[ve.grid == 1.0] = 0.0
    v_true = R_true = None
    if truth is not None:
        v_true = truth.v(ve.grid)
        R_true = truth.revenue_curve().R(ve.grid)
    return RevenueCurveEstimate(ve.grid, ve.v_hat, R_hat, v_true, R_true, h,
                                {"clamp_events": ve.clamp_events, "sentinels": ve.sentinels})


# --- design diagnostics -------------------------------------------------------------


@dataclass
class SlopeConditionReport:
    grid: np.ndarray
    lower_ok: np.ndarray
    upper_ok: np.ndarray
    samples_ok: np.ndarray

    @property
    def all_ok(self) -> np.ndarray:
        return self.lower_ok & self.upper_ok & self.samples_ok

    @property
    def fraction_passing(self) -> float:
        return float(np.mean(self.all_ok))

    def summary(self) -> dict:
        return {"lower": float(np.mean(self.lower_ok)), "upper": float(np.mean(self.upper_ok)),
                "samples": float(np.mean(self.samples_ok)), "all": self.fraction_passing}


def check_slope_conditions(a: RankBasedAuction, d: ValueDistribution, payment=None, N: int = 10 ** 5,
                           r_N: float | None = None, eps=0.2, grid=None) -> SlopeConditionReport:
    """Pointwise allocation-slope conditions for revenue-curve inference.

    All-pay: ``|x''| / (eps sqrt N) <= x' <= eps r_N / v`` and
    ``N >= (v' / (v eps))^2 / 2``. First-price: ``x' <= x r_N eps`` and
    ``N >= (v' / eps)^2 / 2``. Unspecified constants are taken to be 1.
    """
    payment = PaymentFormat.parse(payment or a.payment)
    if grid is None:
        grid = np.linspace(*CENTRAL_BAND, 161)
    grid = np.asarray(check_quantile(grid), dtype=float)
    if r_N is None:
        r_N = N ** (1.0 / 3.0)
    eps = np.broadcast_to(eps(grid) if callable(eps) else np.asarray(eps, dtype=float), grid.shape)
    rule = a.allocation()
    xp = rule.x_prime(grid)
    xpp = np.abs(rule.x_second(grid))
    v = d.v(grid)
    vp = d.v_prime(grid)
    with np.errstate(divide="ignore", invalid="ignore"):
        lower = xpp / (eps * math.sqrt(N)) <= xp
        if payment is PaymentFormat.ALL_PAY:
            upper = xp <= eps * r_N / v
            samples = N >= 0.5 * (vp / (v * eps)) ** 2
        else:
            upper = xp <= rule.x(grid) * r_N * eps
            samples = N >= 0.5 * (vp / eps) ** 2
    return SlopeConditionReport(grid, np.asarray(lower), np.asarray(upper), np.asarray(samples))


# --- rate separation ---------------------------------------------------------------


@dataclass
class RateSeparation:
    Ns: list[int]
    pk_rmse: list[float]
    curve_rmse: list[float]
    pk_exponent: float
    curve_exponent: float
    k: int
    band: tuple[float, float]
    bandwidth_scale: float
    trials: int
    seed: int

    @property
    def separated(self) -> list[bool]:
        return [c > p for c, p in zip(self.curve_rmse, self.pk_rmse)]


def rate_separation_experiment(d: ValueDistribution, a: RankBasedAuction, N_grid=DEFAULT_N_GRID,
                               seed: int = 0, *, k: int = 1, T: int = 50, band=(0.2, 0.8),
                               bandwidth_scale: float = 1.0, G: int = 121,
                               bid_fn: BidFunction | None = None) -> RateSeparation:
    """Parametric ``P_k`` error versus revenue-curve sup error on shared samples.

    Each trial draws one bid sample and feeds it to both estimators. The
    revenue-curve bandwidth is ``bandwidth_scale * spread * N**(-1/3)``.
    """
    if bid_fn is None:
        bid_fn = bid_function(d, a)
    truth = float(multiunit_revenues(d, a.n).P[k])
    grid = np.linspace(band[0], band[1], G)
    R_true = d.revenue_curve().R(grid)
    pk_rmse, curve_rmse = [], []
    for N in N_grid:
        N = int(N)
        weights = estimator_weights(a, k, N)
        pk_err, curve_err = [], []
        for t in range(T):
            s = sample_bids(d, a, N, trial_seed(seed, N, t), bid_fn=bid_fn)
            fn = EmpiricalBidFunction(s)
            pk_err.append(float(fn.bids @ weights) - truth)
            h = default_bandwidth(fn.bids, bandwidth_scale)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                est = estimate_revenue_curve(fn, a, h=h, grid=grid)
            curve_err.append(float(np.max(np.abs(est.R_hat - R_true))))
        pk_rmse.append(float(np.sqrt(np.mean(np.square(pk_err)))))
        curve_rmse.append(float(np.sqrt(np.mean(np.square(curve_err)))))
    Ns = [int(N) for N in N_grid]
    return RateSeparation(Ns, pk_rmse, curve_rmse, fit_rate(Ns, pk_rmse), fit_rate(Ns, curve_rmse),
                          k, tuple(band), bandwidth_scale, T, int(seed))
