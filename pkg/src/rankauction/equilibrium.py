"""Symmetric Bayes-Nash equilibrium bids and revenues of rank-based auctions.

With ``I(q) = int_0^q v(t) x'(t) dt`` the equilibrium bid is ``I(q)``
in the all-pay format and ``I(q) / x(q)`` in the first-price format.
Per-agent revenue is ``E[R(q) x'(q)]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distributions import ValueDistribution, check_quantile
from .exceptions import DegenerateAllocationError, DomainError
from .positions import AllocationRule, PaymentFormat, RankBasedAuction, multiunit_alloc_slope
from .quadrature import TOL_QUAD, cumulative_integral, integrate

BID_GRID = 8193
Q_MIN = 1e-8
TOL_BNE = 1e-4


@dataclass(frozen=True, eq=False)
class BidFunction:
    """Equilibrium bids tabulated on a quantile grid, read by linear interpolation."""

    payment: PaymentFormat
    grid: np.ndarray
    bids: np.ndarray

    def __call__(self, q):
        q = check_quantile(q)
        out = np.interp(q, self.grid, self.bids)
        return float(out) if np.ndim(q) == 0 else out

    def inverse(self, z) -> np.ndarray:
        """Largest grid-interpolated quantile whose bid does not exceed ``z``; 0 below ``b(0)``."""
        z = np.asarray(z, dtype=float)
        out = np.interp(z, self.bids, self.grid, left=0.0, right=1.0)
        return out


def _as_rule(x) -> AllocationRule:
    if isinstance(x, AllocationRule):
        return x
    if isinstance(x, RankBasedAuction):
        return x.allocation()
    raise TypeError("expected a RankBasedAuction or AllocationRule")


def _bid_integral(d: ValueDistribution, rule: AllocationRule, grid: np.ndarray) -> np.ndarray:
    def f(t):
        return d._v(t) * rule.x_prime(t)
    return cumulative_integral(f, grid, breakpoints=d.breakpoints)


def _finish_bids(d, rule, payment, grid, integral):
    if payment is PaymentFormat.ALL_PAY:
        return integral
    x = rule.x(grid)
    if float(rule.x(1.0)) <= 0:  # x is nondecreasing, so x = 0 everywhere
        raise DegenerateAllocationError("first-price bid undefined: x = 0 on [0, q]")
    with np.errstate(divide="ignore", invalid="ignore"):
        b = integral / x
    # x(0) = 0: b(q) -> v(0) as q -> 0; also used where x(q) underflows
    small = (x <= 1e-300) | ((grid < Q_MIN) & (rule.x(0.0) == 0.0))
    if np.any(small):
        b = np.where(small, float(d._v(np.zeros(1))[0]), b)
    return b


def allpay_bid(d: ValueDistribution, x, q):
    """``b(q) = int_0^q v(t) x'(t) dt``."""
    q = check_quantile(q)
    rule = _as_rule(x)
    qa = np.atleast_1d(q).ravel()
    order = np.argsort(qa)
    grid = np.concatenate(([0.0], qa[order]))
    vals = _bid_integral(d, rule, grid)[1:]
    out = np.empty_like(qa)
    out[order] = vals
    return float(out[0]) if np.ndim(q) == 0 else out.reshape(np.shape(q))


def firstprice_bid(d: ValueDistribution, x, q):
    """``b(q) = int_0^q v(t) x'(t) dt / x(q)``, with ``b(0) = v(0)`` when ``x(0) = 0``."""
    q = check_quantile(q)
    rule = _as_rule(x)
    qa = np.atleast_1d(q).ravel()
    order = np.argsort(qa)
    grid = np.concatenate(([0.0], qa[order]))
    vals = _finish_bids(d, rule, PaymentFormat.FIRST_PRICE, grid, _bid_integral(d, rule, grid))[1:]
    out = np.empty_like(qa)
    out[order] = vals
    return float(out[0]) if np.ndim(q) == 0 else out.reshape(np.shape(q))


def bid_function(d: ValueDistribution, a: RankBasedAuction, grid=None, G: int = BID_GRID) -> BidFunction:
    """Tabulate the equilibrium bid function of ``a`` under ``d``."""
    if grid is None:
        grid = np.linspace(0.0, 1.0, G)
    grid = np.asarray(check_quantile(grid), dtype=float)
    if grid[0] != 0.0 or np.any(np.diff(grid) <= 0):
        raise DomainError("bid grid must start at 0 and be strictly increasing")
    rule = a.allocation()
    bids = _finish_bids(d, rule, a.payment, grid, _bid_integral(d, rule, grid))
    bids = np.maximum.accumulate(bids)
    return BidFunction(a.payment, grid, bids)


# --- revenues ------------------------------------------------------------------


def per_agent_revenue(d: ValueDistribution, x, tol: float = TOL_QUAD) -> float:
    """``E_q[R(q) x'(q)]``."""
    rule = _as_rule(x)
    rc = d.revenue_curve()
    return integrate(lambda t: rc._R_raw(t) * rule.x_prime(t), breakpoints=d.breakpoints, tol=tol)


def per_agent_revenue_by_slope(d: ValueDistribution, x, tol: float = TOL_QUAD) -> float:
    """``-E_q[R'(q) x(q)]`` plus the boundary term ``-v(0) x(0)``.

    ``R`` jumps from ``R(0) = 0`` to ``v(0)`` at the left end, so the
    boundary term is nonzero only when ``v(0) > 0`` and ``x(0) > 0``.
    """
    rule = _as_rule(x)
    rc = d.revenue_curve()
    body = -integrate(lambda t: rc._R_prime_raw(t) * rule.x(t), breakpoints=d.breakpoints, tol=tol)
    return body - float(d._v(np.zeros(1))[0]) * rule.x(0.0)


@dataclass(frozen=True, eq=False)
class MultiUnitRevenues:
    """Per-agent revenues ``P_0 .. P_n`` of the k-highest-bids-win auctions."""

    P: np.ndarray

    def __post_init__(self):
        P = np.asarray(self.P, dtype=float).copy()
        if P.ndim != 1 or P.size < 2:
            raise DomainError("need P_0 .. P_n with n >= 1")
        P.setflags(write=False)
        object.__setattr__(self, "P", P)

    @property
    def n(self) -> int:
        return self.P.size - 1

    @property
    def marginals(self) -> np.ndarray:
        """``p_k = P_k - P_{k-1}`` for k = 1..n."""
        return np.diff(self.P)

    def revenue(self, a: RankBasedAuction) -> float:
        """Per-agent revenue ``sum_k alpha_k P_k`` of a rank-based auction."""
        if a.n != self.n:
            raise DomainError(f"auction has n={a.n}, revenues n={self.n}")
        return float(a.alpha @ self.P[1:])

    def __getitem__(self, k):
        return self.P[k]

    def __repr__(self):
        return f"MultiUnitRevenues(P={self.P.tolist()})"


def multiunit_revenues(d: ValueDistribution, n: int, tol: float = TOL_QUAD) -> MultiUnitRevenues:
    """``P_k = E_q[R(q) x_k'(q)]`` for k = 0..n (``P_0 = P_n = 0``)."""
    if n < 2:
        raise DomainError("need n >= 2")
    rc = d.revenue_curve()
    P = np.zeros(n + 1)
    for k in range(1, n):
        P[k] = integrate(lambda t, k=k: rc._R_raw(t) * multiunit_alloc_slope(n, k, t),
                         breakpoints=d.breakpoints, tol=tol)
    return MultiUnitRevenues(np.maximum(P, 0.0))


def simulate_multiunit_revenues(d: ValueDistribution, n: int, trials: int, seed: int):
    """Monte-Carlo ``P_k`` from truthful uniform-price auctions.

    By revenue equivalence the k-unit auction collects ``k`` times the
    (k+1)-th highest value; dividing by ``n`` gives the per-agent figure.
    Returns ``(P, stderr)``, both of length n+1.
    """
    rng = np.random.default_rng(seed)
    q = rng.random((trials, n))
    vals = np.sort(d._v(q.ravel()).reshape(trials, n), axis=1)[:, ::-1]
    ks = np.arange(1, n)
    per = vals[:, ks] * ks / n  # vals[:, k] is the (k+1)-th highest
    P = np.zeros(n + 1)
    se = np.zeros(n + 1)
    P[1:n] = per.mean(axis=0)
    se[1:n] = per.std(axis=0, ddof=1) / np.sqrt(trials)
    return P, se


# --- equilibrium verification ----------------------------------------------------


def verify_bne(d: ValueDistribution, a: RankBasedAuction, bf: BidFunction, grid=None, G: int = 512) -> float:
    """Largest gain from deviating to another type's bid (or to bidding 0).

    Utilities: first-price ``(v(q) - z) x(b^{-1}(z))``, all-pay
    ``v(q) x(b^{-1}(z)) - z``. A bid below ``b(0)`` wins like the lowest type.
    """
    if grid is None:
        grid = np.linspace(0.0, 1.0, G)
    q = np.asarray(check_quantile(grid), dtype=float)
    if q.size <= 1:
        return 0.0
    rule = a.allocation()
    b = bf(q)
    v = d.v(q)
    dev_bids = np.concatenate((b, [0.0]))
    dev_alloc = np.concatenate((rule.x(q), [rule.x(float(bf.inverse(0.0)))]))
    if bf.payment is PaymentFormat.FIRST_PRICE:
        u = (v[:, None] - dev_bids[None, :]) * dev_alloc[None, :]
    else:
        u = v[:, None] * dev_alloc[None, :] - dev_bids[None, :]
    own = np.diag(u[:, :-1])
    return float(max(0.0, np.max(u - own[:, None])))
