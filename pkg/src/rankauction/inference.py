"""Estimating multi-unit revenues from equilibrium bids.

Both estimators are linear in the sorted bids. For the all-pay format

    P_k = E_q[-Z_k'(q) b(q)],

and for the first-price format ``P_k = E_q[-x(q) Z_k'(q) b(q)]``. With
the empirical step bid function these integrals reduce to fixed weights
per order statistic, computed from ``Z_k`` values only.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np

from .distributions import ValueDistribution, check_quantile
from .equilibrium import BidFunction, bid_function, multiunit_revenues
from .exceptions import DomainError, InsufficientDataError
from .positions import PaymentFormat, RankBasedAuction, z_weight
from .quadrature import gauss_legendre

DEFAULT_TRIALS = 200
DEFAULT_N_GRID = tuple(int(round(10 ** e)) for e in (2, 2.5, 3, 3.5, 4, 4.5, 5))
Q_MIN_BOUND = 1e-6


@dataclass(frozen=True, eq=False)
class BidSampleSet:
    bids: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        b = np.sort(np.asarray(self.bids, dtype=float).ravel())
        if b.size == 0:
            raise InsufficientDataError("empty bid sample")
        if np.any(b < 0):
            raise DomainError("bids must be nonnegative")
        b.setflags(write=False)
        object.__setattr__(self, "bids", b)

    @property
    def N(self) -> int:
        return self.bids.size


def sample_bids(d: ValueDistribution, a: RankBasedAuction, N: int, seed, *,
                bid_fn: BidFunction | None = None, noise: float = 0.0) -> BidSampleSet:
    """Draw ``N`` equilibrium bids: ``q ~ U[0, 1]``, ``b = b(q)``.

    ``noise`` adds uniform measurement error of that half-width (clipped at 0).
    """
    if N < 1:
        raise InsufficientDataError("need at least one sample")
    if bid_fn is None:
        bid_fn = bid_function(d, a)
    rng = np.random.default_rng(seed)
    b = bid_fn(rng.random(N))
    if noise > 0:
        b = np.maximum(b + rng.uniform(-noise, noise, N), 0.0)
    seed_rec = seed if isinstance(seed, (int, np.integer)) else repr(seed)
    return BidSampleSet(b, {"distribution": d.to_dict(), "auction": a.to_record(), "seed": seed_rec,
                            "noise": noise})


class EmpiricalBidFunction:
    """``b_hat(q) = b_(i)`` for ``q`` in ``[(i-1)/N, i/N)``; ``b_hat(1) = b_(N)``."""

    def __init__(self, samples):
        if not isinstance(samples, BidSampleSet):
            samples = BidSampleSet(samples)
        self.samples = samples
        self.bids = samples.bids
        self.N = samples.N

    def __call__(self, q):
        q = check_quantile(q)
        idx = np.minimum(np.floor(np.asarray(q) * self.N).astype(int), self.N - 1)
        out = self.bids[idx]
        return float(out) if np.ndim(q) == 0 else out

    def sup_error(self, bid_fn) -> float:
        """``sup_q |b_hat(q) - b(q)|`` for a monotone reference ``b``."""
        edges = np.arange(self.N + 1) / self.N
        ref = bid_fn(edges)
        return float(max(np.max(np.abs(self.bids - ref[:-1])), np.max(np.abs(self.bids - ref[1:]))))


def empirical_bid(samples) -> EmpiricalBidFunction:
    return EmpiricalBidFunction(samples)


# --- estimator weights -----------------------------------------------------------


@lru_cache(maxsize=64)
def _allpay_weights(weights: tuple, k: int, N: int) -> np.ndarray:
    a = RankBasedAuction(np.asarray(weights), PaymentFormat.ALL_PAY)
    z = z_weight(a, k, np.arange(N + 1) / N)
    return z[:-1] - z[1:]


@lru_cache(maxsize=64)
def _firstprice_weights(weights: tuple, k: int, N: int, order: int = 8) -> np.ndarray:
    # -int_step x Z_k' = -[x Z_k] over the step + int_step x' Z_k
    a = RankBasedAuction(np.asarray(weights), PaymentFormat.FIRST_PRICE)
    rule = a.allocation()
    edges = np.arange(N + 1) / N
    xz = rule.x(edges) * z_weight(a, k, edges)
    nodes, w = gauss_legendre(order)
    pts = (edges[:-1, None] + nodes[None, :] / N).ravel()
    inner = (rule.x_prime(pts) * z_weight(a, k, pts)).reshape(N, order) @ w / N
    return (xz[:-1] - xz[1:]) + inner


def estimator_weights(a: RankBasedAuction, k: int, N: int, payment=None) -> np.ndarray:
    """Coefficient of each order statistic ``b_(i)`` in the ``P_k`` estimate."""
    payment = PaymentFormat.parse(payment or a.payment)
    if not 0 <= k <= a.n:
        raise DomainError(f"need 0 <= k <= n = {a.n}")
    if k in (0, a.n):
        return np.zeros(N)
    key = tuple(float(x) for x in a.weights)
    if payment is PaymentFormat.ALL_PAY:
        return _allpay_weights(key, k, N)
    return _firstprice_weights(key, k, N)


def _as_empirical(fn) -> EmpiricalBidFunction:
    return fn if isinstance(fn, EmpiricalBidFunction) else EmpiricalBidFunction(fn)


def estimate_pk_allpay(fn, a: RankBasedAuction, k: int) -> float:
    """``sum_i b_(i) [Z_k((i-1)/N) - Z_k(i/N)]``."""
    fn = _as_empirical(fn)
    return float(fn.bids @ estimator_weights(a, k, fn.N, PaymentFormat.ALL_PAY))


def estimate_pk_firstprice(fn, a: RankBasedAuction, k: int) -> float:
    """``sum_i b_(i) (-int_{(i-1)/N}^{i/N} x(q) Z_k'(q) dq)``."""
    fn = _as_empirical(fn)
    return float(fn.bids @ estimator_weights(a, k, fn.N, PaymentFormat.FIRST_PRICE))


def estimate_pk(fn, a: RankBasedAuction, k: int, payment=None) -> float:
    payment = PaymentFormat.parse(payment or a.payment)
    if payment is PaymentFormat.ALL_PAY:
        return estimate_pk_allpay(fn, a, k)
    return estimate_pk_firstprice(fn, a, k)


def estimate_all_pk(fn, a: RankBasedAuction, payment=None) -> np.ndarray:
    """``P_hat_0 .. P_hat_n`` (the ends are 0 by construction)."""
    fn = _as_empirical(fn)
    return np.array([estimate_pk(fn, a, k, payment) for k in range(a.n + 1)])


# --- theoretical bounds ---------------------------------------------------------


def _sup_on_grid(f, G: int, q_min: float) -> float:
    grid = np.linspace(q_min, 1.0 - q_min, G)
    return float(np.max(f(grid)))


def _saturating_sup(f, G: int, q_min: float, name: str) -> float:
    coarse = _sup_on_grid(f, G, q_min)
    fine = _sup_on_grid(f, 4 * G, q_min / 100)
    if fine > coarse * 1.01 + 1e-12:
        warnings.warn(f"sup of {name} keeps growing under grid refinement "
                      f"({coarse:.4g} -> {fine:.4g}); the bound may be unbounded", stacklevel=3)
    return fine


def theoretical_bound(a: RankBasedAuction, k: int, N: int, payment=None, *, G: int = 4096,
                      q_min: float = Q_MIN_BOUND, eps: float | None = None) -> float:
    """Root-mean-square error bound for ``P_hat_k`` from ``N`` bids.

    All-pay: ``sqrt(2/N) sup x' sup Z_k``. First-price:
    ``sqrt(2/N) sup(x'/x) sup(x Z_k)``. With ``eps`` given, ``sup Z_k`` is
    replaced by ``n / eps`` (the epsilon-mixture forms).
    """
    payment = PaymentFormat.parse(payment or a.payment)
    if k in (0, a.n):
        return 0.0
    rule = a.allocation()
    root = math.sqrt(2.0 / N)
    if payment is PaymentFormat.ALL_PAY:
        s1 = _saturating_sup(rule.x_prime, G, q_min, "x'")
        s2 = a.n / eps if eps else _saturating_sup(lambda q: z_weight(a, k, q), G, q_min, "Z_k")
    else:
        s1 = _saturating_sup(lambda q: rule.x_prime(q) / rule.x(q), G, q_min, "x'/x")
        s2 = a.n / eps if eps else _saturating_sup(lambda q: rule.x(q) * z_weight(a, k, q), G, q_min, "x Z_k")
    return root * s1 * s2


def bid_function_bound(bid_fn: BidFunction, N: int) -> float:
    """``sup_q b'(q) / sqrt(2N)`` from the tabulated bids."""
    slope = np.diff(bid_fn.bids) / np.diff(bid_fn.grid)
    return float(np.max(slope) / math.sqrt(2.0 * N))


# --- experiments ---------------------------------------------------------------


@dataclass
class EstimationReport:
    N: int
    k: int
    payment: str
    trials: int
    seed: int
    truth: float
    estimates: np.ndarray
    rmse: float
    bias: float
    bid_sup_rmse: float
    bound: float
    bound_ratio: float
    bid_bound: float
    distribution: dict = field(default_factory=dict)
    auction: dict = field(default_factory=dict)
    exponent: float | None = None

    def row(self) -> dict:
        d = asdict(self)
        d.pop("estimates")
        d["distribution"] = d["distribution"].get("family", "")
        d["auction"] = " ".join(f"{w:.6g}" for w in self.auction.get("weights", []))
        return d

    def to_dict(self) -> dict:
        d = asdict(self)
        d["estimates"] = [float(x) for x in self.estimates]
        return d


def trial_seed(seed: int, N: int, t: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed), int(N), int(t)])


def _run_trials(fn, T: int, n_jobs: int):
    if n_jobs == 1:
        return [fn(t) for t in range(T)]
    from joblib import Parallel, delayed

    return Parallel(n_jobs=n_jobs, prefer="threads")(delayed(fn)(t) for t in range(T))


def mse_experiment(d: ValueDistribution, a: RankBasedAuction, k: int, N: int, T: int = DEFAULT_TRIALS,
                   seed: int = 0, *, truth: float | None = None, bid_fn: BidFunction | None = None,
                   noise: float = 0.0, n_jobs: int = 1) -> EstimationReport:
    """``T`` independent sample-and-estimate trials at sample size ``N``."""
    if T < 1:
        raise InsufficientDataError("need at least one trial")
    if T < 30:
        warnings.warn("fewer than 30 trials: error estimates will be noisy", stacklevel=2)
    if bid_fn is None:
        bid_fn = bid_function(d, a)
    if truth is None:
        truth = float(multiunit_revenues(d, a.n).P[k])
    weights = estimator_weights(a, k, N)

    def one(t):
        s = sample_bids(d, a, N, trial_seed(seed, N, t), bid_fn=bid_fn, noise=noise)
        fn = EmpiricalBidFunction(s)
        return float(fn.bids @ weights), fn.sup_error(bid_fn)

    out = _run_trials(one, T, n_jobs)
    est = np.array([o[0] for o in out])
    sup = np.array([o[1] for o in out])
    err = est - truth
    rmse = float(np.sqrt(np.mean(err ** 2)))
    bound = theoretical_bound(a, k, N)
    return EstimationReport(
        N=N, k=k, payment=a.payment.value, trials=T, seed=int(seed), truth=truth, estimates=est,
        rmse=rmse, bias=float(err.mean()), bid_sup_rmse=float(np.sqrt(np.mean(sup ** 2))),
        bound=bound, bound_ratio=rmse / bound if bound > 0 else math.inf,
        bid_bound=bid_function_bound(bid_fn, N), distribution=d.to_dict(), auction=a.to_record(),
    )


def fit_rate(Ns, errors) -> float:
    """Least-squares slope of ``log error`` against ``log N``."""
    Ns = np.asarray(Ns, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if Ns.size != errors.size:
        raise DomainError("Ns and errors must have equal length")
    if Ns.size < 4:
        raise InsufficientDataError("need at least four sample sizes")
    if math.log10(Ns.max() / Ns.min()) < 2 - 1e-9:
        raise InsufficientDataError("sample sizes must span at least two decades")
    if np.any(errors <= 0):
        raise DomainError("errors must be positive")
    slope, _ = np.polyfit(np.log(Ns), np.log(errors), 1)
    return float(slope)


@dataclass
class RateSweep:
    reports: list[EstimationReport]
    exponent: float
    bid_exponent: float

    @property
    def Ns(self) -> list[int]:
        return [r.N for r in self.reports]


def rate_sweep(d: ValueDistribution, a: RankBasedAuction, k: int, N_grid=DEFAULT_N_GRID,
               T: int = DEFAULT_TRIALS, seed: int = 0, *, n_jobs: int = 1) -> RateSweep:
    bid_fn = bid_function(d, a)
    truth = float(multiunit_revenues(d, a.n).P[k])
    reports = [mse_experiment(d, a, k, int(N), T, seed, truth=truth, bid_fn=bid_fn, n_jobs=n_jobs)
               for N in N_grid]
    exponent = fit_rate([r.N for r in reports], [r.rmse for r in reports])
    bid_exponent = fit_rate([r.N for r in reports], [r.bid_sup_rmse for r in reports])
    for r in reports:
        r.exponent = exponent
    return RateSweep(reports, exponent, bid_exponent)
