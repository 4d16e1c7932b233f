"""Revenue-optimal rank-based auctions and the approximation checks.

The multi-unit revenue curve ``(k, P_k)`` is ironed to its concave hull;
the optimal iron-by-rank auction averages the environment's weights over
the hull's bridges and drops positions with negative ironed marginal
revenue. The epsilon strictly-monotone variant keeps every consecutive
weight gap at least ``eps``.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .distributions import ValueDistribution, ironed_revenue_curve, is_regular
from .equilibrium import MultiUnitRevenues, multiunit_revenues, simulate_multiunit_revenues
from .exceptions import DimensionMismatchError, DomainError, InfeasibleEpsilonError
from .hull import bridges, upper_concave_envelope
from .positions import PaymentFormat, PositionEnvironment, RankBasedAuction, is_feasible

log = logging.getLogger(__name__)

MC_TRIALS = 100_000
MC_CHUNK = 10_000


@dataclass(frozen=True, eq=False)
class IronedMultiUnitRevenues:
    P: np.ndarray
    P_bar: np.ndarray
    intervals: tuple[tuple[int, int], ...]

    @property
    def n(self) -> int:
        return self.P.size - 1

    @property
    def marginals(self) -> np.ndarray:
        return np.diff(self.P)

    @property
    def ironed_marginals(self) -> np.ndarray:
        return np.diff(self.P_bar)


def iron_multiunit(P) -> IronedMultiUnitRevenues:
    """Concave hull of the points ``(k, P_k)``.

    ``intervals`` lists maximal runs of positions ``(first, last)``, 1-based,
    whose ironed marginals are equal because the hull bridges over them.
    """
    P = np.asarray(P.P if isinstance(P, MultiUnitRevenues) else P, dtype=float)
    ks = np.arange(P.size, dtype=float)
    env, vertices = upper_concave_envelope(ks, P)
    intervals = tuple((a + 1, b) for a, b in bridges(vertices) if np.any(env[a + 1:b] > P[a + 1:b]))
    return IronedMultiUnitRevenues(P, env, intervals)


@dataclass
class OptResult:
    auction: RankBasedAuction
    revenue: float
    environment: PositionEnvironment
    ironed_intervals: list[tuple[int, int]] = field(default_factory=list)
    discarded: list[int] = field(default_factory=list)
    epsilon: float = 0.0
    notes: list[str] = field(default_factory=list)

    @property
    def feasible(self) -> bool:
        return is_feasible(self.environment, self.auction)

    def to_dict(self) -> dict:
        env_W = self.environment.cumulative[1:]
        auc_W = self.auction.cumulative[1:]
        return {
            "weights": [float(x) for x in self.auction.weights],
            "payment": self.auction.payment.value,
            "revenue": float(self.revenue),
            "epsilon": float(self.epsilon),
            "ironed_intervals": [list(iv) for iv in self.ironed_intervals],
            "discarded_positions": list(self.discarded),
            "feasibility": {
                "feasible": self.feasible,
                "environment_cumulative": [float(x) for x in env_W],
                "auction_cumulative": [float(x) for x in auc_W],
                "min_slack": float(np.min(env_W - auc_W)),
            },
            "notes": list(self.notes),
        }


def _check_dims(env: PositionEnvironment, P: MultiUnitRevenues | np.ndarray) -> np.ndarray:
    P = np.asarray(P.P if isinstance(P, MultiUnitRevenues) else P, dtype=float)
    if P.size != env.n + 1:
        raise DimensionMismatchError(f"environment has n={env.n} but got {P.size} revenues")
    return P


def _iron_and_discard(weights: np.ndarray, ironed: IronedMultiUnitRevenues):
    w = weights.copy()
    for first, last in ironed.intervals:
        w[first - 1:last] = w[first - 1:last].mean()
    pbar = ironed.ironed_marginals
    discarded = [k + 1 for k in np.flatnonzero(pbar < 0)]
    w[pbar < 0] = 0.0
    return w, discarded


def optimal_iron_by_rank(env: PositionEnvironment, P, payment=PaymentFormat.FIRST_PRICE) -> OptResult:
    """Optimal rank-based auction for ``env`` given multi-unit revenues ``P``."""
    P = _check_dims(env, P)
    ironed = iron_multiunit(P)
    w, discarded = _iron_and_discard(env.weights, ironed)
    auction = RankBasedAuction(w, payment)
    revenue = float(ironed.ironed_marginals @ auction.weights)
    return OptResult(auction, revenue, env, list(ironed.intervals), discarded)


def rank_auction_revenue(a: RankBasedAuction, P) -> float:
    """``sum_k (w_k - w_{k+1}) P_k``."""
    P = np.asarray(P.P if isinstance(P, MultiUnitRevenues) else P, dtype=float)
    return float(a.alpha @ P[1:])


def max_admissible_epsilon(env: PositionEnvironment) -> float:
    """Largest ``eps`` for which some eps strictly-monotone auction is feasible.

    Feasibility of the zero auction for the reduced weights
    ``y_k = w_k - (n-k) eps`` needs ``Y_k >= 0`` for all k.
    """
    n = env.n
    W = env.cumulative[1:]
    S = np.cumsum(n - np.arange(1, n + 1))
    ratios = [W[k] / S[k] for k in range(n) if S[k] > 0]
    return float(min(ratios)) if ratios else math.inf


def _solve_strict_lp(env: PositionEnvironment, P: np.ndarray, eps: float) -> np.ndarray:
    n = env.n
    # variables w_hat_1..w_hat_n; revenue = sum_k (w_k - w_{k+1}) P_k = sum_k w_k p_k
    p = np.diff(P)
    A, b = [], []
    L = np.tril(np.ones((n, n)))
    A.extend(L)
    b.extend(env.cumulative[1:])
    for k in range(n - 1):
        row = np.zeros(n)
        row[k], row[k + 1] = -1.0, 1.0
        A.append(row)
        b.append(-eps)
    res = linprog(-p, A_ub=np.asarray(A), b_ub=np.asarray(b), bounds=[(0.0, 1.0)] * n, method="highs")
    if res.status != 0:
        raise InfeasibleEpsilonError(f"no feasible eps={eps:g} strictly-monotone auction: {res.message}")
    return np.asarray(res.x)


def epsilon_strict_optimal(env: PositionEnvironment, P, eps: float,
                           payment=PaymentFormat.FIRST_PRICE) -> OptResult:
    """Optimal rank-based auction with ``w_hat_k - w_hat_{k+1} >= eps`` for k < n.

    Construction: reduce to ``y_k = w_k - (n-k) eps``, iron-by-rank optimally
    against ``y`` and add the staircase ``(n-k) eps`` back. When ``y`` is
    not monotone, averaging it would overshoot the environment's
    cumulative weights, so that case is solved exactly as a linear program.
    """
    if eps < 0:
        raise DomainError("eps must be nonnegative")
    P = _check_dims(env, P)
    n = env.n
    stair = (n - np.arange(1, n + 1)) * eps
    y = env.weights - stair
    notes: list[str] = []
    if eps > max_admissible_epsilon(env) + 1e-15:
        raise InfeasibleEpsilonError(
            f"eps={eps:g} exceeds the largest admissible value {max_admissible_epsilon(env):g}")
    ironed = iron_multiunit(P)
    if np.all(np.diff(y) <= 1e-15) and y[-1] >= 0:
        y_hat, discarded = _iron_and_discard(np.clip(y, 0.0, None), ironed)
        w_hat = y_hat + stair
        intervals = list(ironed.intervals)
    else:
        notes.append("reduced weights not monotone; solved as a linear program")
        log.info("eps=%g: reduced weights %s not monotone, using LP", eps, y)
        w_hat = _solve_strict_lp(env, P, eps)
        discarded, intervals = [], list(ironed.intervals)
    w_hat = np.clip(w_hat, 0.0, 1.0)
    auction = RankBasedAuction(w_hat, payment)
    return OptResult(auction, rank_auction_revenue(auction, P), env, intervals, discarded, eps, notes)


def epsilon_mixture_design(env: PositionEnvironment, P, eps: float,
                           payment=PaymentFormat.FIRST_PRICE) -> OptResult:
    """Optimal iron-by-rank w.p. ``1 - eps``, uniform marginals w.p. ``eps``."""
    from .positions import epsilon_mixture

    opt = optimal_iron_by_rank(env, P, payment)
    auction = epsilon_mixture(opt.auction, eps)
    P = _check_dims(env, P)
    return OptResult(auction, rank_auction_revenue(auction, P), env, opt.ironed_intervals,
                     opt.discarded, eps, ["epsilon mixture with the uniform-marginal auction"])


# --- Monte-Carlo approximation checks ------------------------------------------


def _chunk_seeds(seed: int, trials: int, chunk: int = MC_CHUNK):
    """Per-chunk seeds so chunks can run anywhere and merge identically."""
    sizes = [min(chunk, trials - s) for s in range(0, trials, chunk)]
    return [(np.random.SeedSequence([int(seed), i]), size) for i, size in enumerate(sizes)]


@dataclass(frozen=True)
class OptEstimate:
    """Monte-Carlo optimal revenues ``OPT(k, n)`` for k = 0..n (totals, not per agent)."""

    n: int
    revenue: np.ndarray
    stderr: np.ndarray
    trials: int


def optimal_revenue_table(d: ValueDistribution, n: int, trials: int = MC_TRIALS, seed: int = 0,
                          exclude_top: bool = False, G: int = 4096, n_jobs: int = 1) -> OptEstimate:
    """Virtual-surplus estimate of the optimal k-unit revenue for every k at once.

    Serves up to ``k`` of the ``n`` agents with the highest positive ironed
    virtual values.
    """
    if trials < 2:
        raise DomainError("need at least two trials")
    ironed = ironed_revenue_curve(d.revenue_curve(), G=G, exclude_top=exclude_top, n=n)

    def run(seq, size):
        rng = np.random.default_rng(seq)
        q = rng.random((size, n))
        phi = ironed.ironed_virtual_value(q.ravel()).reshape(size, n)
        phi = np.sort(np.maximum(phi, 0.0), axis=1)[:, ::-1]
        surplus = np.concatenate((np.zeros((size, 1)), np.cumsum(phi, axis=1)), axis=1)
        return surplus.sum(axis=0), (surplus ** 2).sum(axis=0)

    parts = _run_chunks(run, _chunk_seeds(seed, trials), n_jobs)
    s1 = sum(p[0] for p in parts)
    s2 = sum(p[1] for p in parts)
    mean = s1 / trials
    var = np.maximum(s2 / trials - mean ** 2, 0.0) * trials / (trials - 1)
    return OptEstimate(n, mean, np.sqrt(var / trials), trials)


def _run_chunks(fn, seeds, n_jobs: int):
    if n_jobs == 1 or len(seeds) == 1:
        return [fn(s, size) for s, size in seeds]
    from joblib import Parallel, delayed

    return Parallel(n_jobs=n_jobs, prefer="threads")(delayed(fn)(s, size) for s, size in seeds)


def myerson_optimal_revenue(d: ValueDistribution, n: int, k: int, trials: int = MC_TRIALS,
                            seed: int = 0, exclude_top: bool = False) -> tuple[float, float]:
    """``OPT(k, n)`` estimate and its standard error."""
    if not 0 <= k <= n:
        raise DomainError("need 0 <= k <= n")
    table = optimal_revenue_table(d, n, trials, seed, exclude_top)
    return float(table.revenue[k]), float(table.stderr[k])


@dataclass(frozen=True)
class ApproxCheck:
    ratio: float
    stderr: float
    threshold: float
    passed: bool
    detail: dict = field(default_factory=dict)


def _ratio(num: float, den: float, den_se: float) -> tuple[float, float]:
    if den <= 0 and num <= 0:
        return 1.0, 0.0
    if den <= 0:
        return math.inf, 0.0
    r = num / den
    return r, r * den_se / den


def check_regular_approx(d: ValueDistribution, n: int, k: int, trials: int = MC_TRIALS,
                         seed: int = 0, P: MultiUnitRevenues | None = None) -> ApproxCheck:
    """``max_{k' <= k} n P_{k'} / OPT(k, n)``; should be at least 1/2 for regular ``d``."""
    if not is_regular(d.revenue_curve()):
        warnings.warn("distribution is not regular; the one-half guarantee does not apply", stacklevel=2)
    if P is None:
        P = multiunit_revenues(d, n)
    opt, se = myerson_optimal_revenue(d, n, k, trials, seed)
    best_k = int(np.argmax(P.P[: k + 1]))
    num = n * float(P.P[best_k])
    r, r_se = _ratio(num, opt, se)
    return ApproxCheck(r, r_se, 0.5, bool(r >= 0.5 - 3 * r_se),
                       {"n": n, "k": k, "best_k": best_k, "rank_revenue": num, "opt": opt, "opt_stderr": se})


def check_irregular_approx(d: ValueDistribution, n: int, q: float, trials: int | None = None,
                           seed: int = 0, P: MultiUnitRevenues | None = None) -> ApproxCheck:
    """``max_{1 <= k <= (1-q) n} n P_k / (n R(q))``; at least 1/4 for any ``d``.

    ``P_k`` comes from quadrature, or from simulated uniform-price auctions
    when ``trials`` is given.
    """
    if not 0 <= q <= 1 - 1 / n + 1e-12:
        raise DomainError(f"need q <= 1 - 1/n = {1 - 1 / n:g}")
    if P is None:
        P_arr, P_se = (multiunit_revenues(d, n).P, np.zeros(n + 1)) if trials is None \
            else simulate_multiunit_revenues(d, n, trials, seed)
    else:
        P_arr, P_se = P.P, np.zeros(n + 1)
    k_max = max(1, int(math.floor((1 - q) * n + 1e-9)))
    ks = np.arange(1, k_max + 1)
    best_k = int(ks[np.argmax(P_arr[ks])])
    Rq = float(d.revenue_curve().R(q))
    if Rq <= 0:
        return ApproxCheck(1.0, 0.0, 0.25, True, {"n": n, "q": q, "R": Rq})
    r = P_arr[best_k] / Rq
    r_se = P_se[best_k] / Rq
    return ApproxCheck(float(r), float(r_se), 0.25, bool(r >= 0.25 - 3 * r_se),
                       {"n": n, "q": q, "best_k": best_k, "R": Rq, "P_k": float(P_arr[best_k])})


def check_position_approx(d: ValueDistribution, env: PositionEnvironment, trials: int = MC_TRIALS,
                          seed: int = 0, regular: bool | None = None,
                          P: MultiUnitRevenues | None = None) -> ApproxCheck:
    """Optimal rank-based revenue over ``sum_k (w_k - w_{k+1}) OPT(k, n)``.

    For irregular ``d`` the benchmark does not iron above quantile ``1 - 1/n``
    and the guarantee drops from 1/2 to 1/4.
    """
    n = env.n
    if regular is None:
        regular = is_regular(d.revenue_curve())
    if P is None:
        P = multiunit_revenues(d, n)
    design = optimal_iron_by_rank(env, P)
    table = optimal_revenue_table(d, n, trials, seed, exclude_top=not regular)
    marg = env.weights - np.r_[env.weights[1:], 0.0]
    bench = float(marg @ table.revenue[1:])
    bench_se = float(np.sqrt(np.sum((marg * table.stderr[1:]) ** 2)))
    num = n * design.revenue
    r, r_se = _ratio(num, bench, bench_se)
    threshold = 0.5 if regular else 0.25
    return ApproxCheck(r, r_se, threshold, bool(r >= threshold - 3 * r_se),
                       {"n": n, "rank_revenue": num, "benchmark": bench, "benchmark_stderr": bench_se,
                        "regular": regular, "weights": design.auction.weights.tolist()})
