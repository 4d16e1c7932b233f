"""Position environments and rank-based auctions.

A rank-based auction on ``n`` agents is described by its induced
position weights ``w_hat`` (nonincreasing, in [0, 1]); equivalently by
the marginal weights ``alpha_k = w_hat_k - w_hat_{k+1}``, which mix the
k-highest-bids-win auctions. The allocation rule of the k-unit auction
is the Beta(n-k, k) CDF in the agent's quantile.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import betainc, betaln, logsumexp, xlogy

from .distributions import check_quantile
from .exceptions import DegenerateAllocationError, DimensionMismatchError, DomainError

TOL_FEASIBLE = 1e-9


class PaymentFormat(str, enum.Enum):
    FIRST_PRICE = "first_price"
    ALL_PAY = "all_pay"

    @classmethod
    def parse(cls, value) -> "PaymentFormat":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_").replace(" ", "_")
        aliases = {"firstprice": "first_price", "fp": "first_price", "allpay": "all_pay", "ap": "all_pay"}
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise DomainError(f"unknown payment format {value!r}") from None


def _check_weights(w, name: str) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.ndim != 1 or w.size < 1:
        raise DomainError(f"{name} must be a non-empty 1-d sequence")
    if np.any(w < -1e-12) or np.any(w > 1 + 1e-12):
        raise DomainError(f"{name} must lie in [0, 1]")
    if np.any(np.diff(w) > 1e-12):
        raise DomainError(f"{name} must be nonincreasing")
    return np.clip(w, 0.0, 1.0)


@dataclass(frozen=True, eq=False)
class PositionEnvironment:
    """Position weights ``1 >= w_1 >= ... >= w_n >= 0`` (``w_{n+1} = 0``)."""

    weights: np.ndarray

    def __post_init__(self):
        w = _check_weights(self.weights, "position weights")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.weights.size

    @property
    def cumulative(self) -> np.ndarray:
        """``W_0 .. W_n`` with ``W_0 = 0``."""
        return np.concatenate(([0.0], np.cumsum(self.weights)))

    @classmethod
    def k_unit(cls, n: int, k: int) -> "PositionEnvironment":
        return cls(np.r_[np.ones(k), np.zeros(n - k)])

    def __eq__(self, other):
        return isinstance(other, PositionEnvironment) and np.array_equal(self.weights, other.weights)

    def __repr__(self):
        return f"PositionEnvironment(weights={self.weights.tolist()})"


def cumulative_weights(w) -> np.ndarray:
    return np.concatenate(([0.0], np.cumsum(np.asarray(w, dtype=float))))


@dataclass(frozen=True, eq=False)
class RankBasedAuction:
    """Induced position weights plus a payment format."""

    weights: np.ndarray
    payment: PaymentFormat = PaymentFormat.FIRST_PRICE

    def __post_init__(self):
        w = _check_weights(self.weights, "induced weights")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "payment", PaymentFormat.parse(self.payment))

    @property
    def n(self) -> int:
        return self.weights.size

    @property
    def alpha(self) -> np.ndarray:
        """Mixture coefficients ``alpha_1 .. alpha_n`` over k-unit auctions."""
        return self.weights - np.r_[self.weights[1:], 0.0]

    @property
    def cumulative(self) -> np.ndarray:
        return cumulative_weights(self.weights)

    @classmethod
    def from_alpha(cls, alpha, payment=PaymentFormat.FIRST_PRICE) -> "RankBasedAuction":
        alpha = np.asarray(alpha, dtype=float)
        if np.any(alpha < -1e-12):
            raise DomainError("mixture coefficients must be nonnegative")
        w = np.cumsum(np.clip(alpha, 0.0, None)[::-1])[::-1]
        if w[0] > 1 + 1e-12:
            raise DomainError("mixture coefficients must sum to at most 1")
        return cls(np.minimum(w, 1.0), payment)

    @classmethod
    def k_unit(cls, n: int, k: int, payment=PaymentFormat.FIRST_PRICE) -> "RankBasedAuction":
        if not 0 <= k <= n:
            raise DomainError("need 0 <= k <= n")
        return cls(np.r_[np.ones(k), np.zeros(n - k)], payment)

    @classmethod
    def uniform_marginal(cls, n: int, payment=PaymentFormat.FIRST_PRICE) -> "RankBasedAuction":
        """Equal marginal weight ``1/n`` on every k-unit auction."""
        return cls.from_alpha(np.full(n, 1.0 / n), payment)

    def with_payment(self, payment) -> "RankBasedAuction":
        return RankBasedAuction(self.weights, payment)

    def allocation(self) -> "AllocationRule":
        return AllocationRule(self)

    def to_record(self) -> dict:
        return {"n": self.n, "weights": [float(x) for x in self.weights], "payment": self.payment.value}

    @classmethod
    def from_record(cls, rec: dict) -> "RankBasedAuction":
        w = rec["weights"]
        if "n" in rec and int(rec["n"]) != len(w):
            raise DimensionMismatchError(f"record says n={rec['n']} but has {len(w)} weights")
        return cls(np.asarray(w, dtype=float), rec.get("payment", "first_price"))

    def __eq__(self, other):
        return (isinstance(other, RankBasedAuction) and self.payment == other.payment
                and np.array_equal(self.weights, other.weights))

    def __repr__(self):
        return f"RankBasedAuction(weights={self.weights.tolist()}, payment={self.payment.value!r})"


def epsilon_mixture(a: RankBasedAuction, eps: float) -> RankBasedAuction:
    """Run ``a`` w.p. ``1 - eps`` and the uniform-marginal auction w.p. ``eps``.

    Every marginal weight of the result is at least ``eps / n``.
    """
    if not 0 <= eps <= 1:
        raise DomainError("eps must lie in [0, 1]")
    alpha = (1.0 - eps) * a.alpha + eps / a.n
    return RankBasedAuction.from_alpha(alpha, a.payment)


# --- k-unit allocation rules -------------------------------------------------


def _check_nk(n: int, k) -> None:
    if n < 1:
        raise DomainError("n must be at least 1")
    k_arr = np.asarray(k)
    if np.any(k_arr < 0) or np.any(k_arr > n):
        raise DomainError(f"need 0 <= k <= n, got k={k}, n={n}")


def multiunit_alloc(n: int, k: int, q):
    """Probability that quantile ``q`` ranks among the top ``k`` of ``n``.

    ``sum_{i<k} C(n-1, i) q^(n-1-i) (1-q)^i``, i.e. the Beta(n-k, k) CDF.
    """
    _check_nk(n, k)
    q = check_quantile(q)
    if k == 0:
        out = np.zeros_like(q)
    elif k == n:
        out = np.ones_like(q)
    else:
        out = betainc(n - k, k, q)
    return float(out) if np.ndim(q) == 0 else out


def _log_beta_kernel(n: int, k: int, q: np.ndarray) -> np.ndarray:
    # log of (n-k) C(n-1, k-1) q^(n-k-1) (1-q)^(k-1); -inf where it vanishes
    with np.errstate(divide="ignore"):
        return xlogy(n - k - 1, q) + xlogy(k - 1, 1.0 - q) - betaln(n - k, k)


def multiunit_alloc_slope(n: int, k: int, q):
    """``x_k'(q) = (n-k) C(n-1, k-1) q^(n-k-1) (1-q)^(k-1)``; zero for k in {0, n}."""
    _check_nk(n, k)
    q = check_quantile(q)
    if k == 0 or k == n:
        out = np.zeros_like(q)
    else:
        out = np.exp(_log_beta_kernel(n, k, q))
    return float(out) if np.ndim(q) == 0 else out


def is_feasible(env: PositionEnvironment, a: RankBasedAuction, tol: float = TOL_FEASIBLE) -> bool:
    """Cumulative weights of ``a`` are dominated by those of ``env``."""
    if env.n != a.n:
        raise DimensionMismatchError(f"environment has n={env.n}, auction n={a.n}")
    return bool(np.all(a.cumulative[1:] <= env.cumulative[1:] + tol))


def iron_by_rank(a: RankBasedAuction, k1: int, k2: int) -> RankBasedAuction:
    """Average the weights of positions ``k1..k2`` (1-based, inclusive)."""
    if not (1 <= k1 < k2 <= a.n):
        raise DomainError(f"invalid ironing interval [{k1}, {k2}] for n={a.n}")
    w = a.weights.copy()
    seg = w[k1 - 1:k2]
    if np.any(seg != seg[0]):  # averaging equal weights must not perturb them
        w[k1 - 1:k2] = seg.mean()
    return RankBasedAuction(w, a.payment)


def rank_reserve(a: RankBasedAuction, k: int) -> RankBasedAuction:
    """Reject every agent ranked below ``k``."""
    if not 0 <= k <= a.n:
        raise DomainError(f"rank reserve must lie in [0, {a.n}]")
    w = a.weights.copy()
    w[k:] = 0.0
    return RankBasedAuction(w, a.payment)


# --- mixtures ------------------------------------------------------------------


class AllocationRule:
    """``x(q) = sum_k alpha_k x_k(q)`` for a rank-based auction."""

    def __init__(self, auction: RankBasedAuction):
        self.auction = auction
        self.n = auction.n
        self.alpha = auction.alpha
        # x_n' = 0 identically, so the slope mixes only k < n
        self._active = [k for k in range(1, self.n) if self.alpha[k - 1] > 0]

    def x(self, q):
        q = check_quantile(q)
        qa = np.atleast_1d(q)
        out = np.full(qa.shape, self.alpha[-1])
        for k in self._active:
            out = out + self.alpha[k - 1] * betainc(self.n - k, k, qa)
        return float(out[0]) if np.ndim(q) == 0 else out.reshape(q.shape)

    def x_prime(self, q):
        q = check_quantile(q)
        qa = np.atleast_1d(q)
        out = np.zeros(qa.shape)
        for k in self._active:
            out = out + self.alpha[k - 1] * np.exp(_log_beta_kernel(self.n, k, qa))
        return float(out[0]) if np.ndim(q) == 0 else out.reshape(q.shape)

    def x_second(self, q, h: float = 1e-4):
        """Central difference of the analytic slope (one-sided near the ends)."""
        q = check_quantile(q)
        lo = np.clip(q - h, 0.0, 1.0)
        hi = np.clip(q + h, 0.0, 1.0)
        return (self.x_prime(hi) - self.x_prime(lo)) / (hi - lo)

    def inverse_z(self, k: int, q) -> np.ndarray:
        """``x'(q) / ((1-q) x_k'(q))``, the reciprocal of the Z weight."""
        return 1.0 / z_weight(self.auction, k, q)


def mixture_alloc(a: RankBasedAuction, q):
    return AllocationRule(a).x(q)


def mixture_alloc_slope(a: RankBasedAuction, q):
    return AllocationRule(a).x_prime(q)


def z_weight(a: RankBasedAuction, k: int, q):
    """``Z_k(q) = (1-q) x_k'(q) / x'(q)``.

    Evaluated as ``1 / sum_j alpha_j c_j q^(k-j) (1-q)^(j-k-1)`` with the
    common Beta-kernel powers cancelled, so the endpoint limits come out
    exactly (``Z_k(1) = 0``; ``Z_k(0)`` finite) instead of as 0/0.
    """
    n = a.n
    _check_nk(n, k)
    q = check_quantile(q)
    qa = np.atleast_1d(q).astype(float)
    if k == 0 or k == n:
        out = np.zeros(qa.shape)
        return float(out[0]) if np.ndim(q) == 0 else out.reshape(q.shape)
    alpha = a.alpha
    js = [j for j in range(1, n) if alpha[j - 1] > 0]
    if not js:
        raise DegenerateAllocationError("allocation rule is flat: x'(q) = 0 everywhere")
    terms = np.empty((len(js), qa.size))
    with np.errstate(divide="ignore"):
        for row, j in enumerate(js):
            log_c = betaln(n - k, k) - betaln(n - j, j)
            terms[row] = (np.log(alpha[j - 1]) + log_c
                          + xlogy(k - j, qa) + xlogy(j - k - 1, 1.0 - qa))
    # xlogy(0, 0) = 0 takes q^0 = 1 at the boundaries
    log_inv = logsumexp(terms, axis=0)
    out = np.exp(-log_inv)
    return float(out[0]) if np.ndim(q) == 0 else out.reshape(q.shape)


def z_weight_argmax(a: RankBasedAuction, k: int, grid=None, G: int = 4096) -> float:
    """Grid quantile maximising ``Z_k`` (the first one on ties)."""
    if grid is None:
        grid = np.linspace(0.0, 1.0, G)
    grid = np.asarray(grid, dtype=float)
    z = z_weight(a, k, grid)
    return float(grid[int(np.argmax(z))])
