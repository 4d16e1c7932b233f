"""scikit-learn style estimators over bid samples.

``MultiUnitRevenueEstimator`` turns a bid sample into ``P_hat_0..P_hat_n``;
``RankAuctionDesigner`` turns multi-unit revenues into a rank-based
auction; chained in a ``Pipeline`` they design an auction from bids.
``RevenueCurveEstimator`` fits the nonparametric revenue curve.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .density import default_bandwidth, estimate_revenue_curve, estimate_value_fn
from .design import epsilon_mixture_design, epsilon_strict_optimal, optimal_iron_by_rank
from .exceptions import DomainError, ValidationError
from .inference import EmpiricalBidFunction, estimate_all_pk, theoretical_bound
from .positions import PaymentFormat, PositionEnvironment, RankBasedAuction


def check_bids(X) -> np.ndarray:
    """Bids as a flat float array; accepts shape ``(N,)`` or ``(N, 1)``."""
    X = check_array(X, ensure_2d=False, dtype=float)
    if X.ndim == 2:
        if X.shape[1] != 1:
            raise ValidationError(f"bids must be a single column, got shape {X.shape}")
        X = X[:, 0]
    if np.any(X < 0):
        raise ValidationError("bids must be nonnegative")
    return X


def check_revenues(X) -> np.ndarray:
    X = check_array(X, ensure_2d=False, dtype=float)
    if X.ndim == 2:
        if X.shape[0] != 1:
            raise ValidationError("expected a single row of multi-unit revenues")
        X = X[0]
    return X


def _auction(weights, payment) -> RankBasedAuction:
    if weights is None:
        raise ValidationError("the auction weights that generated the bids are required")
    return RankBasedAuction(np.asarray(weights, dtype=float), payment)


class MultiUnitRevenueEstimator(TransformerMixin, BaseEstimator):
    """Linear ``P_k`` estimates from bids of a known rank-based auction.

    Parameters
    ----------
    weights : array-like of shape (n,)
        Induced position weights of the auction that produced the bids.
    payment : {"first_price", "all_pay"}
    """

    def __init__(self, weights=None, payment="first_price"):
        self.weights = weights
        self.payment = payment

    def fit(self, X, y=None):
        bids = check_bids(X)
        self.auction_ = _auction(self.weights, self.payment)
        self.bid_function_ = EmpiricalBidFunction(bids)
        self.revenues_ = estimate_all_pk(self.bid_function_, self.auction_)
        self.n_samples_ = bids.size
        return self

    def transform(self, X):
        """Estimates from the bids in ``X`` as a single row ``(1, n + 1)``."""
        check_is_fitted(self, "auction_")
        fn = EmpiricalBidFunction(check_bids(X))
        return estimate_all_pk(fn, self.auction_)[None, :]

    def predict(self, W):
        """Per-agent revenue of each rank-based auction (rows of ``W``)."""
        check_is_fitted(self, "revenues_")
        W = check_array(W, dtype=float)
        if W.shape[1] != self.auction_.n:
            raise ValidationError(f"expected {self.auction_.n} weights per row, got {W.shape[1]}")
        alpha = W - np.c_[W[:, 1:], np.zeros(len(W))]
        return alpha @ self.revenues_[1:]

    def error_bounds(self):
        """Theoretical RMS error bound for each ``P_hat_k`` at the fitted sample size."""
        check_is_fitted(self, "revenues_")
        return np.array([theoretical_bound(self.auction_, k, self.n_samples_) for k in range(self.auction_.n + 1)])


class RankAuctionDesigner(BaseEstimator):
    """Revenue-optimal rank-based auction for a position environment.

    Parameters
    ----------
    environment : array-like of shape (n,)
        Position weights ``w_1 >= ... >= w_n``.
    epsilon : float
        Strict-monotonicity margin; 0 gives the optimal iron-by-rank auction.
    strategy : {"strict", "mixture"}
        With ``epsilon > 0``: the optimal epsilon strictly-monotone auction,
        or the optimal auction mixed with uniform marginals.
    """

    def __init__(self, environment=None, epsilon=0.0, strategy="strict", payment="first_price"):
        self.environment = environment
        self.epsilon = epsilon
        self.strategy = strategy
        self.payment = payment

    def fit(self, X, y=None):
        P = check_revenues(X)
        if self.environment is None:
            raise ValidationError("environment weights are required")
        env = PositionEnvironment(np.asarray(self.environment, dtype=float))
        if self.epsilon == 0:
            res = optimal_iron_by_rank(env, P, self.payment)
        elif self.strategy == "strict":
            res = epsilon_strict_optimal(env, P, self.epsilon, self.payment)
        elif self.strategy == "mixture":
            res = epsilon_mixture_design(env, P, self.epsilon, self.payment)
        else:
            raise DomainError(f"unknown strategy {self.strategy!r}")
        self.result_ = res
        self.auction_ = res.auction
        self.weights_ = res.auction.weights.copy()
        self.revenue_ = res.revenue
        return self

    def predict(self, X):
        """Per-agent revenue of the designed auction under revenues ``X``."""
        check_is_fitted(self, "auction_")
        P = check_revenues(X)
        return float(self.auction_.alpha @ P[1:])


class RevenueCurveEstimator(BaseEstimator):
    """Histogram-density revenue curve ``R_hat(q) = (1 - q) v_hat(q)``.

    Parameters
    ----------
    weights, payment : the auction that produced the bids.
    bandwidth : float, optional
        Fixed window half-width; default ``bandwidth_scale * spread * N**(-1/3)``.
    isotonic : bool
        Project ``v_hat`` onto nondecreasing functions.
    """

    def __init__(self, weights=None, payment="first_price", bandwidth=None, bandwidth_scale=1.0,
                 isotonic=True):
        self.weights = weights
        self.payment = payment
        self.bandwidth = bandwidth
        self.bandwidth_scale = bandwidth_scale
        self.isotonic = isotonic

    def fit(self, X, y=None):
        bids = check_bids(X)
        self.auction_ = _auction(self.weights, self.payment)
        self.bid_function_ = EmpiricalBidFunction(bids)
        self.bandwidth_ = (float(self.bandwidth) if self.bandwidth is not None
                           else default_bandwidth(bids, self.bandwidth_scale))
        return self

    def predict_value(self, q):
        check_is_fitted(self, "bid_function_")
        q = np.asarray(q, dtype=float).ravel()
        order = np.argsort(q)
        ve = estimate_value_fn(self.bid_function_, self.auction_, h=self.bandwidth_, grid=q[order],
                               isotonic=self.isotonic)
        out = np.empty_like(q)
        out[order] = ve.v_hat
        return out

    def predict(self, q):
        q = np.asarray(q, dtype=float).ravel()
        R = (1.0 - q) * self.predict_value(q)
        return np.where(q >= 1.0, 0.0, np.maximum(R, 0.0))

    def curve(self, grid=None, truth=None):
        """Full :class:`RevenueCurveEstimate` on ``grid``."""
        check_is_fitted(self, "bid_function_")
        return estimate_revenue_curve(self.bid_function_, self.auction_, h=self.bandwidth_, grid=grid,
                                      truth=truth, isotonic=self.isotonic)


__all__ = ["MultiUnitRevenueEstimator", "RankAuctionDesigner", "RevenueCurveEstimator",
           "PaymentFormat", "check_bids"]
