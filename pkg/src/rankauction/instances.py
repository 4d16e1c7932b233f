"""Seeded random problem instances for property checks and experiments."""

from __future__ import annotations

import numpy as np

from .distributions import (BimodalIrregular, PiecewiseLinearQuantile, TruncatedExponential, Uniform01,
                            ValueDistribution)
from .positions import PaymentFormat, PositionEnvironment, RankBasedAuction


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def random_distribution(seed, irregular: bool = True) -> ValueDistribution:
    """One of Uniform01, TruncatedExponential, a random piecewise-linear quantile
    function or (if ``irregular``) BimodalIrregular."""
    rng = _rng(seed)
    kind = int(rng.integers(0, 4 if irregular else 3))
    if kind == 0:
        return Uniform01()
    if kind == 1:
        return TruncatedExponential(float(rng.uniform(0.25, 4.0)))
    if kind == 2:
        m = int(rng.integers(1, 5))
        qs = np.r_[0.0, np.sort(rng.uniform(0.05, 0.95, m)), 1.0]
        while np.any(np.diff(qs) < 1e-3):
            qs = np.r_[0.0, np.sort(rng.uniform(0.05, 0.95, m)), 1.0]
        vs = np.sort(rng.uniform(0.0, 1.0, m + 2))
        return PiecewiseLinearQuantile(list(zip(qs, vs)))
    return BimodalIrregular()


def random_weights(n: int, seed, top_one: bool = True) -> np.ndarray:
    """Nonincreasing weights in [0, 1] (``w_1 = 1`` when ``top_one``)."""
    rng = _rng(seed)
    w = np.sort(rng.random(n))[::-1]
    if top_one:
        w[0] = 1.0
    return w


def random_environment(n: int, seed) -> PositionEnvironment:
    return PositionEnvironment(random_weights(n, seed))


def random_auction(n: int, seed, payment=PaymentFormat.FIRST_PRICE) -> RankBasedAuction:
    """Random mixture of k-unit auctions with every ``alpha_k > 0``."""
    rng = _rng(seed)
    alpha = rng.dirichlet(np.ones(n))
    alpha = 0.9 * alpha + 0.1 / n
    return RankBasedAuction.from_alpha(alpha, payment)


def random_revenues(n: int, seed) -> np.ndarray:
    """Arbitrary (not necessarily concave) ``P_0..P_n`` with ``P_0 = P_n = 0``."""
    rng = _rng(seed)
    return np.r_[0.0, rng.random(n - 1), 0.0]


def random_feasible_auctions(env: PositionEnvironment, count: int, seed) -> np.ndarray:
    """``count`` random induced weight vectors feasible for ``env`` (rows).

    Draws nonincreasing vectors, a third with a suffix of ranks zeroed, and scales
    each down just enough to satisfy the cumulative constraint.
    """
    rng = _rng(seed)
    n = env.n
    W = env.cumulative[1:]
    w = -np.sort(-rng.random((count, n)), axis=1)
    # a third of the draws: zero a random suffix (rank reserve)
    cut = rng.integers(1, n + 1, count)
    reserve = rng.random(count) < 1 / 3
    mask = reserve[:, None] & (np.arange(n)[None, :] >= cut[:, None])
    w[mask] = 0.0
    cum = np.cumsum(w, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(cum > 0, W[None, :] / cum, np.inf).min(axis=1)
    return w * np.minimum(scale, 1.0)[:, None]
