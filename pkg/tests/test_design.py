import itertools
import warnings

import numpy as np
import pytest

from rankauction import (BimodalIrregular, DimensionMismatchError, InfeasibleEpsilonError, PiecewiseLinearQuantile,
                         PositionEnvironment, RankBasedAuction, TruncatedExponential, Uniform01,
                         check_irregular_approx, check_position_approx, check_regular_approx, epsilon_mixture_design,
                         epsilon_strict_optimal, iron_multiunit, is_feasible, max_admissible_epsilon,
                         multiunit_revenues, myerson_optimal_revenue, optimal_iron_by_rank)
from rankauction.design import _solve_strict_lp, optimal_revenue_table, rank_auction_revenue
from rankauction.instances import random_environment, random_feasible_auctions, random_revenues

P_EXAMPLE = np.array([0, 1, 1.1, 1.6, 0])


# --- ironing the multi-unit curve ------------------------------------------------------

def test_iron_multiunit_example():
    ironed = iron_multiunit(P_EXAMPLE)
    assert np.allclose(ironed.P_bar, [0, 1, 1.3, 1.6, 0], atol=1e-14)
    assert ironed.intervals == ((2, 3),)
    assert np.allclose(ironed.ironed_marginals, [1, 0.3, 0.3, -1.6])


def test_iron_multiunit_trivial():
    P = np.array([0, 0.5, 0.8, 0.9, 0])
    ironed = iron_multiunit(P)
    assert np.array_equal(ironed.P_bar, P) and ironed.intervals == ()
    zero = iron_multiunit(np.zeros(3))
    assert np.array_equal(zero.P_bar, np.zeros(3)) and zero.intervals == ()


# --- optimal iron-by-rank ---------------------------------------------------------------

def _lattice_optimum(env: PositionEnvironment, P, step=0.05):
    """Best revenue over all monotone weight vectors on a lattice that satisfy the cumulative constraints."""
    levels = np.round(np.arange(0, 1 + step / 2, step), 10)
    W = env.cumulative[1:]
    best = -np.inf
    for w in itertools.combinations_with_replacement(levels[::-1], env.n):
        w = np.asarray(w)
        if np.all(np.cumsum(w) <= W + 1e-12):
            best = max(best, rank_auction_revenue(RankBasedAuction(w), P))
    return best


@pytest.mark.parametrize("seed", range(6))
def test_optimal_iron_by_rank_matches_lattice_search(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 5))
    env = PositionEnvironment(np.round(np.sort(rng.random(n))[::-1] * 20) / 20)
    P = random_revenues(n, rng)
    opt = optimal_iron_by_rank(env, P)
    assert opt.feasible
    lattice = _lattice_optimum(env, P)
    # the optimum is at least the lattice optimum, and the lattice contains the optimum when env is on it
    assert opt.revenue >= lattice - 1e-12
    assert opt.revenue <= lattice + 0.05 * np.abs(np.diff(P)).sum()


def test_optimal_iron_by_rank_worked_example():
    env = PositionEnvironment(np.array([1.0, 1.0, 1.0, 0.0]))
    opt = optimal_iron_by_rank(env, P_EXAMPLE)
    assert np.allclose(opt.auction.weights, [1, 1, 1, 0])
    assert opt.discarded == [4]
    assert opt.revenue == pytest.approx(1.6, abs=1e-12)
    assert opt.revenue == pytest.approx(_lattice_optimum(env, P_EXAMPLE), abs=1e-12)


def test_optimal_iron_by_rank_averages_over_bridges():
    env = PositionEnvironment(np.array([1.0, 0.8, 0.2, 0.1]))
    opt = optimal_iron_by_rank(env, P_EXAMPLE)
    assert np.allclose(opt.auction.weights, [1, 0.5, 0.5, 0])
    assert opt.revenue == pytest.approx(_lattice_optimum(env, P_EXAMPLE), abs=1e-12)


def test_optimal_iron_by_rank_trivial_cases():
    env = PositionEnvironment(np.array([1.0, 0.6, 0.3]))
    P = np.array([0, 0.5, 0.8, 0.9])  # concave, marginals >= 0
    opt = optimal_iron_by_rank(env, P)
    assert np.array_equal(opt.auction.weights, env.weights)
    assert optimal_iron_by_rank(env, np.zeros(4)).revenue == 0.0
    with pytest.raises(DimensionMismatchError):
        optimal_iron_by_rank(env, np.zeros(3))


@pytest.mark.parametrize("seed", range(20))
def test_optimal_iron_by_rank_properties(seed):
    rng = np.random.default_rng(1000 + seed)
    n = int(rng.integers(2, 12))
    env = random_environment(n, rng)
    P = random_revenues(n, rng)
    opt = optimal_iron_by_rank(env, P)
    assert opt.feasible
    ironed = iron_multiunit(P)
    # both revenue forms agree, which is the case exactly when no weight drop sits strictly inside a bridge
    assert rank_auction_revenue(opt.auction, P) == pytest.approx(opt.revenue, abs=1e-12)
    assert float(ironed.ironed_marginals @ opt.auction.weights) == pytest.approx(opt.revenue, abs=1e-12)
    for competitor in random_feasible_auctions(env, 50, rng):
        assert rank_auction_revenue(RankBasedAuction(competitor), P) <= opt.revenue + 1e-12


# --- eps strictly monotone ---------------------------------------------------------------------

def test_epsilon_strict_worked_example():
    env = PositionEnvironment(np.array([1.0, 0.5, 0.0]))
    P = np.array([0, 0.4, 0.5, 0.0])
    res = epsilon_strict_optimal(env, P, 0.1)
    assert np.allclose(res.auction.weights, [1.0, 0.5, 0.0])
    assert np.all(-np.diff(res.auction.weights) >= 0.1 - 1e-12)


def test_epsilon_zero_reduces_to_iron_by_rank(rng):
    for _ in range(20):
        n = int(rng.integers(2, 10))
        env = random_environment(n, rng)
        P = random_revenues(n, rng)
        strict = epsilon_strict_optimal(env, P, 0.0)
        assert np.allclose(strict.auction.weights, optimal_iron_by_rank(env, P).auction.weights, atol=1e-12)


@pytest.mark.parametrize("seed", range(25))
def test_epsilon_strict_matches_lp_oracle(seed):
    rng = np.random.default_rng(2000 + seed)
    n = int(rng.integers(2, 10))
    env = random_environment(n, rng)
    eps = float(rng.uniform(0, 0.9)) * max_admissible_epsilon(env)
    eps = min(eps, 0.2 / n)
    P = random_revenues(n, rng)
    res = epsilon_strict_optimal(env, P, eps)
    w = res.auction.weights
    assert is_feasible(env, res.auction)
    assert np.all(w[:-1] - w[1:] >= eps - 1e-9)
    oracle = rank_auction_revenue(RankBasedAuction(np.clip(_solve_strict_lp(env, P, eps), 0, 1)), P)
    assert res.revenue == pytest.approx(oracle, abs=1e-8)


def test_epsilon_strict_rejects_inadmissible():
    env = PositionEnvironment(np.array([1.0, 0.0, 0.0]))
    assert max_admissible_epsilon(env) == pytest.approx(1 / 3)
    with pytest.raises(InfeasibleEpsilonError):
        epsilon_strict_optimal(env, np.array([0, 0.2, 0.1, 0]), 0.4)
    with pytest.raises(ValueError):
        epsilon_strict_optimal(env, np.array([0, 0.2, 0.1, 0]), -0.1)


def test_epsilon_mixture_design(rng):
    env = random_environment(5, rng)
    P = random_revenues(5, rng)
    opt = optimal_iron_by_rank(env, P)
    mix = epsilon_mixture_design(env, P, 0.1)
    assert mix.revenue >= 0.9 * opt.revenue - 1e-12
    assert np.all(mix.auction.alpha >= 0.1 / 5 - 1e-12)


# --- benchmarks and approximation checks -----------------------------------------------------------

def test_myerson_examples(uniform):
    rev, se = myerson_optimal_revenue(uniform, 2, 1, trials=200_000, seed=1)
    assert abs(rev - 5 / 12) <= 4 * se
    rev, se = myerson_optimal_revenue(uniform, 2, 2, trials=200_000, seed=1)
    assert abs(rev - 0.5) <= 4 * se
    assert myerson_optimal_revenue(uniform, 2, 0, trials=100, seed=1)[0] == 0.0


def test_myerson_second_price_with_reserve_simulation(uniform):
    # direct simulation of the second-price auction with reserve 1/2
    rng = np.random.default_rng(7)
    v = rng.random((200_000, 2))
    hi, lo = v.max(axis=1), v.min(axis=1)
    direct = np.where(hi >= 0.5, np.maximum(lo, 0.5), 0.0)
    rev, se = myerson_optimal_revenue(uniform, 2, 1, trials=200_000, seed=2)
    assert abs(direct.mean() - rev) <= 4 * np.hypot(se, direct.std() / np.sqrt(direct.size))


def test_optimal_revenue_table_is_deterministic_across_threads(texp):
    a = optimal_revenue_table(texp, 4, trials=40_000, seed=5)
    b = optimal_revenue_table(texp, 4, trials=40_000, seed=5, n_jobs=2)
    assert np.array_equal(a.revenue, b.revenue)


def test_regular_approx_examples(uniform):
    res = check_regular_approx(uniform, 2, 1, trials=200_000, seed=3)
    assert res.ratio == pytest.approx(0.8, abs=4 * res.stderr + 1e-3)
    assert res.passed
    res = check_regular_approx(uniform, 4, 3, trials=50_000, seed=3)
    assert res.passed and res.detail["best_k"] <= 3


def test_regular_approx_degenerate_values_ratio_one():
    zero = PiecewiseLinearQuantile([(0, 0), (1, 0)])
    res = check_regular_approx(zero, 2, 1, trials=1000)
    assert res.ratio == 1.0 and res.passed


def test_irregular_approx_examples(uniform, bimodal):
    res = check_irregular_approx(uniform, 2, 0.5)
    assert res.ratio == pytest.approx(2 / 3, abs=1e-10)
    n = 8
    res = check_irregular_approx(bimodal, n, 1 - 1 / n, trials=100_000, seed=4)
    assert res.detail["best_k"] == 1 and res.passed
    assert check_irregular_approx(uniform, 2, 0.0).ratio == 1.0
    with pytest.raises(ValueError):
        check_irregular_approx(uniform, 2, 0.9)


def test_irregular_approx_quadrature_and_simulation_agree(bimodal):
    quad = check_irregular_approx(bimodal, 6, 0.4)
    sim = check_irregular_approx(bimodal, 6, 0.4, trials=200_000, seed=8)
    assert abs(quad.ratio - sim.ratio) <= 4 * sim.stderr


def test_position_approx_examples(uniform, bimodal):
    res = check_position_approx(uniform, PositionEnvironment.k_unit(2, 1), trials=200_000, seed=9)
    assert res.ratio == pytest.approx(0.8, abs=4 * res.stderr + 1e-3)
    env = PositionEnvironment(np.array([1.0, 0.7, 0.4, 0.2]))
    res = check_position_approx(bimodal, env, trials=50_000, seed=9)
    assert res.threshold == 0.25 and res.passed
    for d in (TruncatedExponential(1.0), Uniform01()):
        assert check_position_approx(d, env, trials=50_000, seed=9).passed


def test_regular_approx_warns_for_irregular():
    with pytest.warns(UserWarning):
        check_regular_approx(BimodalIrregular(), 2, 1, trials=1000)


def test_multiunit_revenues_feed_design(texp):
    n = 5
    P = multiunit_revenues(texp, n)
    env = PositionEnvironment.k_unit(n, 2)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        opt = optimal_iron_by_rank(env, P)
    assert opt.revenue == pytest.approx(max(P.P[1], P.P[2]), abs=1e-12)
