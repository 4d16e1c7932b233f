import math

import numpy as np
import pytest
from scipy.integrate import quad

from rankauction import (EmpiricalBidFunction, InsufficientDataError, PositionEnvironment, RankBasedAuction,
                         TruncatedExponential, Uniform01, bid_function, estimate_all_pk, estimate_pk,
                         estimate_pk_allpay, estimate_pk_firstprice, fit_rate, mse_experiment,
                         multiunit_revenues, optimal_iron_by_rank, sample_bids, theoretical_bound, z_weight)
from rankauction.design import rank_auction_revenue
from rankauction.inference import estimator_weights, rate_sweep
from rankauction.positions import multiunit_alloc_slope

ONE_UNIT_2 = RankBasedAuction.k_unit(2, 1)


# --- samples and the empirical bid function --------------------------------------------------

def test_sample_bids_allpay_example(uniform):
    a = ONE_UNIT_2.with_payment("all_pay")
    s = sample_bids(uniform, a, 2, seed=42)
    q = np.random.default_rng(42).random(2)
    assert np.allclose(s.bids, np.sort(q ** 2 / 2), atol=1e-10)
    big = sample_bids(uniform, a, 1000, seed=1)
    assert big.bids.max() <= 0.5 + 1e-12 and big.N == 1000
    with pytest.raises(InsufficientDataError):
        sample_bids(uniform, a, 0, seed=1)


def test_sample_bids_are_reproducible(texp):
    a = RankBasedAuction.uniform_marginal(3)
    assert np.array_equal(sample_bids(texp, a, 50, 9).bids, sample_bids(texp, a, 50, 9).bids)
    assert not np.array_equal(sample_bids(texp, a, 50, 9).bids, sample_bids(texp, a, 50, 10).bids)


def test_sample_bids_noise_stays_nonnegative(uniform):
    s = sample_bids(uniform, ONE_UNIT_2, 500, 3, noise=0.05)
    assert np.all(s.bids >= 0)


def test_empirical_bid_examples():
    fn = EmpiricalBidFunction([0.5, 0.2])
    assert fn(0.0) == 0.2 and fn(0.49) == 0.2 and fn(0.5) == 0.5 and fn(1.0) == 0.5
    assert EmpiricalBidFunction([0.3])(0.7) == 0.3
    four = EmpiricalBidFunction([0.1, 0.4, 0.2, 0.3])
    assert four(0.999) == 0.4
    with pytest.raises(InsufficientDataError):
        EmpiricalBidFunction([])


def test_empirical_bid_sup_error(uniform):
    bf = bid_function(uniform, ONE_UNIT_2)
    fn = EmpiricalBidFunction([0.1, 0.3])
    # reference b = q/2 on [0, 1/2): |0.1 - 0| .. |0.1 - 0.25|; on [1/2, 1]: |0.3 - 0.25| .. |0.3 - 0.5|
    assert fn.sup_error(bf) == pytest.approx(0.2, abs=1e-9)


# --- estimators --------------------------------------------------------------------------------

@pytest.mark.parametrize("n,k", [(2, 1), (3, 1), (3, 2), (6, 4)])
def test_allpay_constant_bids_telescope(n, k):
    a = RankBasedAuction.uniform_marginal(n, "all_pay")
    c = 0.37
    expected = c * float(z_weight(a, k, 0.0))
    for N in (1, 7, 100):
        assert estimate_pk_allpay(np.full(N, c), a, k) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("weights", [[1.0, 0.0], [1.0, 0.5, 0.0], [1.0, 0.6, 0.3, 0.1], [0.9, 0.9, 0.2]])
def test_firstprice_constant_bids_match_quadrature(weights):
    a = RankBasedAuction(np.asarray(weights))
    rule = a.allocation()
    c = 0.42
    for k in range(1, a.n):
        body, _ = quad(lambda t: float(rule.x_prime(t) * z_weight(a, k, t)), 0, 1, epsabs=1e-13, epsrel=1e-13,
                       limit=200)
        # Z_k(1) is nonzero when alpha_1 = 0, so keep both boundary terms
        ends = float(rule.x(0.0) * z_weight(a, k, 0.0) - rule.x(1.0) * z_weight(a, k, 1.0))
        oracle = c * (ends + body)
        for N in (1, 50, 1000):
            assert estimate_pk_firstprice(np.full(N, c), a, k) == pytest.approx(oracle, abs=1e-10)


def test_single_sample_formulas():
    a = RankBasedAuction(np.array([1.0, 0.5, 0.0]))
    b = 0.25
    assert estimate_pk_allpay([b], a, 1) == pytest.approx(b * float(z_weight(a, 1, 0.0) - z_weight(a, 1, 1.0)))
    w = estimator_weights(a, 1, 1, "first_price")
    assert estimate_pk_firstprice([b], a, 1) == pytest.approx(b * w[0], abs=1e-15)


@pytest.mark.parametrize("payment", ["all_pay", "first_price"])
def test_estimators_are_linear(payment, rng):
    a = RankBasedAuction(np.array([1.0, 0.7, 0.2, 0.05]), payment)
    b = np.sort(rng.random(300))
    c = 0.11
    for k in range(1, a.n):
        shift = estimate_pk(np.full(b.size, c), a, k)
        assert estimate_pk(b + c, a, k) == pytest.approx(estimate_pk(b, a, k) + shift, abs=1e-12)
        assert estimate_pk(3 * b, a, k) == pytest.approx(3 * estimate_pk(b, a, k), abs=1e-12)


def test_estimate_ends_are_zero(uniform):
    a = RankBasedAuction.uniform_marginal(3)
    P = estimate_all_pk(sample_bids(uniform, a, 100, 1).bids, a)
    assert P[0] == 0 and P[-1] == 0 and P.size == 4


@pytest.mark.parametrize("payment", ["all_pay", "first_price"])
def test_large_sample_recovers_one_sixth(uniform, payment):
    a = ONE_UNIT_2.with_payment(payment)
    N = 100_000
    est = estimate_pk(sample_bids(uniform, a, N, 11).bids, a, 1)
    bound = theoretical_bound(a.with_payment("all_pay"), 1, N)  # the all-pay bound is finite for this auction
    assert abs(est - 1 / 6) <= 3 * bound
    assert abs(est - 1 / 6) <= 5e-3


# --- bounds and rates ------------------------------------------------------------------------------

def test_fit_rate_synthetic():
    Ns = np.logspace(2, 5, 7)
    assert fit_rate(Ns, 3 / np.sqrt(Ns)) == pytest.approx(-0.5, abs=1e-6)
    assert fit_rate(Ns, 2 * Ns ** (-1 / 3)) == pytest.approx(-1 / 3, abs=1e-6)
    with pytest.raises(InsufficientDataError):
        fit_rate([100, 1000, 10000], [1, 2, 3])
    with pytest.raises(InsufficientDataError):
        fit_rate([100, 200, 400, 800], [1, 2, 3, 4])


def test_bound_closed_form_pure_k_unit():
    n, k, N = 4, 2, 1000
    a = RankBasedAuction.k_unit(n, k, "all_pay")
    grid = np.linspace(0, 1, 200001)
    expected = math.sqrt(2 / N) * np.max(multiunit_alloc_slope(n, k, grid)) * 1.0
    assert theoretical_bound(a, k, N) == pytest.approx(expected, rel=1e-6)
    assert theoretical_bound(a, k, 4 * N) == pytest.approx(theoretical_bound(a, k, N) / 2, rel=1e-12)
    assert theoretical_bound(a, 0, N) == 0.0 and theoretical_bound(a, n, N) == 0.0


def test_bound_uniform_marginal_z_at_most_n():
    n = 5
    a = RankBasedAuction.uniform_marginal(n, "all_pay")
    with_sup = theoretical_bound(a, 2, 1000)
    with_eps = theoretical_bound(a, 2, 1000, eps=1.0)
    assert with_sup <= with_eps + 1e-12


def test_bound_warns_when_unbounded():
    a = RankBasedAuction.k_unit(3, 1)  # first price: x'/x blows up at 0
    with pytest.warns(UserWarning, match="unbounded"):
        theoretical_bound(a, 1, 1000)


def test_mse_experiment_determinism_and_errors(texp):
    a = RankBasedAuction.uniform_marginal(3)
    r1 = mse_experiment(texp, a, 1, 500, T=30, seed=4)
    r2 = mse_experiment(texp, a, 1, 500, T=30, seed=4)
    r3 = mse_experiment(texp, a, 1, 500, T=30, seed=4, n_jobs=2)
    assert np.array_equal(r1.estimates, r2.estimates) and np.array_equal(r1.estimates, r3.estimates)
    assert r1.row() == r2.row()
    with pytest.raises(InsufficientDataError):
        mse_experiment(texp, a, 1, 500, T=0)
    with pytest.warns(UserWarning):
        mse_experiment(texp, a, 1, 50, T=5)


def test_quadrupling_samples_halves_error(uniform):
    a = RankBasedAuction.uniform_marginal(2, "all_pay")
    small = mse_experiment(uniform, a, 1, 1000, T=200, seed=2)
    large = mse_experiment(uniform, a, 1, 4000, T=200, seed=2)
    assert 0.35 <= large.rmse / small.rmse <= 0.7
    assert small.bound_ratio <= 2 and large.bound_ratio <= 2


@pytest.mark.parametrize("payment", ["all_pay", "first_price"])
def test_rate_sweep_small(payment):
    d = TruncatedExponential(2.0)
    a = RankBasedAuction.uniform_marginal(5, payment)
    sweep = rate_sweep(d, a, 2, N_grid=[100, 316, 1000, 3162, 10000], T=60, seed=1)
    assert -0.6 <= sweep.exponent <= -0.4
    assert -0.65 <= sweep.bid_exponent <= -0.35
    assert all(r.bound_ratio <= 2 for r in sweep.reports)


# --- design from estimates ---------------------------------------------------------------------------

@pytest.mark.parametrize("seed", range(5))
def test_design_regret_bounded_by_estimation_error(seed):
    rng = np.random.default_rng(seed)
    d = TruncatedExponential(float(rng.uniform(0.5, 3)))
    n = int(rng.integers(2, 7))
    env = PositionEnvironment(np.sort(rng.random(n))[::-1])
    a = RankBasedAuction.uniform_marginal(n)
    P = multiunit_revenues(d, n).P
    P_hat = estimate_all_pk(sample_bids(d, a, 2000, seed).bids, a)
    exact = optimal_iron_by_rank(env, P)
    from_est = optimal_iron_by_rank(env, P_hat)
    regret = exact.revenue - rank_auction_revenue(from_est.auction, P)
    assert -1e-12 <= regret <= 2 * n * np.max(np.abs(P_hat - P)) + 1e-12


def test_uniform_distribution_first_price_truth(uniform):
    # independent of the estimators: the equilibrium revenue of the 1-unit auction is 1/6
    assert multiunit_revenues(Uniform01(), 2).P[1] == pytest.approx(1 / 6, abs=1e-12)
