"""Rank-based position auctions: equilibrium, iron-by-rank design and inference from bids."""

import sys
from importlib.metadata import PackageNotFoundError, version

from .density import (HistogramDensity, RevenueCurveEstimate, check_slope_conditions, default_bandwidth,
                      estimate_revenue_curve, estimate_value_fn, histogram_density,
                      rate_separation_experiment)
from .design import (ApproxCheck, OptResult, check_irregular_approx, check_position_approx,
                     check_regular_approx, epsilon_mixture_design, epsilon_strict_optimal, iron_multiunit,
                     max_admissible_epsilon, myerson_optimal_revenue, optimal_iron_by_rank,
                     optimal_revenue_table, rank_auction_revenue)
from .distributions import (BimodalIrregular, IronedRevenueCurve, PiecewiseLinearQuantile, RevenueCurve,
                            TruncatedExponential, Uniform01, ValueDistribution, distribution_from_dict,
                            ironed_revenue_curve, is_regular, revenue_at, value_at, virtual_value)
from .equilibrium import (BidFunction, MultiUnitRevenues, allpay_bid, bid_function, firstprice_bid,
                          multiunit_revenues, per_agent_revenue, per_agent_revenue_by_slope, verify_bne)
from .estimators import MultiUnitRevenueEstimator, RankAuctionDesigner, RevenueCurveEstimator
from .exceptions import (ConfigError, DegenerateAllocationError, DimensionMismatchError, DomainError,
                         InfeasibleEpsilonError, InsufficientDataError, QuadratureError, RankAuctionError,
                         ValidationError)
from .inference import (BidSampleSet, EmpiricalBidFunction, EstimationReport, empirical_bid, estimate_all_pk,
                        estimate_pk, estimate_pk_allpay, estimate_pk_firstprice, fit_rate, mse_experiment,
                        rate_sweep, sample_bids, theoretical_bound)
from .positions import (AllocationRule, PaymentFormat, PositionEnvironment, RankBasedAuction, epsilon_mixture,
                        iron_by_rank, is_feasible, mixture_alloc, multiunit_alloc, multiunit_alloc_slope,
                        rank_reserve, z_weight)

try:
    __version__ = version("rankauction")
except PackageNotFoundError:  # pragma: no cover - running from a source tree
    __version__ = "0.0.0"

__all__ = [name for name, obj in list(globals().items())
           if not name.startswith("_") and not isinstance(obj, type(sys))
           and name not in {"version", "PackageNotFoundError"}]
