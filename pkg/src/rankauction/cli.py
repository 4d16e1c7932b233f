"""Experiment runner: ``rankauction run CONFIG`` and ``rankauction list-experiments``.

A config is an INI file (``[section]`` headers, ``key = value`` lines) or
the equivalent JSON object. Sections:

``[experiment]``
    ``kind`` (equilibrium, optimize, estimate-pk, revenue-curve, approx-check,
    rate-sweep), ``seed`` (mandatory), ``trials``, ``n_grid``, ``output``,
    ``description``, ``criterion`` and kind-specific options.
``[distribution]`` (and optionally ``[distribution.<label>]`` for more)
    ``family`` plus its parameters; piecewise-linear knots as ``q:v, q:v``.
``[environment]``
    ``n`` and optional ``weights`` (default: all ones).
``[auction]``
    ``format`` (one or more of first_price, all_pay), ``weights`` (explicit
    list, ``optimal``, ``uniform_marginal`` or ``k_unit:K``), ``epsilon``.

Each run writes ``manifest.json`` (resolved config, versions, timestamps),
the experiment's CSV tables, ``checks.csv`` and ``summary.json``.

Exit codes: 0 success, 1 a stated tolerance was missed, 2 config parse
error, 3 validation error, 4 runtime failure.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import logging
import math
import platform
import sys
import time
import warnings
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .density import default_bandwidth, estimate_revenue_curve, rate_separation_experiment
from .design import (check_irregular_approx, check_position_approx, check_regular_approx,
                     epsilon_mixture_design, epsilon_strict_optimal, iron_multiunit, max_admissible_epsilon,
                     optimal_iron_by_rank)
from .distributions import FAMILIES, ValueDistribution, distribution_from_dict, is_regular
from .equilibrium import (TOL_BNE, bid_function, multiunit_revenues, per_agent_revenue,
                          per_agent_revenue_by_slope, verify_bne)
from .exceptions import ConfigError, InfeasibleEpsilonError, RankAuctionError, ValidationError
from .hull import gift_wrap_upper_hull
from .inference import (DEFAULT_N_GRID, EmpiricalBidFunction, estimate_all_pk, mse_experiment, rate_sweep,
                        sample_bids, theoretical_bound)
from .instances import (random_auction, random_distribution, random_environment, random_feasible_auctions,
                        random_revenues)
from .io import write_csv, write_dict_rows, write_json
from .positions import PaymentFormat, PositionEnvironment, RankBasedAuction, epsilon_mixture, z_weight

log = logging.getLogger("rankauction")

KINDS = ("equilibrium", "optimize", "estimate-pk", "revenue-curve", "approx-check", "rate-sweep")
EXIT_OK, EXIT_CHECK_FAILED, EXIT_PARSE, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2, 3, 4


# --- config parsing ------------------------------------------------------------


def _bundled_dir():
    return resources.files("rankauction") / "configs"


def bundled_configs() -> dict[str, Path]:
    """Name -> path of the configs shipped with the package."""
    out = {}
    for entry in _bundled_dir().iterdir():
        if entry.name.endswith(".cfg"):
            out[entry.name[:-4]] = Path(str(entry))
    return dict(sorted(out.items()))


def resolve_config_path(ref: str) -> Path:
    """A filesystem path, or the name of a bundled config."""
    p = Path(ref)
    if p.exists():
        return p
    bundled = bundled_configs()
    name = p.name[:-4] if p.name.endswith(".cfg") else p.name
    if name in bundled:
        return bundled[name]
    raise ConfigError(f"config {ref!r} not found (and not a bundled config name)")


def load_config_text(text: str, fmt: str = "ini") -> dict[str, dict]:
    """Raw sections -> {key: value}; raises ConfigError on malformed input."""
    if fmt == "json" or text.lstrip().startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON config: {exc}") from exc
        if not isinstance(data, dict) or not all(isinstance(v, dict) for v in data.values()):
            raise ConfigError("JSON config must map section names to objects")
        return {str(s): {str(k): v for k, v in body.items()} for s, body in data.items()}
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"invalid config: {exc}") from exc
    return {s: dict(parser[s]) for s in parser.sections()}


def load_config(path) -> dict[str, dict]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return load_config_text(text, "json" if path.suffix == ".json" else "ini")


def _split(value) -> list:
    if isinstance(value, (list, tuple)):
        return list(value)
    return [tok for tok in str(value).replace(";", ",").split(",") if tok.strip()]


def _floats(value, key: str) -> list[float]:
    try:
        return [float(v) for v in _split(value)]
    except ValueError as exc:
        raise ValidationError(f"{key}: expected numbers, got {value!r}") from exc


def _ints(value, key: str) -> list[int]:
    try:
        return [int(float(v)) for v in _split(value)]
    except ValueError as exc:
        raise ValidationError(f"{key}: expected integers, got {value!r}") from exc


def _bool(value) -> bool:
    if isinstance(value, bool):
        return value
    return str(value).strip().lower() in {"1", "true", "yes", "on"}


def _knots(value) -> list[tuple[float, float]]:
    if isinstance(value, (list, tuple)) and value and isinstance(value[0], (list, tuple)):
        return [(float(a), float(b)) for a, b in value]
    pairs = []
    for tok in _split(value):
        try:
            a, b = str(tok).replace(" ", "").split(":")
            pairs.append((float(a), float(b)))
        except ValueError as exc:
            raise ValidationError(f"knots: expected 'q:v' pairs, got {tok!r}") from exc
    return pairs


def _epsilons(value, n: int) -> list[float]:
    """Numbers, or ``c/n`` meaning ``c`` divided by the number of agents."""
    out = []
    for tok in _split(value):
        tok = str(tok).strip()
        if tok.endswith("/n"):
            out.append(float(tok[:-2]) / n)
        else:
            out.append(float(tok))
    return out


def _distribution(section: dict, label: str) -> ValueDistribution:
    body = dict(section)
    family = body.pop("family", None)
    if family is None:
        raise ValidationError(f"[{label}] needs a 'family' ({', '.join(FAMILIES)})")
    if family not in FAMILIES:
        raise ValidationError(f"[{label}] unknown family {family!r}; choose from {', '.join(FAMILIES)}")
    params = {}
    for k, v in body.items():
        params[k] = _knots(v) if k == "knots" else float(v)
    try:
        return distribution_from_dict({"family": family, **params})
    except (TypeError, RankAuctionError) as exc:
        raise ValidationError(f"[{label}] {exc}") from exc


@dataclass
class ExperimentConfig:
    name: str
    kind: str
    seed: int
    distributions: list[tuple[str, ValueDistribution]] = field(default_factory=list)
    n: int | None = None
    environment: PositionEnvironment | None = None
    payments: list[PaymentFormat] = field(default_factory=lambda: [PaymentFormat.FIRST_PRICE])
    auction: str | list[float] = "uniform_marginal"
    epsilon: float = 0.0
    n_grid: list[int] = field(default_factory=lambda: list(DEFAULT_N_GRID))
    trials: int = 200
    output: str | None = None
    options: dict = field(default_factory=dict)

    @property
    def distribution(self) -> ValueDistribution:
        if not self.distributions:
            raise ValidationError("this experiment needs a [distribution] section")
        return self.distributions[0][1]

    def opt(self, key: str, default=None, cast=None):
        if key not in self.options:
            return default
        value = self.options[key]
        try:
            return cast(value) if cast is not None else value
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"option {key}: cannot interpret {value!r}") from exc

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "seed": self.seed,
            "distributions": {label: d.to_dict() for label, d in self.distributions},
            "n": self.n,
            "environment": None if self.environment is None else self.environment.weights.tolist(),
            "payments": [p.value for p in self.payments],
            "auction": self.auction,
            "epsilon": self.epsilon,
            "n_grid": self.n_grid,
            "trials": self.trials,
            "output": self.output,
            "options": {k: (v if isinstance(v, (int, float, bool, list)) else str(v))
                        for k, v in self.options.items()},
        }


def resolve_config(raw: dict[str, dict], name: str = "experiment", seed_override: int | None = None) -> ExperimentConfig:
    """Validate raw sections into an :class:`ExperimentConfig`."""
    if "experiment" not in raw:
        raise ValidationError("missing [experiment] section")
    exp = dict(raw["experiment"])
    kind = str(exp.pop("kind", "")).strip()
    if kind not in KINDS:
        raise ValidationError(f"experiment kind must be one of {', '.join(KINDS)}; got {kind!r}")
    seed_value = exp.pop("seed", None)
    if seed_override is not None:
        seed_value = seed_override
    if seed_value is None or str(seed_value).strip() == "":
        raise ValidationError("a seed is mandatory ([experiment] seed = ... or --seed)")
    try:
        seed = int(seed_value)
    except ValueError as exc:
        raise ValidationError(f"seed must be an integer, got {seed_value!r}") from exc
    if not 0 <= seed < 2 ** 64:
        raise ValidationError("seed must be an unsigned 64-bit integer")

    known = {"experiment", "environment", "auction"}
    dists = []
    for section in raw:
        if section == "distribution" or section.startswith("distribution."):
            dists.append((section, _distribution(raw[section], section)))
        elif section not in known:
            raise ValidationError(f"unknown section [{section}]")

    n = None
    env = None
    if "environment" in raw:
        body = raw["environment"]
        weights = _floats(body["weights"], "weights") if "weights" in body else None
        if "n" in body:
            n = int(body["n"])
        elif weights is not None:
            n = len(weights)
        if n is not None:
            if weights is None:
                weights = [1.0] * n
            if len(weights) != n:
                raise ValidationError(f"[environment] n={n} but {len(weights)} weights given")
            try:
                env = PositionEnvironment(np.asarray(weights, dtype=float))
            except RankAuctionError as exc:
                raise ValidationError(f"[environment] {exc}") from exc

    payments = [PaymentFormat.FIRST_PRICE]
    auction: str | list[float] = "uniform_marginal"
    eps = 0.0
    if "auction" in raw:
        body = raw["auction"]
        if "format" in body:
            try:
                payments = [PaymentFormat.parse(str(p).strip()) for p in _split(body["format"])]
            except RankAuctionError as exc:
                raise ValidationError(f"[auction] {exc}") from exc
        if "weights" in body:
            w = body["weights"]
            if isinstance(w, str) and (w.strip() in ("optimal", "uniform_marginal") or w.strip().startswith("k_unit")):
                auction = w.strip()
            else:
                auction = _floats(w, "weights")
                if n is None:
                    n = len(auction)
                elif len(auction) != n:
                    raise ValidationError(f"[auction] has {len(auction)} weights but n={n}")
        eps = float(body.get("epsilon", 0.0))
        if not 0 <= eps <= 1:
            raise ValidationError("[auction] epsilon must lie in [0, 1]")
    if auction == "optimal" and env is None:
        raise ValidationError("auction weights = optimal needs an [environment]")

    n_grid = _ints(exp.pop("n_grid"), "n_grid") if "n_grid" in exp else list(DEFAULT_N_GRID)
    trials = int(float(exp.pop("trials", 200)))
    output = exp.pop("output", None)
    cfg_name = str(exp.pop("name", name))
    return ExperimentConfig(cfg_name, kind, seed, dists, n, env, payments, auction, eps, n_grid, trials,
                            output, exp)


# --- checks and outcomes ---------------------------------------------------------


@dataclass
class Check:
    name: str
    value: float
    bound: float | str
    relation: str
    passed: bool
    detail: str = ""


def check_le(name, value, bound, detail="") -> Check:
    return Check(name, float(value), float(bound), "<=", bool(value <= bound), detail)


def check_ge(name, value, bound, detail="") -> Check:
    return Check(name, float(value), float(bound), ">=", bool(value >= bound), detail)


def check_in(name, value, lo, hi, detail="") -> Check:
    return Check(name, float(value), f"[{lo!r}, {hi!r}]", "in", bool(lo <= value <= hi), detail)


class CheckFailed(Exception):
    """Raised under ``--strict`` at the first missed tolerance."""


@dataclass
class Outcome:
    headline: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)      # file name -> (header, rows)
    documents: dict = field(default_factory=dict)   # file name -> JSON object
    checks: list[Check] = field(default_factory=list)
    strict: bool = False

    def add(self, check: Check) -> Check:
        self.checks.append(check)
        if self.strict and not check.passed:
            raise CheckFailed(f"{check.name}: {check.value!r} {check.relation} {check.bound} failed")
        return check

    def table(self, name: str, header, rows):
        self.tables[name] = (list(header), [list(r) for r in rows])


def _sub_seed(seed: int, *keys) -> int:
    return int(np.random.SeedSequence([seed, *keys]).generate_state(1, dtype=np.uint64)[0])


def _need_n(cfg: ExperimentConfig) -> int:
    if cfg.n is None:
        raise ValidationError("this experiment needs n (an [environment] section or explicit auction weights)")
    return cfg.n


def build_auction(cfg: ExperimentConfig, d: ValueDistribution, payment: PaymentFormat) -> RankBasedAuction:
    n = _need_n(cfg)
    spec = cfg.auction
    if isinstance(spec, list):
        a = RankBasedAuction(np.asarray(spec, dtype=float), payment)
    elif spec == "uniform_marginal":
        a = RankBasedAuction.uniform_marginal(n, payment)
    elif spec.startswith("k_unit"):
        try:
            k = int(spec.split(":")[1])
        except (IndexError, ValueError) as exc:
            raise ValidationError(f"auction weights {spec!r}: expected k_unit:K") from exc
        a = RankBasedAuction.k_unit(n, k, payment)
    else:  # optimal for the environment under the true revenues
        a = optimal_iron_by_rank(cfg.environment, multiunit_revenues(d, n), payment).auction
    if cfg.epsilon > 0:
        a = epsilon_mixture(a, cfg.epsilon)
    return a


# --- experiment kinds -----------------------------------------------------------


def run_equilibrium(cfg: ExperimentConfig, out: Outcome, n_jobs: int) -> None:
    if cfg.opt("random_cases") is not None:
        return _equilibrium_cases(cfg, out)
    d = cfg.distribution
    n = _need_n(cfg)
    P = multiunit_revenues(d, n)
    out.table("revenues.csv", ["k", "P_k"], [(k, P.P[k]) for k in range(n + 1)])
    out.headline["P"] = P.P.tolist()
    G = cfg.opt("bid_grid", 512, int)
    grid = np.linspace(0.0, 1.0, G)
    for payment in cfg.payments:
        a = build_auction(cfg, d, payment)
        tab = bid_function(d, a, grid=grid)
        out.table(f"bids_{payment.value}.csv", ["q", "bid"], zip(tab.grid, tab.bids))
        regret = verify_bne(d, a, bid_function(d, a), G=G)
        direct, slope = per_agent_revenue(d, a), per_agent_revenue_by_slope(d, a)
        mixture = P.revenue(a)
        out.headline[payment.value] = {"weights": a.weights.tolist(), "revenue": direct, "regret": regret}
        out.add(check_le(f"bne_regret[{payment.value}]", regret, TOL_BNE))
        out.add(check_le(f"revenue_identity[{payment.value}]", abs(direct - slope), 2e-8))
        out.add(check_le(f"mixture_decomposition[{payment.value}]", abs(direct - mixture), 2e-8))
    if cfg.opt("expect_P") is not None:
        expect = np.asarray(_floats(cfg.opt("expect_P"), "expect_P"))
        if expect.size != n + 1:
            raise ValidationError(f"expect_P needs {n + 1} values")
        out.add(check_le("expected_P", float(np.max(np.abs(P.P - expect))), cfg.opt("tol", 1e-8, float)))


def _equilibrium_cases(cfg: ExperimentConfig, out: Outcome) -> None:
    cases = cfg.opt("random_cases", 50, int)
    max_n = cfg.opt("max_n", 10, int)
    checks = [c.strip() for c in _split(cfg.opt("checks", "identity, decomposition"))]
    unknown = set(checks) - {"identity", "decomposition", "bne"}
    if unknown:
        raise ValidationError(f"unknown equilibrium checks {sorted(unknown)}")
    G = cfg.opt("bid_grid", 512, int)
    rows = []
    worst = {"identity": 0.0, "decomposition": 0.0, "bne": 0.0}
    for i in range(cases):
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, i]))
        n = int(rng.integers(2, max_n + 1))
        d = random_distribution(rng)
        payment = cfg.payments[int(rng.integers(len(cfg.payments)))]
        a = random_auction(n, rng, payment)
        direct = per_agent_revenue(d, a)
        slope = per_agent_revenue_by_slope(d, a) if "identity" in checks else math.nan
        mixture = multiunit_revenues(d, n).revenue(a) if "decomposition" in checks else math.nan
        regret = verify_bne(d, a, bid_function(d, a), G=G) if "bne" in checks else math.nan
        errs = {"identity": abs(direct - slope), "decomposition": abs(direct - mixture), "bne": regret}
        for c in checks:
            worst[c] = max(worst[c], errs[c])
        rows.append((i, d.family, json.dumps(d.params(), sort_keys=True), n, payment.value,
                     " ".join(repr(float(w)) for w in a.weights), direct, slope, mixture, regret))
    out.table("cases.csv", ["case", "family", "params", "n", "payment", "weights", "revenue", "revenue_slope",
                            "revenue_mixture", "bne_regret"], rows)
    out.headline["cases"] = cases
    out.headline["worst"] = {c: worst[c] for c in checks}
    bounds = {"identity": 2e-8, "decomposition": 2e-8, "bne": TOL_BNE}
    for c in checks:
        out.add(check_le(f"max_{c}_error" if c != "bne" else "max_bne_regret", worst[c], bounds[c],
                         f"over {cases} random cases"))


def run_optimize(cfg: ExperimentConfig, out: Outcome, n_jobs: int) -> None:
    if cfg.opt("random_cases") is not None:
        checks = [c.strip() for c in _split(cfg.opt("checks", "hull, dominance"))]
        if "strict" in checks:
            return _strict_cases(cfg, out)
        return _ironing_cases(cfg, out, checks)
    n = _need_n(cfg)
    env = cfg.environment or PositionEnvironment(np.ones(n))
    if cfg.opt("revenues") is not None:
        P = np.asarray(_floats(cfg.opt("revenues"), "revenues"))
        if P.size != n + 1:
            raise ValidationError(f"revenues needs {n + 1} values P_0..P_n")
    else:
        P = multiunit_revenues(cfg.distribution, n).P
    payment = cfg.payments[0]
    strategy = cfg.opt("strategy", "strict")
    if cfg.epsilon == 0:
        res = optimal_iron_by_rank(env, P, payment)
    elif strategy == "mixture":
        res = epsilon_mixture_design(env, P, cfg.epsilon, payment)
    else:
        res = epsilon_strict_optimal(env, P, cfg.epsilon, payment)
    ironed = iron_multiunit(P)
    out.table("revenues.csv", ["k", "P_k", "P_bar_k"], [(k, P[k], ironed.P_bar[k]) for k in range(n + 1)])
    a = res.auction
    out.table("auction.csv", ["k", "weight", "alpha"], [(k + 1, a.weights[k], a.alpha[k]) for k in range(n)])
    out.documents["design.json"] = res.to_dict()
    out.headline.update(revenue=res.revenue, weights=a.weights.tolist(),
                        ironed_intervals=[list(iv) for iv in res.ironed_intervals])
    out.add(Check("feasible", 1.0 if res.feasible else 0.0, 1.0, "==", res.feasible))
    if cfg.epsilon > 0 and strategy != "mixture" and n > 1:
        out.add(check_ge("min_gap", float(np.min(-np.diff(a.weights))), cfg.epsilon - 1e-12))


def _ironing_cases(cfg: ExperimentConfig, out: Outcome, checks: list[str]) -> None:
    cases = cfg.opt("random_cases", 1000, int)
    max_n = cfg.opt("max_n", 32, int)
    competitors = cfg.opt("competitors", 1000, int)
    hull_mismatch, worst_gap = 0, -math.inf
    rows = []
    for i in range(cases):
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, i]))
        n = int(rng.integers(2, max_n + 1))
        P = random_revenues(n, rng)
        ks = np.arange(n + 1, dtype=float)
        ironed = iron_multiunit(P)
        mismatch = math.nan
        if "hull" in checks:
            ref = gift_wrap_upper_hull(ks, P)
            ref_env = np.interp(ks, ks[ref], P[ref])
            ref_env[ref] = P[ref]
            mismatch = float(np.max(np.abs(ironed.P_bar - ref_env)))
            hull_mismatch += int(mismatch != 0.0)
        gap = math.nan
        if "dominance" in checks:
            env = random_environment(n, rng)
            best = optimal_iron_by_rank(env, P).revenue
            W = random_feasible_auctions(env, competitors, rng)
            alpha = W - np.c_[W[:, 1:], np.zeros(len(W))]
            gap = float(np.max(alpha @ P[1:]) - best)
            worst_gap = max(worst_gap, gap)
        rows.append((i, n, mismatch, gap))
    out.table("cases.csv", ["case", "n", "hull_max_abs_diff", "best_competitor_minus_optimal"], rows)
    out.headline["cases"] = cases
    if "hull" in checks:
        out.headline["hull_mismatches"] = hull_mismatch
        out.add(check_le("hull_mismatches", hull_mismatch, 0, "monotone chain vs gift-wrapping reference"))
    if "dominance" in checks:
        out.headline["worst_competitor_gap"] = worst_gap
        out.add(check_le("competitor_excess_revenue", worst_gap, 1e-9,
                         f"{competitors} random feasible auctions per case"))


def _strict_cases(cfg: ExperimentConfig, out: Outcome) -> None:
    cases = cfg.opt("random_cases", 100, int)
    max_n = cfg.opt("max_n", 10, int)
    eps_spec = cfg.opt("epsilons", "0.01, 0.05, 0.1/n")
    rows = []
    worst_gap, worst_ratio, worst_margin_ratio = math.inf, math.inf, math.inf
    skipped = 0
    for i in range(cases):
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, i]))
        n = int(rng.integers(2, max_n + 1))
        env = random_environment(n, rng)
        d = random_distribution(rng)
        P = multiunit_revenues(d, n).P
        opt = optimal_iron_by_rank(env, P).revenue
        for eps in _epsilons(eps_spec, n):
            if eps > max_admissible_epsilon(env):
                skipped += 1
                rows.append((i, n, d.family, eps, opt, math.nan, math.nan, math.nan, math.nan))
                continue
            res = epsilon_strict_optimal(env, P, eps)
            gap = float(np.min(-np.diff(res.auction.weights)))
            # the uniform-mixture argument only yields margins eps / n
            fine = epsilon_strict_optimal(env, P, eps / n)
            ratio = res.revenue / ((1 - eps) * opt) if opt > 0 else math.inf
            fine_ratio = fine.revenue / ((1 - eps) * opt) if opt > 0 else math.inf
            worst_gap = min(worst_gap, gap - eps)
            worst_ratio = min(worst_ratio, ratio)
            worst_margin_ratio = min(worst_margin_ratio, fine_ratio)
            rows.append((i, n, d.family, eps, opt, res.revenue, gap, ratio, fine_ratio))
    out.table("cases.csv", ["case", "n", "family", "epsilon", "optimal_revenue", "strict_revenue", "min_gap",
                            "strict_over_1_minus_eps_opt", "gap_eps_over_n_over_1_minus_eps_opt"], rows)
    out.headline.update(cases=cases, skipped_inadmissible=skipped, worst_gap_minus_eps=worst_gap,
                        worst_revenue_ratio=worst_ratio, worst_revenue_ratio_gap_eps_over_n=worst_margin_ratio)
    out.add(check_ge("min_gap_minus_eps", worst_gap, -1e-12))
    out.add(check_ge("strict_revenue_over_(1-eps)opt", worst_ratio, 1.0 - 1e-12,
                     "gap eps auction against (1 - eps) OPT"))
    out.add(check_ge("gap_eps_over_n_revenue_over_(1-eps)opt", worst_margin_ratio, 1.0 - 1e-12,
                     "gap eps/n auction against (1 - eps) OPT"))


def run_estimate_pk(cfg: ExperimentConfig, out: Outcome, n_jobs: int) -> None:
    if _bool(cfg.opt("design", False)):
        return _design_from_estimates(cfg, out)
    d = cfg.distribution
    n = _need_n(cfg)
    P = multiunit_revenues(d, n).P
    ks = [int(k) for k in _ints(cfg.opt("k"), "k")] if cfg.opt("k") is not None else list(range(1, n))
    for payment in cfg.payments:
        a = build_auction(cfg, d, payment)
        bf = bid_function(d, a)
        reports = []
        for N in cfg.n_grid:
            for k in ks:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    reports.append(mse_experiment(d, a, k, int(N), cfg.trials, cfg.seed, truth=float(P[k]),
                                                  bid_fn=bf, n_jobs=n_jobs))
        rows = [r.row() for r in reports]
        header = list(rows[0])
        out.table(f"estimates_{payment.value}.csv", header, [[r[h] for h in header] for r in rows])
        out.headline[payment.value] = {"weights": a.weights.tolist(),
                                       "rmse": {f"N={r.N},k={r.k}": r.rmse for r in reports},
                                       "bound": {f"N={r.N},k={r.k}": r.bound for r in reports}}


def _design_from_estimates(cfg: ExperimentConfig, out: Outcome) -> None:
    d = cfg.distribution
    eps = cfg.epsilon
    if eps <= 0:
        raise ValidationError("design-from-estimates needs [auction] epsilon > 0")
    n_values = _ints(cfg.opt("n_values", "2, 3, 4, 5, 6, 7, 8"), "n_values")
    instances = cfg.opt("instances", 5, int)
    N = cfg.opt("N", 10_000, int)
    G = cfg.opt("z_grid", 4096, int)
    target = cfg.opt("recovery", 0.95, float)
    q = np.linspace(0.0, 1.0, G + 1)[:-1]
    z_rows, rows = [], []
    worst_z, worst_rec = -math.inf, math.inf
    for n in n_values:
        P = multiunit_revenues(d, n)
        for j in range(instances):
            env = random_environment(n, np.random.SeedSequence([cfg.seed, n, j]))
            opt = optimal_iron_by_rank(env, P)
            for pi, payment in enumerate(cfg.payments):
                a = epsilon_mixture(opt.auction.with_payment(payment), eps)
                for k in range(1, n + 1):
                    zmax = float(np.max(z_weight(a, k, q)))
                    worst_z = max(worst_z, zmax - n / eps)
                    z_rows.append((n, j, payment.value, k, zmax, n / eps))
                bids = sample_bids(d, a, N, np.random.SeedSequence([cfg.seed, n, j, pi]), bid_fn=bid_function(d, a))
                P_hat = estimate_all_pk(EmpiricalBidFunction(bids), a)
                design = optimal_iron_by_rank(env, P_hat, payment)
                recovered = P.revenue(design.auction) / opt.revenue if opt.revenue > 0 else 1.0
                worst_rec = min(worst_rec, recovered)
                rows.append((n, j, payment.value, " ".join(repr(float(w)) for w in env.weights), opt.revenue,
                             P.revenue(design.auction), recovered))
    out.table("z_weights.csv", ["n", "instance", "payment", "k", "sup_Z", "n_over_eps"], z_rows)
    out.table("design.csv", ["n", "instance", "payment", "environment", "optimal_revenue", "designed_revenue",
                             "recovered"], rows)
    out.headline.update(worst_sup_Z_minus_n_over_eps=worst_z, worst_recovery=worst_rec, N=N, epsilon=eps)
    out.add(check_le("sup_Z_minus_n_over_eps", worst_z, 1e-6))
    out.add(check_ge("recovered_fraction", worst_rec, target, f"design from estimates at N={N}"))


def run_revenue_curve(cfg: ExperimentConfig, out: Outcome, n_jobs: int) -> None:
    d = cfg.distribution
    payment = cfg.payments[0]
    a = build_auction(cfg, d, payment)
    band = tuple(_floats(cfg.opt("band", "0.2, 0.8"), "band"))
    scale = cfg.opt("bandwidth_scale", 1.0, float)
    k = cfg.opt("k", 1, int)
    if _bool(cfg.opt("separation", False)):
        res = rate_separation_experiment(d, a, cfg.n_grid, cfg.seed, k=k, T=cfg.trials, band=band,
                                         bandwidth_scale=scale, G=cfg.opt("grid", 121, int))
        out.table("separation.csv", ["N", "pk_rmse", "curve_sup_rmse", "curve_exceeds_pk"],
                  zip(res.Ns, res.pk_rmse, res.curve_rmse, res.separated))
        out.headline.update(pk_exponent=res.pk_exponent, curve_exponent=res.curve_exponent,
                            weights=a.weights.tolist())
        lo, hi = _floats(cfg.opt("exponent_range", "-0.45, -0.2"), "exponent_range")
        out.add(check_in("curve_exponent", res.curve_exponent, lo, hi))
        n_min = cfg.opt("separation_from", 1000, int)
        sep = [c - p for N, c, p in zip(res.Ns, res.curve_rmse, res.pk_rmse) if N >= n_min]
        out.add(check_ge("min_curve_minus_pk_error", min(sep), 0.0, f"N >= {n_min}"))
        return
    N = cfg.n_grid[0]
    bids = sample_bids(d, a, N, np.random.SeedSequence([cfg.seed, N]), bid_fn=bid_function(d, a))
    fn = EmpiricalBidFunction(bids)
    h = default_bandwidth(fn.bids, scale)
    grid = np.linspace(0.0, 1.0, cfg.opt("grid", 101, int))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        est = estimate_revenue_curve(fn, a, h=h, grid=grid, truth=d)
    rows = list(est.rows())
    header = list(rows[0])
    out.table("revenue_curve.csv", header, [[r[c] for c in header] for r in rows])
    out.headline.update(N=N, bandwidth=h, sup_error=est.sup_error(band), band=list(band))


def run_approx_check(cfg: ExperimentConfig, out: Outcome, n_jobs: int) -> None:
    if not cfg.distributions:
        raise ValidationError("approx-check needs at least one [distribution] section")
    n_values = _ints(cfg.opt("n_values", "2, 4, 8"), "n_values")
    environments = cfg.opt("environments", 3, int)
    trials = cfg.trials
    rows = []
    minima: dict[str, float] = {}
    for di, (label, d) in enumerate(cfg.distributions):
        regular = is_regular(d.revenue_curve())
        for n in n_values:
            P = multiunit_revenues(d, n)
            seed = _sub_seed(cfg.seed, di, n)
            results = []
            if regular:
                for k in range(1, n // 2 + 1):
                    results.append(("regular", f"k={k}", check_regular_approx(d, n, k, trials, seed, P)))
            else:
                q_values = [q for q in _floats(cfg.opt("q_values", "0, 0.25, 0.5, 0.75"), "q_values")
                            if q <= 1 - 1 / n + 1e-12]
                for q in q_values:
                    results.append(("irregular", f"q={q:g}", check_irregular_approx(d, n, q, None, seed, P)))
            for e in range(environments):
                env = random_environment(n, np.random.SeedSequence([cfg.seed, di, n, e]))
                res = check_position_approx(d, env, trials, seed, regular, P)
                results.append(("position", " ".join(f"{w:.4f}" for w in env.weights), res))
            for check, param, res in results:
                rows.append((label, d.family, n, check, param, res.ratio, res.stderr, res.threshold, res.passed))
                key = f"{check}[{label}]"
                minima[key] = min(minima.get(key, math.inf), res.ratio - res.threshold + 3 * res.stderr)
                out.headline.setdefault("min_ratio", {})
                out.headline["min_ratio"][key] = min(out.headline["min_ratio"].get(key, math.inf), res.ratio)
    out.table("approx.csv", ["distribution", "family", "n", "check", "parameter", "ratio", "stderr",
                             "threshold", "passed"], rows)
    for key, margin in minima.items():
        out.add(check_ge(f"{key}_ratio_minus_threshold_plus_3se", margin, 0.0))


def run_rate_sweep(cfg: ExperimentConfig, out: Outcome, n_jobs: int) -> None:
    d = cfg.distribution
    k = cfg.opt("k", 1, int)
    lo, hi = _floats(cfg.opt("exponent_range", "-0.6, -0.4"), "exponent_range")
    factor = cfg.opt("bound_factor", 2.0, float)
    for payment in cfg.payments:
        a = build_auction(cfg, d, payment)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            sweep = rate_sweep(d, a, k, cfg.n_grid, cfg.trials, cfg.seed, n_jobs=n_jobs)
        rows = [r.row() for r in sweep.reports]
        header = list(rows[0])
        out.table(f"sweep_{payment.value}.csv", header, [[r[h] for h in header] for r in rows])
        out.headline[payment.value] = {"exponent": sweep.exponent, "bid_exponent": sweep.bid_exponent,
                                       "weights": a.weights.tolist(),
                                       "max_rmse_over_bound": max(r.bound_ratio for r in sweep.reports),
                                       "bound": {str(r.N): r.bound for r in sweep.reports}}
        out.add(check_in(f"exponent[{payment.value}]", sweep.exponent, lo, hi))
        out.add(check_le(f"max_rmse_over_bound[{payment.value}]", max(r.bound_ratio for r in sweep.reports),
                         factor))


RUNNERS = {
    "equilibrium": run_equilibrium,
    "optimize": run_optimize,
    "estimate-pk": run_estimate_pk,
    "revenue-curve": run_revenue_curve,
    "approx-check": run_approx_check,
    "rate-sweep": run_rate_sweep,
}


# --- driver ----------------------------------------------------------------------


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run_experiment(config_ref: str, *, seed: int | None = None, threads: int = 1, out_dir=None,
                   strict: bool = False) -> tuple[int, Path | None]:
    """Run one config; returns ``(exit status, output directory)``."""
    path = resolve_config_path(config_ref)
    raw = load_config(path)
    name = path.name.rsplit(".", 1)[0]
    cfg = resolve_config(raw, name=name, seed_override=seed)
    out_path = Path(out_dir or cfg.output or Path("rankauction-runs") / cfg.name)
    started = datetime.now(timezone.utc)
    t0 = time.perf_counter()
    outcome = Outcome(strict=strict)
    status = EXIT_OK
    error = None
    log.info("running %s (%s) seed=%d -> %s", cfg.name, cfg.kind, cfg.seed, out_path)
    try:
        RUNNERS[cfg.kind](cfg, outcome, max(1, int(threads)))
    except CheckFailed as exc:
        status, error = EXIT_CHECK_FAILED, str(exc)
    except (ValidationError, ConfigError):
        raise
    except InfeasibleEpsilonError as exc:
        raise ValidationError(str(exc)) from exc
    files = {}
    for fname, (header, rows) in outcome.tables.items():
        files[fname] = write_csv(out_path / fname, header, rows)
    for fname, doc in outcome.documents.items():
        files[fname] = write_json(out_path / fname, doc)
    files["checks.csv"] = write_csv(out_path / "checks.csv", ["check", "value", "relation", "bound", "passed",
                                                              "detail"],
                                    [(c.name, c.value, c.relation, c.bound, c.passed, c.detail)
                                     for c in outcome.checks])
    passed = all(c.passed for c in outcome.checks) and error is None
    if status == EXIT_OK and not passed:
        status = EXIT_CHECK_FAILED
    summary = {"experiment": cfg.name, "kind": cfg.kind, "seed": cfg.seed, "headline": outcome.headline,
               "checks": [asdict(c) for c in outcome.checks], "passed": passed}
    if error:
        summary["aborted"] = error
    files["summary.json"] = write_json(out_path / "summary.json", summary)
    manifest = {
        "tool": "rankauction", "version": __version__, "config_path": str(path), "config": cfg.to_dict(),
        "threads": int(threads), "strict": strict, "started": started.isoformat(),
        "finished": datetime.now(timezone.utc).isoformat(), "elapsed_seconds": time.perf_counter() - t0,
        "python": platform.python_version(), "numpy": np.__version__,
        "files": {fname: _sha256(p) for fname, p in sorted(files.items())}, "exit_status": status,
    }
    write_json(out_path / "manifest.json", manifest)
    for c in outcome.checks:
        log.info("%s %s: %r %s %s", "PASS" if c.passed else "FAIL", c.name, c.value, c.relation, c.bound)
    return status, out_path


def list_experiments() -> list[dict]:
    """Catalog of bundled configs: name, kind, criterion, description."""
    out = []
    for name, path in bundled_configs().items():
        raw = load_config(path)
        exp = raw.get("experiment", {})
        out.append({"name": name, "kind": exp.get("kind", ""), "criterion": exp.get("criterion", ""),
                    "description": exp.get("description", "")})
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rankauction", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment config")
    run.add_argument("config_pos", nargs="?", metavar="CONFIG", help="config path or bundled config name")
    run.add_argument("--config", dest="config_opt", metavar="PATH", help="config path or bundled config name")
    run.add_argument("--seed", type=int, help="override the config seed (unsigned 64-bit)")
    run.add_argument("--threads", type=int, default=1, help="worker threads for independent trials")
    run.add_argument("--out", metavar="DIR", help="output directory")
    run.add_argument("--strict", action="store_true", help="stop at the first missed tolerance")
    sub.add_parser("list-experiments", help="list the bundled reproduction configs")
    show = sub.add_parser("show-config", help="print a bundled config")
    show.add_argument("name")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on bad usage, 0 on --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        if args.command == "list-experiments":
            for item in list_experiments():
                print(f"{item['name']:<26} {item['kind']:<14} criterion {item['criterion']:<4} "
                      f"{item['description']}")
            return EXIT_OK
        if args.command == "show-config":
            sys.stdout.write(resolve_config_path(args.name).read_text(encoding="utf-8"))
            return EXIT_OK
        ref = args.config_opt or args.config_pos
        if ref is None:
            print("error: a config is required (CONFIG or --config PATH)", file=sys.stderr)
            return EXIT_PARSE
        status, out_path = run_experiment(ref, seed=args.seed, threads=args.threads, out_dir=args.out,
                                          strict=args.strict)
        summary = json.loads((out_path / "summary.json").read_text(encoding="utf-8"))
        for c in summary["checks"]:
            print(f"{'PASS' if c['passed'] else 'FAIL'} {c['name']}: {c['value']!r} {c['relation']} {c['bound']}")
        print(f"{'ok' if status == EXIT_OK else 'FAILED'}: artifacts in {out_path}")
        return status
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001 - any other failure is a runtime failure
        log.debug("runtime failure", exc_info=True)
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
