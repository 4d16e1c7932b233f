import json
import os

import numpy as np
import pytest

from rankauction import RankBasedAuction, TruncatedExponential, bid_function
from rankauction.cli import (EXIT_CHECK_FAILED, EXIT_OK, EXIT_PARSE, EXIT_VALIDATION, list_experiments,
                             load_config_text, main, resolve_config, run_experiment)
from rankauction.exceptions import ConfigError, ValidationError
from rankauction.io import (atomic_write_text, csv_text, read_csv, write_bid_function, write_csv, write_json)


# --- io -----------------------------------------------------------------------------------------

def test_csv_format(tmp_path):
    text = csv_text(["a", "b", "c", "d"], [[1, 0.1, True, None], [np.int64(2), np.float64(1 / 3), False, "x"]])
    assert text == "a,b,c,d\n1,0.1,true,\n2,0.3333333333333333,false,x\n"
    assert "\r" not in text
    path = write_csv(tmp_path / "sub" / "t.csv", ["k", "v"], [[0, 0.5]])
    assert read_csv(path) == (["k", "v"], [["0", "0.5"]])
    with pytest.raises(ValueError):
        csv_text(["a"], [[1, 2]])


def test_atomic_write_leaves_no_temp_files(tmp_path):
    target = tmp_path / "out.txt"
    atomic_write_text(target, "one")
    atomic_write_text(target, "two")
    assert target.read_text() == "two"
    assert os.listdir(tmp_path) == ["out.txt"]


def test_json_is_sorted_and_numpy_safe(tmp_path):
    path = write_json(tmp_path / "x.json", {"b": np.float64(0.5), "a": np.arange(3), "c": np.bool_(True)})
    text = path.read_text()
    assert json.loads(text) == {"a": [0, 1, 2], "b": 0.5, "c": True}
    assert text.index('"a"') < text.index('"b"')


def test_bid_function_csv(tmp_path):
    bf = bid_function(TruncatedExponential(1.0), RankBasedAuction.uniform_marginal(3), G=65)
    header, rows = read_csv(write_bid_function(tmp_path / "b.csv", bf))
    assert header == ["q", "bid"] and len(rows) == 65
    assert float(rows[-1][1]) == bf.bids[-1]


# --- config parsing --------------------------------------------------------------------------------

GOOD = """
[experiment]
kind = equilibrium
seed = 7
[distribution]
family = piecewise_linear
knots = 0:0, 0.5:0.2, 1:1   # inline comment
[auction]
format = first_price, all_pay
weights = 1, 0.5, 0
"""


def test_parse_ini_config():
    cfg = resolve_config(load_config_text(GOOD))
    assert cfg.kind == "equilibrium" and cfg.seed == 7 and cfg.n == 3
    label, d = cfg.distributions[0]
    assert d.v(0.25) == pytest.approx(0.1)
    assert [p.value for p in cfg.payments] == ["first_price", "all_pay"]
    assert resolve_config(load_config_text(GOOD), seed_override=99).seed == 99


def test_parse_json_config():
    raw = load_config_text(json.dumps({"experiment": {"kind": "equilibrium", "seed": 3},
                                       "distribution": {"family": "uniform01"},
                                       "auction": {"weights": [1, 0]}}))
    cfg = resolve_config(raw)
    assert cfg.seed == 3 and cfg.n == 2


@pytest.mark.parametrize("text", ["[experiment\nkind = x", "kind = equilibrium", "{not json"])
def test_parse_errors(text):
    with pytest.raises(ConfigError):
        load_config_text(text)


@pytest.mark.parametrize("text", [
    "[experiment]\nkind = equilibrium\n",                       # no seed
    "[experiment]\nkind = teleport\nseed = 1\n",                 # unknown kind
    "[experiment]\nkind = equilibrium\nseed = -1\n",             # seed out of range
    "[experiment]\nkind = equilibrium\nseed = 1\n[bogus]\nx = 1\n",
    "[experiment]\nkind = equilibrium\nseed = 1\n[distribution]\nfamily = lognormal\n",
    "[experiment]\nkind = optimize\nseed = 1\n[auction]\nweights = optimal\n",
    "[experiment]\nkind = equilibrium\nseed = 1\n[environment]\nn = 3\nweights = 1, 0.5\n",
])
def test_validation_errors(text):
    with pytest.raises(ValidationError):
        resolve_config(load_config_text(text))


# --- command line -------------------------------------------------------------------------------------

def test_list_experiments(capsys):
    items = list_experiments()
    names = {i["name"] for i in items}
    assert len(items) >= 8 and {"rate_sweep_allpay", "thm35_regular", "uniform_n2"} <= names
    assert main(["list-experiments"]) == EXIT_OK
    assert "rate_sweep_allpay" in capsys.readouterr().out
    assert main(["show-config", "uniform_n2"]) == EXIT_OK
    assert "[experiment]" in capsys.readouterr().out


def test_run_uniform_n2(tmp_path, capsys):
    assert main(["run", "uniform_n2", "--out", str(tmp_path)]) == EXIT_OK
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["headline"]["P"][1] == pytest.approx(1 / 6, abs=1e-12)
    assert summary["passed"]
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["config"]["seed"] == 1 and manifest["exit_status"] == 0
    assert set(manifest["files"]) >= {"revenues.csv", "bids_first_price.csv", "bids_all_pay.csv", "checks.csv"}
    out = capsys.readouterr().out
    assert "PASS expected_P" in out and "FAIL" not in out


def test_run_json_config_and_seed_override(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"experiment": {"kind": "equilibrium", "seed": 5},
                               "distribution": {"family": "truncated_exponential", "rate": 2.0},
                               "auction": {"weights": "uniform_marginal", "format": "all_pay"},
                               "environment": {"n": 3}}))
    status, out = run_experiment(str(cfg), seed=11, out_dir=tmp_path / "run")
    assert status == EXIT_OK
    assert json.loads((out / "manifest.json").read_text())["config"]["seed"] == 11


def test_exit_codes(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("[experiment\n")
    assert main(["run", str(bad), "--out", str(tmp_path / "a")]) == EXIT_PARSE
    assert main(["run", str(tmp_path / "missing.cfg")]) == EXIT_PARSE
    assert main(["run"]) == EXIT_PARSE
    noseed = tmp_path / "noseed.cfg"
    noseed.write_text("[experiment]\nkind = equilibrium\n[distribution]\nfamily = uniform01\n"
                      "[auction]\nweights = 1, 0\n")
    assert main(["run", str(noseed), "--out", str(tmp_path / "b")]) == EXIT_VALIDATION
    assert main(["run", str(noseed), "--seed", "4", "--out", str(tmp_path / "c")]) == EXIT_OK


def test_missed_tolerance_exits_one(tmp_path):
    cfg = tmp_path / "wrong.cfg"
    cfg.write_text("[experiment]\nkind = equilibrium\nseed = 1\nexpect_P = 0, 0.2, 0\ntol = 1e-8\n"
                   "[distribution]\nfamily = uniform01\n[auction]\nweights = 1, 0\n")
    assert main(["run", str(cfg), "--out", str(tmp_path / "a")]) == EXIT_CHECK_FAILED
    assert main(["run", str(cfg), "--strict", "--out", str(tmp_path / "b")]) == EXIT_CHECK_FAILED
    summary = json.loads((tmp_path / "b" / "summary.json").read_text())
    assert "aborted" in summary and not summary["passed"]
