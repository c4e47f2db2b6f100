import csv
import io
import json
import math
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sipp import cli
from sipp import experiments as E
from sipp import models as M
from sipp.errors import ConfigError


def rows_by_name(report):
    out = {}
    for r in report.rows:
        out.setdefault(r["statistic"], []).append(r)
    return out


# --------------------------------------------------------------------------
# config and report plumbing


def test_config_validation():
    with pytest.raises(ConfigError):
        E.ExperimentConfig("no-such-experiment")
    with pytest.raises(ConfigError):
        E.ExperimentConfig("records", reps=0)
    with pytest.raises(ConfigError):
        E.ExperimentConfig("records", workers=0)
    with pytest.raises(ConfigError):
        E.ExperimentConfig.from_dict({"name": "records", "bogus": 1})
    with pytest.raises(ConfigError):
        E.ExperimentConfig.from_dict({"reps": 10})
    cfg = E.ExperimentConfig.from_dict({"name": "records", "n": [10, 100], "tolerances": {"ks_max": 0.1}})
    assert cfg.n_list([5]) == [10, 100] and cfg.main_n(7) == 100 and cfg.tol("ks_max", 0.05) == 0.1


@given(st.floats(-10, 10), st.floats(-10, 10), st.floats(0, 5), st.sampled_from(["abs", "upper", "lower", "info"]))
def test_row_verdict_follows_fields(value, target, band, kind):
    r = E.Row("x", value, target, band, kind)
    want = {"abs": abs(value - target) <= band, "upper": value <= target + band,
            "lower": value >= target - band, "info": True}[kind]
    assert r.passed == want
    assert r.verdict == ("info" if kind == "info" else ("pass" if want else "fail"))
    assert not E.Row("x", math.nan, 0.0, 1.0, "abs").passed


def test_records_exact_example():
    report = E.run_experiment(E.ExperimentConfig("records", n=3))
    rows = rows_by_name(report)
    pmf = {int(k[4:-1]): v[0]["value"] for k, v in rows.items() if k.startswith("pmf[")}
    assert pmf == pytest.approx({1: 1 / 3, 3: 1 / 3, 4: 1 / 6, 6: 1 / 6}, abs=1e-15)
    assert rows["tv_vs_permutations"][0]["value"] == 0.0
    assert report.passed


def test_json_roundtrip(tmp_path):
    report = E.run_experiment(E.ExperimentConfig("sqrt-ratio", reps=2000, params={"K": 500}))
    back = E.ExperimentReport.from_json(report.to_json())
    assert back == report
    csv_path, json_path = report.write(tmp_path / "out")
    assert E.ExperimentReport.from_json(json_path.read_text()) == report
    parsed = list(csv.DictReader(io.StringIO(csv_path.read_text())))
    assert [r["statistic"] for r in parsed] == [r["statistic"] for r in report.rows]
    assert tuple(parsed[0]) == E.CSV_FIELDS


def test_report_verdicts_rederivable():
    report = E.run_experiment(E.ExperimentConfig("theorem-ex", reps=5000, n=1000))
    for r in report.rows:
        row = E.Row(r["statistic"], r["value"], r["target"], r["band"], r["kind"], r["n"])
        assert row.verdict == r["verdict"]


def test_primes_csv_byte_identical():
    cfg = dict(name="primes-geometric", n=10_000, reps=100_000, seed=42)
    a = E.run_experiment(E.ExperimentConfig(**cfg, workers=1)).to_csv()
    b = E.run_experiment(E.ExperimentConfig(**cfg, workers=1)).to_csv()
    c = E.run_experiment(E.ExperimentConfig(**cfg, workers=4)).to_csv()
    assert a == b == c


def test_dickman_2d_example():
    report = E.run_experiment(E.ExperimentConfig("dickman-2d", params={"p": 0.3}, reps=100_000))
    rows = rows_by_name(report)
    for stat in ("direct_mean_x1", "direct_mean_x2", "direct_sum_ks_vs_D1"):
        assert rows[stat][0]["verdict"] == "pass"
    assert rows["direct_mean_x1"][0]["target"] == 0.3
    assert report.passed


@pytest.mark.parametrize("name", sorted(E.REGISTRY))
def test_every_experiment_passes_at_default(name):
    report = E.run_experiment(E.ExperimentConfig(name))
    failed = [r["statistic"] for r in report.rows if r["verdict"] == "fail"]
    assert not failed
    assert report.wall_clock < 300


def test_reference_csv_first_row():
    text = E.run_reference_csv(1.0)
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == ["x", "density", "cdf"]
    x, f, F = map(float, rows[1])
    assert x == pytest.approx(1e-4) and f == pytest.approx(0.56146, abs=1e-5) and F == pytest.approx(x * f, rel=1e-9)


def test_diagnose_csv():
    text = E.run_diagnose_csv(M.theorem_ex(100), [(1.0, 2.0)], [100])
    rows = list(csv.DictReader(io.StringIO(text)))
    assert len(rows) == 1 and float(rows[0]["product_gap"]) == 0.0 and float(rows[0]["product"]) == 0.5
    empty = E.run_diagnose_csv(M.theorem_ex(100), [], [100])
    assert empty.strip() == ",".join(("n", "a", "b", "c", "product", "product_target", "product_gap", "sum",
                                      "sum_target", "sum_gap", "indices"))


# --------------------------------------------------------------------------
# command line


def test_cli_simulate(tmp_path, capsys):
    code = cli.main(["simulate", "--experiment", "records", "--n", "3", "--out", str(tmp_path)])
    assert code == 0
    assert (tmp_path / "records.csv").exists() and (tmp_path / "records.json").exists()
    assert "pass" in capsys.readouterr().out


def test_cli_workers_byte_identical(tmp_path):
    outs = []
    for w in (1, 4):
        d = tmp_path / f"w{w}"
        assert cli.main(["simulate", "--experiment", "primes-geometric", "--reps", "20000", "--seed", "3",
                         "--workers", str(w), "--out", str(d)]) == 0
        outs.append((d / "primes-geometric.csv").read_bytes())
    assert outs[0] == outs[1]


def test_cli_config_file(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"name": "sqrt-ratio", "reps": 3000, "params": {"K": 200}}))
    assert cli.main(["simulate", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    report = E.ExperimentReport.from_json((tmp_path / "sqrt-ratio.json").read_text())
    assert report.config["reps"] == 3000


def test_cli_failure_exit_code(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"name": "primes-geometric", "reps": 5000, "tolerances": {"w1_max": 1e-6}}))
    assert cli.main(["simulate", "--config", str(cfg), "--out", str(tmp_path)]) == 1


def test_cli_error_exit_codes(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["simulate", "--config", str(bad), "--out", str(tmp_path)]) == 2
    bad.write_text(json.dumps({"name": "records", "colour": 1}))
    assert cli.main(["simulate", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert cli.main(["simulate", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 2
    assert cli.main(["reference", "--c", "1", "--h", "0.01", "--out", str(tmp_path / "r.csv")]) == 2
    with pytest.raises(SystemExit) as exc:
        cli.main(["simulate", "--experiment", "nonsense"])
    assert exc.value.code == 2


def test_cli_reference_and_diagnose(tmp_path):
    out = tmp_path / "ref.csv"
    assert cli.main(["reference", "--c", "1", "--out", str(out)]) == 0
    assert out.read_text().splitlines()[1].startswith("0.0001,0.5614594")
    model = tmp_path / "model.json"
    model.write_text(json.dumps({"sequence": {"kind": "linear-k"}, "law": {"kind": "theorem-ex", "c": 1.0},
                                 "n": 100}))
    diag_out = tmp_path / "diag.csv"
    assert cli.main(["diagnose", "--model", str(model), "--windows", "1:2,0.5:1", "--n", "100,1000",
                     "--out", str(diag_out)]) == 0
    rows = list(csv.DictReader(io.StringIO(diag_out.read_text())))
    assert len(rows) == 4
    assert max(float(r["product_gap"]) for r in rows) < 1e-12
    empty = tmp_path / "empty.csv"
    assert cli.main(["diagnose", "--model", str(model), "--windows", "", "--n", "100", "--out", str(empty)]) == 0
    assert len(empty.read_text().splitlines()) == 1


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "sipp", "simulate", "--experiment", "records", "--n", "4",
                           "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    rows = list(csv.DictReader(open(tmp_path / "records.csv")))
    assert sum(float(r["value"]) for r in rows if r["statistic"].startswith("pmf[")) == pytest.approx(1.0)
