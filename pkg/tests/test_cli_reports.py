import csv
import json
import logging
import math
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, strategies as st

from solitonlab import cli, reports, suite
from solitonlab.catalog import SolitonSpec
from solitonlab.variation import CheckReport

CYL = ["--soliton", "grim-reaper-cylinder", "--n", "2", "--window=-1,1;0,1"]


def report(check="x", **kw):
    base = dict(check=check, soliton=None, resolutions=[16], backend="analytic", sup_residual=0.5,
                l2_residual=None, tolerance=1.0, passed=True)
    base.update(kw)
    return CheckReport(**base)


# --- serialisation ----------------------------------------------------------------------

def test_floats_carry_17_significant_digits():
    text = reports.dumps({"a": 0.1, "b": np.float64(1 / 3), "c": float("nan"), "d": np.int64(3)})
    doc = json.loads(text)
    assert '"a": 0.10000000000000001' in text
    assert doc == {"a": 0.1, "b": 1 / 3, "c": None, "d": 3}


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_float_text_round_trips(x):
    assert json.loads(reports.dumps([x]))[0] == x


def test_convergence_csv_columns():
    spec = SolitonSpec("grim-reaper-cylinder", 2, window=((-1, 1), (0, 1)))
    rep = suite.convergence_study("soliton_residual", spec, [16, 32, 64], "fd")
    rows = list(csv.DictReader(reports.convergence_csv(rep).splitlines()))
    assert list(rows[0])[:4] == ["resolution", "sup_residual", "l2_residual", "order"]
    assert [int(r["resolution"]) for r in rows] == [16, 32, 64]
    assert rows[0]["order"] == "" and float(rows[2]["order"]) == pytest.approx(2, abs=0.05)


def test_plot_data_empty_set_warns(tmp_path, caplog):
    with caplog.at_level(logging.WARNING):
        assert reports.emit_plot_data([], str(tmp_path / "p.csv")) is None
    assert "nothing written" in caplog.text
    assert not (tmp_path / "p.csv").exists()


def test_plot_data_rows_and_overwrite_notice(tmp_path, caplog):
    table = [{"component": "c", "resolution": r, "sup_residual": 1.0 / r**2, "l2_residual": 0.0,
              "order": None if r == 16 else 2.0} for r in (16, 32)]
    conv = report("converge:commutation", details={"table": table})
    scan = report("stability_scan", details={"samples": [
        {"sample": i, "fd": 1.0, "quadratic_form": 1.0, "drifted_square": 1.0} for i in range(3)]})
    path = tmp_path / "p.csv"
    path.write_text("old")
    with caplog.at_level(logging.WARNING):
        reports.emit_plot_data([conv, scan], str(path))
    assert "overwriting" in caplog.text
    rows = list(csv.DictReader(path.read_text().splitlines()))
    assert len(rows) == 2 + 1 + 3
    assert [r["sample"] for r in rows if r["sample"]] == ["0", "1", "2"]


# --- suite --------------------------------------------------------------------------------

def test_exact_f_value_closed_forms():
    assert suite.exact_f_value(SolitonSpec("grim-reaper-cylinder", 2, window=((-1, 1), (0, 1)))) == \
        pytest.approx(2 * math.tan(1), rel=1e-15)
    assert suite.exact_f_value(SolitonSpec("flat-plane", 2, window=((0, 1), (0, 1)))) == \
        pytest.approx(math.e - 1, rel=1e-15)


def test_convergence_analytic_is_flat_at_floor():
    spec = SolitonSpec("grim-reaper-cylinder", 2, window=((-1, 1), (0, 1)))
    rep = suite.convergence_study("constant_field", spec, [16, 32, 64], "analytic")
    assert rep.passed and all(r["sup_residual"] <= 1e-6 for r in rep.details["table"])


def test_convergence_rejects_non_doubling_ladder():
    with pytest.raises(Exception, match="double"):
        suite.convergence_study("commutation", SolitonSpec("grim-reaper-cylinder"), [16, 24, 48])


def test_checks_are_independent_of_order():
    cfg = suite.SuiteConfig(SolitonSpec("grim-reaper-cylinder", 2, resolution=32))
    a = suite.run_check("constant_field", cfg)
    suite.run_check("commutation", cfg)
    b = suite.run_check("constant_field", cfg)
    assert a.sup_residual == b.sup_residual


# --- command line ---------------------------------------------------------------------------

def run(args, capsys=None):
    code = cli.main(args)
    return code


def test_verify_passing_check(tmp_path, capsys):
    out = tmp_path / "r.json"
    assert cli.main(["verify", *CYL, "--res", "32", "--check", "soliton_residual", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["reports"][0]["passed"] and doc["config"]["seed"] == 42
    assert doc["reports"][0]["wall_clock_seconds"] is None
    assert "PASS" in capsys.readouterr().out


def test_failing_check_exits_1_and_names_it(capsys):
    code = cli.main(["verify", *CYL, "--res", "32", "--check", "soliton_residual",
                     "--tol", "soliton_residual=0"])
    assert code == 1
    assert "soliton_residual" in capsys.readouterr().err


@pytest.mark.parametrize("args", [
    ["verify", "--soliton", "bowl"],
    ["verify", "--check", "nope"],
    ["verify", "--tol", "nope=1"],
    ["verify", "--backend", "spectral"],
    ["verify", "--soliton", "grim-reaper-cylinder", "--window=-1.6,1.6;0,1"],
    ["converge", "--resolutions", "16,24,48"],
])
def test_usage_errors_exit_2(args, capsys):
    with pytest.raises(SystemExit) as err:
        cli.main(args)
    assert err.value.code == 2


def test_unknown_soliton_names_catalog(capsys):
    with pytest.raises(SystemExit):
        cli.main(["verify", "--soliton", "bowl"])
    assert "grim-reaper-product" in capsys.readouterr().err


def test_converge_writes_csv(tmp_path):
    out = tmp_path / "conv.csv"
    code = cli.main(["converge", "--check", "soliton_residual", *CYL, "--resolutions", "16,32,64",
                     "--backend", "fd", "--out", str(out)])
    assert code == 0
    rows = list(csv.DictReader(out.read_text().splitlines()))
    assert [float(r["order"]) for r in rows[1:]] == pytest.approx([2, 2], abs=0.05)


def test_replay_reproduces_report(tmp_path, capsys):
    out = tmp_path / "r.json"
    cli.main(["verify", *CYL, "--res", "32", "--check", "constant_field,commutation", "--seed", "3", "--out", str(out)])
    assert cli.main(["replay", str(out)]) == 0
    assert "reproduces" in capsys.readouterr().out


def test_replay_detects_tampering(tmp_path):
    out = tmp_path / "r.json"
    cli.main(["verify", *CYL, "--res", "32", "--check", "soliton_residual", "--out", str(out)])
    doc = json.loads(out.read_text())
    doc["reports"][0]["sup_residual"] = 1.0
    out.write_text(json.dumps(doc))
    assert cli.main(["replay", str(out)]) == 1


def test_run_config_round_trip():
    cfg = cli.RunConfig("verify", "grim-reaper-product", 2, (1.0, 2.0), ((-0.7, 0.7), (-0.7, 0.7)),
                        32, "fd", ("constant_field",), 1e-3, 5, 7, {"constant_field": 1e-5})
    again = cli.RunConfig.from_dict(json.loads(reports.dumps(cfg.to_dict())))
    assert again == cfg


def test_thread_cap_does_not_change_results(tmp_path, monkeypatch):
    texts = []
    for threads in ("1", "3"):
        monkeypatch.setenv("SOLITONLAB_THREADS", threads)
        out = tmp_path / f"r{threads}.json"
        cli.main(["verify", *CYL, "--res", "32", "--check", "constant_field,commutation,ibp", "--out", str(out)])
        texts.append(out.read_bytes())
    assert texts[0] == texts[1]


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "solitonlab", "verify", "--res", "16",
                           "--check", "lagrangian_defect"], capture_output=True, text=True)
    assert proc.returncode == 0 and "lagrangian_defect" in proc.stdout
