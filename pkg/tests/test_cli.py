import csv
import io
import json

import numpy as np
import pytest

from conftest import synthetic_model
from netshare.cli import RESULT_COLUMNS, SCHEMA_VERSION, main, result_row
from netshare.scenario import synthetic_scenario
from netshare.strategies import StrategyResult


@pytest.fixture
def model_file(tmp_path):
    def write(**kw):
        m = synthetic_model(**kw)
        path = tmp_path / f"model{len(list(tmp_path.iterdir()))}.json"
        path.write_text(m.to_json())
        return path
    return write


def _rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_validate_ok(model_file, capsys):
    assert main(["validate", "--manifest", str(model_file())], environ={}) == 0
    assert json.loads(capsys.readouterr().out)["ok"] is True


def test_model_error_exit_code(tmp_path, capsys):
    raw = json.loads(synthetic_model().to_json())
    raw["radio"]["pathloss_exponent"] = 2.0
    (tmp_path / "bad.json").write_text(json.dumps(raw))
    assert main(["validate", "--manifest", str(tmp_path / "bad.json")], environ={}) == 1
    assert "pathloss" in capsys.readouterr().out


def test_malformed_json_is_model_error(tmp_path):
    (tmp_path / "x.json").write_text("{nope")
    assert main(["validate", "--manifest", str(tmp_path / "x.json")], environ={}) == 1


def test_missing_file_exit_code(tmp_path):
    assert main(["solve", "--manifest", str(tmp_path / "none.json")], environ={}) == 2


def test_strict_infeasible_exit_code(model_file):
    path = model_file(lam_u=400.0)
    assert main(["solve", "--manifest", str(path), "--strategy", "no-sharing"], environ={}) == 0
    assert main(["solve", "--manifest", str(path), "--strategy", "no-sharing", "--strict"], environ={}) == 3


def test_infeasible_row_is_reported(model_file, capsys):
    main(["solve", "--manifest", str(model_file(lam_u=400.0)), "--strategy", "full-ns"], environ={})
    (row,) = _rows(capsys.readouterr().out)
    assert row["feasible"] == "0" and row["reason"]


def test_solve_golden_columns_and_symmetry(model_file, capsys):
    assert main(["solve", "--manifest", str(model_file())], environ={}) == 0
    out = capsys.readouterr().out
    assert out.splitlines()[0] == ",".join(RESULT_COLUMNS)
    rows = {r["strategy"]: r for r in _rows(out)}
    assert set(rows) == {"full-ns", "no-sharing", "switchoff"}
    full = rows["full-ns"]
    assert full["schema_version"] == str(SCHEMA_VERSION)
    assert len(full["energy_w_per_km2"].split(".")[1]) == 6
    b = [float(v) for v in full["betas"].split(";")]
    assert b[0] == pytest.approx(b[1], abs=2e-3)
    assert float(full["energy_w_per_km2"]) < float(rows["no-sharing"]["energy_w_per_km2"])


def test_result_row_formatting_is_pinned():
    r = StrategyResult("full-ns", np.array([0.5, 0.25]), 1.5e-3, np.array([0.1, 1 / 3]), True, 7, 1.234e-9, "")
    row = result_row("urban", "weekday", 3, r)
    assert list(row) == list(RESULT_COLUMNS)
    assert row["energy_w_per_km2"] == "1500.000000"
    assert row["betas"] == "0.500000;0.250000"
    assert row["utilizations"] == "0.100000;0.333333"
    assert row["kkt_residual"] == "1.234e-09"


def test_environment_prefix(model_file, capsys):
    path = str(model_file())
    env = {"NETSHARE_MANIFEST": path, "NETSHARE_STRATEGY": "no-sharing", "NETSHARE_ENERGY_PROFILE": "LLP"}
    assert main(["solve"], environ=env) == 0
    (llp,) = _rows(capsys.readouterr().out)
    assert main(["solve", "--energy-profile", "HLP"], environ=env) == 0
    (hlp,) = _rows(capsys.readouterr().out)
    assert llp["strategy"] == hlp["strategy"] == "no-sharing"
    assert float(llp["energy_w_per_km2"]) > float(hlp["energy_w_per_km2"])


def test_constant_traffic_sweep_is_flat(tmp_path, capsys):
    manifest = synthetic_scenario(tmp_path / "c", side=3000.0, profile=np.ones(3),
                                  manifest_extra={"radio": {"pathloss_exponent": 4.0}})
    out = tmp_path / "out"
    assert main(["sweep", "--manifest", str(manifest), "--out", str(out), "--strategy", "full-ns",
                 "--strategy", "no-sharing", "--workers", "2"], environ={}) == 0
    rows = _rows((out / "series.csv").read_text())
    assert [int(r["slot"]) for r in rows] == [0, 0, 1, 1, 2, 2]
    for tag in ("full-ns", "no-sharing"):
        assert len({r["energy_w_per_km2"] for r in rows if r["strategy"] == tag}) == 1
    summary = _rows((out / "summary.csv").read_text())
    assert summary[0]["strategy"] == "full-ns" and summary[0]["slots"] == "3"
    assert "full-ns" in (out / "summary.txt").read_text()


def test_fixture_then_validate(tmp_path, capsys):
    assert main(["fixture", "--out", str(tmp_path / "f"), "--side", "2000", "--profile", "constant"], environ={}) == 0
    manifest = capsys.readouterr().out.strip()
    assert main(["validate", "--manifest", manifest], environ={}) == 0


def test_montecarlo_skip_and_tight_tolerance(model_file, capsys):
    raw = json.loads(synthetic_model().with_betas([0.0, 0.0]).to_json())
    path = model_file()
    off = path.with_name("off.json")
    off.write_text(json.dumps(raw))
    assert main(["montecarlo", "--manifest", str(off), "--replicates", "2", "--window", "5000"], environ={}) == 0
    assert "skip" in capsys.readouterr().out
    code = main(["montecarlo", "--manifest", str(path), "--replicates", "3", "--window", "5000",
                 "--delay-tol", "0", "--interference-tol", "0", "--sigmas", "0",
                 "--campbell-realizations", "5"], environ={})
    assert code == 1
    assert "FAIL" in capsys.readouterr().out
