import csv
import json
import shutil

import pytest

from dualsmooth import cli, verify
from dualsmooth.models import load_observations


def run_cli(*argv):
    return cli.main(list(argv))


@pytest.fixture(scope="module")
def fixture_dir(tmp_path_factory):
    """Copy of the bundled fixtures in a writable directory."""
    dest = tmp_path_factory.mktemp("fixtures")
    for name in (
        "model_f3.json",
        "obs_f3.json",
        "lg_scalar.json",
        "obs_lg.json",
        "grid_ou.json",
        "scenario_f3.json",
        "scenario_lg.json",
    ):
        with verify.fixture_path(name).open("rb") as src, open(dest / name, "wb") as out:
            shutil.copyfileobj(src, out)
    return dest


def read_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, list(reader)


class TestSimulate:
    def test_writes_obs_and_state(self, fixture_dir, tmp_path):
        rc = run_cli(
            "simulate",
            "--model", str(fixture_dir / "model_f3.json"),
            "--T", "1.0", "--N", "200", "--seed", "7",
            "--out-dir", str(tmp_path),
        )
        assert rc == 0
        obs = load_observations(tmp_path / "obs.json")
        assert obs.N == 200 and obs.z[0] == 0.0
        state = json.loads((tmp_path / "state.json").read_text())
        assert state["kind"] == "ctmc"

    def test_matches_bundled_fixture(self, fixture_dir, tmp_path):
        rc = run_cli(
            "simulate",
            "--model", str(fixture_dir / "model_f3.json"),
            "--T", "1.0", "--N", "1000", "--seed", "101",
            "--out-dir", str(tmp_path),
        )
        assert rc == 0
        assert (tmp_path / "obs.json").read_text() == (fixture_dir / "obs_f3.json").read_text()


class TestSmoothFinite:
    def test_artifacts(self, fixture_dir, tmp_path):
        out = tmp_path / "sol.csv"
        rc = run_cli(
            "smooth-finite",
            "--model", str(fixture_dir / "model_f3.json"),
            "--obs", str(fixture_dir / "obs_f3.json"),
            "--out", str(out),
        )
        assert rc == 0
        header, rows = read_csv(out)
        assert header == ["t", "state", "mu", "lambda", "pi"]
        assert len(rows) == 1001 * 3
        summary = json.loads((tmp_path / "sol.summary.json").read_text())
        assert set(summary) == {"logC", "J_opt", "route_equivalence_linf"}
        assert summary["route_equivalence_linf"] < 1e-6

    def test_byte_identical_reruns(self, fixture_dir, tmp_path):
        args = (
            "smooth-finite",
            "--model", str(fixture_dir / "model_f3.json"),
            "--obs", str(fixture_dir / "obs_f3.json"),
        )
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert run_cli(*args, "--out", str(a)) == 0
        assert run_cli(*args, "--out", str(b)) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_invalid_model_exits_one(self, fixture_dir, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"kind": "ctmc", "d": 2, "A": [[1.0, -1.0], [0.0, 0.0]], "h": [0, 0], "nu0": [0.5, 0.5]}))
        rc = run_cli(
            "smooth-finite", "--model", str(bad),
            "--obs", str(fixture_dir / "obs_f3.json"), "--out", str(tmp_path / "x.csv"),
        )
        assert rc == 1
        assert "A[0][1]" in capsys.readouterr().err

    def test_missing_file_exits_one(self, fixture_dir, tmp_path):
        rc = run_cli(
            "smooth-finite", "--model", str(tmp_path / "nope.json"),
            "--obs", str(fixture_dir / "obs_f3.json"), "--out", str(tmp_path / "x.csv"),
        )
        assert rc == 1


class TestSmoothGrid:
    def test_artifacts(self, fixture_dir, tmp_path):
        out = tmp_path / "sol.csv"
        rc = run_cli(
            "smooth-grid",
            "--model", str(fixture_dir / "grid_ou.json"),
            "--obs", str(fixture_dir / "obs_lg.json"),
            "--out", str(out),
            "--grid-n", "100",
        )
        assert rc == 0
        header, rows = read_csv(out)
        assert header == ["t", "x", "mu", "lambda", "pi", "u"]
        assert len(rows) == 1001 * 100
        summary = json.loads((tmp_path / "sol.summary.json").read_text())
        assert set(summary) == {"logC", "hjb_residual_max", "route_equivalence_linf", "mass_drift"}


class TestSmoothLg:
    def test_artifacts(self, fixture_dir, tmp_path):
        out = tmp_path / "sol.csv"
        rc = run_cli(
            "smooth-lg",
            "--model", str(fixture_dir / "lg_scalar.json"),
            "--obs", str(fixture_dir / "obs_lg.json"),
            "--out", str(out),
        )
        assert rc == 0
        header, rows = read_csv(out)
        assert header == ["t", "mean[1]", "u[1]", "Vdiag[1]"]
        assert len(rows) == 1001
        summary = json.loads((tmp_path / "sol.summary.json").read_text())
        assert summary["rts_mean_error"] < 1e-6


class TestPlotData:
    def test_finite_layout(self, fixture_dir, tmp_path):
        sol = tmp_path / "sol.csv"
        run_cli(
            "smooth-finite",
            "--model", str(fixture_dir / "model_f3.json"),
            "--obs", str(fixture_dir / "obs_f3.json"),
            "--out", str(sol),
        )
        out = tmp_path / "plot.csv"
        assert run_cli("plot-data", "--in", str(sol), "--out", str(out)) == 0
        header, rows = read_csv(out)
        assert header == ["series", "t", "x_or_state", "value"]
        assert len(rows) == 3 * 1001 * 3  # three series per (t, state) pair
        assert {r[0] for r in rows} == {"mu", "lambda", "pi"}

    def test_empty_body_round_trips(self, tmp_path):
        src = tmp_path / "empty.csv"
        src.write_text("t,state,mu,lambda,pi\n")
        out = tmp_path / "plot.csv"
        assert run_cli("plot-data", "--in", str(src), "--out", str(out)) == 0
        header, rows = read_csv(out)
        assert header == ["series", "t", "x_or_state", "value"]
        assert rows == []

    def test_unknown_header_exits_one(self, tmp_path, capsys):
        src = tmp_path / "weird.csv"
        src.write_text("a,b,c\n1,2,3\n")
        assert run_cli("plot-data", "--in", str(src), "--out", str(tmp_path / "o.csv")) == 1
        assert "header" in capsys.readouterr().err


class TestScenarioRunner:
    def test_bundled_finite_scenario(self, fixture_dir, tmp_path):
        rc = run_cli("run", "--scenario", str(fixture_dir / "scenario_f3.json"), "--out-dir", str(tmp_path))
        assert rc == 0
        header, rows = read_csv(tmp_path / "sol.csv")
        assert len(rows) == 1001 * 3
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert summary["route_equivalence_linf"] <= 1e-6
        assert (tmp_path / "obs.json").exists() and (tmp_path / "state.json").exists()

    def test_negative_rate_scenario_exits_one(self, tmp_path, capsys):
        scen = {
            "name": "broken",
            "kind": "finite",
            "model": {"kind": "ctmc", "d": 2, "A": [[-1.0, 1.0], [2.0, -1.0]], "h": [0.0, 1.0], "nu0": [0.5, 0.5]},
            "T": 1.0,
            "N": 50,
            "seed": 1,
        }
        path = tmp_path / "scen.json"
        path.write_text(json.dumps(scen))
        assert run_cli("run", "--scenario", str(path), "--out-dir", str(tmp_path / "out")) == 1
        assert "row 1" in capsys.readouterr().err

    def test_threshold_failure_exits_two(self, fixture_dir, tmp_path, capsys):
        scen = json.loads((fixture_dir / "scenario_f3.json").read_text())
        scen["thresholds"] = {"route_equivalence_linf": 1e-30}
        path = tmp_path / "impossible.json"
        path.write_text(json.dumps(scen))
        assert run_cli("run", "--scenario", str(path), "--out-dir", str(tmp_path / "out")) == 2
        assert "route_equivalence_linf" in capsys.readouterr().err

    def test_lg_scenario(self, fixture_dir, tmp_path):
        rc = run_cli("run", "--scenario", str(fixture_dir / "scenario_lg.json"), "--out-dir", str(tmp_path))
        assert rc == 0


class TestVerifyCommand:
    def test_report_written_and_exit_zero(self, tmp_path):
        rc = run_cli("verify", "--out-dir", str(tmp_path))
        assert rc == 0
        report = json.loads((tmp_path / "report.json").read_text())
        assert report["all_passed"] is True
        assert all(c["pass"] for c in report["checks"])
        names = {c["name"] for c in report["checks"]}
        assert "finite_route_equivalence" in names and "grid_hjb_finest" in names

    def test_threshold_override_exits_two(self, tmp_path):
        tf = tmp_path / "thr.json"
        tf.write_text(json.dumps({"finite_route_equivalence": 1e-30}))
        rc = run_cli("verify", "--threshold-file", str(tf), "--out-dir", str(tmp_path))
        assert rc == 2


def test_bad_log_level_env(monkeypatch, capsys):
    monkeypatch.setenv("DUALSMOOTH_LOG", "chatty")
    assert cli.main(["verify"]) == 1
    assert "DUALSMOOTH_LOG" in capsys.readouterr().err
