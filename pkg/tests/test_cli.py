import csv
import json

import pytest

from nhg.cli import EXIT_CONFIG, EXIT_FAIL, EXIT_IO, EXIT_OK, RunConfig, main, resolve_pipeline, run
from nhg.scenario import BUILTIN_NAMES

P4 = {"name": "p4-violated", "dimension": 1, "A": [["-0.5"]], "f": ["sin(y_1)"],
      "Df": [["cos(y_1)"]], "beta": "1", "gamma": "1", "D": "1", "mu": "exp(t)",
      "mu_prime": "exp(t)", "alpha": 0.5, "r": 2, "T_max": 40}


@pytest.fixture
def p4_file(tmp_path):
    path = tmp_path / "p4.json"
    path.write_text(json.dumps(P4))
    return path


def test_scenarios_lists_builtins(capsys):
    assert main(["scenarios"]) == EXIT_OK
    out = capsys.readouterr().out
    for name in BUILTIN_NAMES:
        assert name in out


def test_validate(tmp_path, p4_file, capsys):
    assert main(["validate", str(p4_file)]) == EXIT_OK
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({**P4, "alpha": -1}))
    assert main(["validate", str(bad)]) == EXIT_CONFIG
    assert main(["validate", str(tmp_path / "missing.json")]) == EXIT_IO
    err = capsys.readouterr().err
    assert "invalid" in err and "does not exist" in err


def test_pipeline_dependencies():
    assert resolve_pipeline(["density"]) == ["contraction", "lyapunov", "density"]
    assert resolve_pipeline(["transport"]) == ["contraction", "conjugacy", "lyapunov", "transport"]
    assert resolve_pipeline(["all"])[-1] == "basin"
    with pytest.raises(Exception, match="unknown stage"):
        resolve_pipeline(["bogus"])


def test_contraction_report_on_stdout(capsys):
    assert main(["run", "--scenario", "mu-poly", "--pipeline", "contraction"]) == EXIT_OK
    out = capsys.readouterr().out
    report, _ = json.JSONDecoder().raw_decode(out[out.index("{\n"):])
    assert out.rstrip().endswith("PASS (exit 0)")
    assert report["pass"] is True
    assert report["pipeline"] == ["contraction"]
    margins = {k: v for r in report["stages"]["contraction"]["reports"]
               for k, v in r["margins"].items()}
    assert {"p", "q", "c"} <= set(margins)
    assert margins["q"] < 1


def test_violated_hypothesis_halts_downstream(p4_file):
    res = run(RunConfig(scenario=str(p4_file), pipeline=["conjugacy"]))
    assert res.exit_code == EXIT_FAIL
    assert res.report["pass"] is False
    halted = res.report["stages"]["conjugacy"]["halted"]
    assert halted.startswith("(P4) violated: q = 2.0")


def test_config_errors(capsys):
    assert run(RunConfig(scenario="no-such", pipeline=["contraction"])).exit_code == EXIT_CONFIG
    assert run(RunConfig(scenario="mu-poly", pipeline=["bogus"])).exit_code == EXIT_CONFIG
    assert run(RunConfig(scenario="mu-poly", pipeline=["contraction"],
                         workers=0)).exit_code == EXIT_CONFIG
    assert run(RunConfig(scenario="mu-poly", pipeline=["contraction"],
                         T_max=-1.0)).exit_code == EXIT_CONFIG
    assert main(["run", "--scenario", "mu-poly", "--tol", "0", "--quiet"]) == EXIT_CONFIG
    assert "CONFIG ERROR" in capsys.readouterr().err


def test_out_directory_and_overrides(tmp_path):
    out = tmp_path / "run"
    res = run(RunConfig(scenario="uniform-1d", pipeline=["density"], seed=3, T_max=8.0,
                        out=str(out)))
    assert res.exit_code == EXIT_OK
    report = json.loads((out / "report.json").read_text())
    assert report["scenario_document"]["T_max"] == 8.0
    assert report["seed"] == 3
    assert set(report["stages"]) == {"contraction", "lyapunov", "density"}
    csvs = sorted(p.name for p in out.glob("*.csv"))
    assert csvs and all(name.split("_")[0] in report["stages"] for name in csvs)
    with open(out / csvs[0], newline="") as fh:
        assert len(list(csv.DictReader(fh))) > 0


def test_exit_code_tracks_stage_verdicts(p4_file):
    for source, pipeline in (("mu-poly", ["contraction"]), (str(p4_file), ["contraction"])):
        res = run(RunConfig(scenario=source, pipeline=pipeline))
        any_fail = any(st.get("pass") is False or "halted" in st
                       for st in res.report["stages"].values())
        assert (res.exit_code == EXIT_FAIL) == any_fail
