import csv
import io
import json

import pytest

from conftest import CONFIG_NAMES, CONFIGS, GOLDEN
from virial_lab import __version__, cli
from virial_lab.errors import ConfigError
from virial_lab.experiments import DEFAULTS, Record
from virial_lab.virial import make_check


def run_main(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


# --- exit codes -------------------------------------------------------------------


def test_passing_run_exits_zero(capsys):
    code, out, _ = run_main(capsys, "classical-virial")
    report = json.loads(out)
    assert code == 0 and report["passed"]
    kinetic = next(r for r in report["records"] if r["identity"] == "homogeneous-kinetic")
    assert kinetic["lhs"] == pytest.approx(0.5 * kinetic["details"]["E"], abs=1e-6)


def test_failed_tolerance_exits_one(capsys):
    code, out, _ = run_main(capsys, "classical-virial", "--set", "tolerances.hypervirial=1e-30")
    assert code == 1 and not json.loads(out)["passed"]


@pytest.mark.parametrize(
    "overrides,key",
    [
        (["integrator.stepp=1"], "integrator"),
        (["integrator.step=-1"], "integrator.step"),
        (["system.name=\"pendulum\""], "system.name"),
        (["window.mode=\"sometimes\""], "window.mode"),
        (["bogus=1"], "bogus"),
    ],
)
def test_malformed_config_exits_two_naming_the_key(capsys, overrides, key):
    argv = ["classical-virial"]
    for o in overrides:
        argv += ["--set", o]
    code, out, err = run_main(capsys, *argv)
    assert code == 2 and out == ""
    assert "ConfigError" in err and key.split(".")[0] in err


def test_experiment_mismatch_exits_two(capsys):
    code, _, err = run_main(capsys, "classical-virial", "--config", str(CONFIGS / "pdm.json"))
    assert code == 2 and "experiment" in err


def test_unreadable_config_exits_two(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run_main(capsys, "pdm", "--config", str(bad))[0] == 2
    assert run_main(capsys, "pdm", "--config", str(tmp_path / "missing.json"))[0] == 2


def test_convergence_failure_exits_three(capsys):
    code, _, err = run_main(capsys, "ml-oscillator", "--set", "integrator.max_fixed_point_iters=1")
    assert code == 3 and "ConvergenceError" in err


def test_domain_failure_exits_four(capsys):
    code, _, err = run_main(
        capsys, "pdm", "--set", 'system={"name": "pdm-custom", "params": {"lam": -1}}', "--set", 'state={"q": [5.0], "p": [0.0]}'
    )
    assert code == 4 and "DomainError" in err


def test_window_outside_trajectory_exits_four(capsys):
    argv = ["classical-virial", "--set", 'window={"mode": "fixed", "t1": 0, "t2": 100}']
    assert run_main(capsys, *argv)[0] == 4


# --- overrides and config loading ----------------------------------------------------------


def test_apply_override_parses_json_values():
    cfg = {}
    cli.apply_override(cfg, "integrator.step=5e-4")
    cli.apply_override(cfg, "options.lambdas=[0.5, 2]")
    cli.apply_override(cfg, "output.format=pretty")
    assert cfg == {"integrator": {"step": 5e-4}, "options": {"lambdas": [0.5, 2]}, "output": {"format": "pretty"}}


@pytest.mark.parametrize("bad", ["no-equals", "=3", "integrator.step.x=1"])
def test_apply_override_rejects(bad):
    cfg = {"integrator": {"step": 1e-3}}
    with pytest.raises(ConfigError):
        cli.apply_override(cfg, bad)


@pytest.mark.parametrize("name", CONFIG_NAMES)
def test_shipped_configs_validate(name):
    cfg = json.loads((CONFIGS / f"{name}.json").read_text())
    cli.validate(cfg)


def test_schema_lists_every_experiment():
    assert cli.load_schema()["properties"]["experiment"]["enum"] == list(cli.EXPERIMENTS)
    assert set(DEFAULTS) == set(cli.EXPERIMENTS)


def test_parser_rejects_unknown_experiment():
    with pytest.raises(SystemExit):
        cli.build_parser().parse_args(["toda"])


# --- emit ------------------------------------------------------------------------------------


def one_record_report():
    rec = Record(make_check("hypervirial", 1.0, 1.0 + 1e-9, system="harmonic", params={"state": 0}), 1e-6)
    return cli.RunReport("classical-virial", {"experiment": "classical-virial"}, [rec], 0.5)


def test_emit_empty_report_is_valid_json():
    doc = json.loads(cli.emit(cli.RunReport("ktrig-check"), "json"))
    assert doc["tool"] == "virial-lab" and doc["version"] == __version__
    assert doc["records"] == [] and doc["n_checks"] == 0 and doc["passed"] is True
    assert "wall_time" in doc


def test_emit_csv_one_row_plus_header():
    rows = list(csv.reader(io.StringIO(cli.emit(one_record_report(), "csv").decode())))
    assert rows[0][:4] == ["identity", "lhs", "rhs", "residual"]
    assert len(rows) == 2 and rows[1][0] == "hypervirial"
    assert float(rows[1][3]) == pytest.approx(-1e-9)


def test_emit_pretty_is_display_only():
    text = cli.emit(one_record_report(), "pretty").decode()
    assert "hypervirial[state=0]" in text and "1/1 passed" in text
    assert cli.emit(cli.RunReport("ktrig-check"), "pretty").decode().endswith("0/0 passed in 0.00 s\n")


def test_emit_unknown_format():
    with pytest.raises(ValueError):
        cli.emit(cli.RunReport(), "xml")


def test_emit_json_without_timing_drops_wall_time():
    assert "wall_time" not in json.loads(cli.emit(one_record_report(), "json", timing=False))


def test_out_and_quiet(capsys, tmp_path):
    target = tmp_path / "r.csv"
    code, out, _ = run_main(capsys, "ktrig-check", "--format", "csv", "--out", str(target))
    assert code == 0 and out == ""
    assert target.read_text().startswith("identity,lhs,rhs,residual")
    assert run_main(capsys, "ktrig-check", "--quiet")[1] == ""


def test_eigenfunction_dump_from_config(capsys, tmp_path):
    target = tmp_path / "psi.csv"
    code, _, _ = run_main(capsys, "quantum-virial", "--quiet", "--set", f'output.eigenfunctions="{target}"')
    assert code == 0
    assert target.read_text().splitlines()[0].startswith("x,sqrt_m,re_0,im_0")


# --- determinism and goldens -------------------------------------------------------------------


def test_reports_are_deterministic():
    for name in ("nonstrict", "fock-scan"):
        first = cli.emit(cli.run(cli.load_config(name)), "json", timing=False)
        assert cli.emit(cli.run(cli.load_config(name)), "json", timing=False) == first


def test_thread_count_does_not_change_results(monkeypatch):
    cfg = cli.load_config("ml-oscillator")
    serial = cli.emit(cli.run(cfg), "json", timing=False)
    monkeypatch.setenv("VIRIAL_LAB_THREADS", "3")
    assert cli.emit(cli.run(cli.load_config("ml-oscillator")), "json", timing=False) == serial
    monkeypatch.setenv("VIRIAL_LAB_THREADS", "many")
    with pytest.raises(ConfigError):
        cli.run(cli.load_config("ml-oscillator"))


def _allowed_drift(rec):
    return rec["tolerance"] * (max(abs(rec["lhs"]), abs(rec["rhs"]), 1.0) if rec["mode"] == "relative" else 1.0)


@pytest.mark.parametrize("name", CONFIG_NAMES)
def test_golden_report(report_for, name):
    golden = json.loads((GOLDEN / f"{name}.json").read_text())
    fresh = json.loads(cli.emit(report_for(name), "json", timing=False))
    assert fresh["passed"] and golden["passed"]
    assert fresh["config"] == golden["config"]
    assert [r["identity"] for r in fresh["records"]] == [r["identity"] for r in golden["records"]]
    for new, old in zip(fresh["records"], golden["records"]):
        assert new["params"] == old["params"]
        for key in ("lhs", "rhs"):
            assert abs(new[key] - old[key]) <= _allowed_drift(old), (name, new["identity"], key)
