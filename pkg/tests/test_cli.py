"""CLI surface: run/list-scenarios/validate, exit codes, env override."""

import os

from click.testing import CliRunner

from dccsim import config as cfgmod
from dccsim import scenarios
from dccsim.cli import main


def write_small_config(path, variant="baseline-ecn", seed=3):
    cfg = scenarios.build("fourflow", variant, seed)
    cfg.duration_s = 1.0
    cfg.periods_s = [0.0, 0.5, 1.0]
    for f in cfg.flows:
        f.start_s = 0.5 if f.tagged else 0.0
        f.stop_s = 1.0
    path.write_text(cfgmod.serialize(cfg))
    return cfg


def test_list_scenarios():
    result = CliRunner().invoke(main, ["list-scenarios"])
    assert result.exit_code == 0
    for name in ("fourflow", "scale-8", "delay-sweep", "incast-mice"):
        assert name in result.output


def test_validate_ok(tmp_path):
    p = tmp_path / "ok.ini"
    write_small_config(p)
    result = CliRunner().invoke(main, ["validate", "--scenario", str(p)])
    assert result.exit_code == 0
    assert "ok" in result.output


def test_validate_bad_field_exit_code(tmp_path):
    p = tmp_path / "bad.ini"
    cfg = write_small_config(p)
    text = p.read_text().replace("variant = baseline-ecn", "variant = nonsense")
    p.write_text(text)
    result = CliRunner().invoke(main, ["validate", "--scenario", str(p)])
    assert result.exit_code == 2
    assert "scenario.variant" in result.output


def test_validate_missing_file():
    result = CliRunner().invoke(main, ["validate", "--scenario", "/no/such.ini"])
    assert result.exit_code == 3


def test_run_config_file_writes_outputs(tmp_path):
    p = tmp_path / "s.ini"
    write_small_config(p)
    out = tmp_path / "out"
    result = CliRunner().invoke(
        main, ["run", "--scenario", str(p), "--out-dir", str(out)])
    assert result.exit_code == 0, result.output
    assert sorted(os.listdir(out)) == [
        "fct.csv", "goodput.csv", "periods.csv", "queues.csv", "summary.txt"]


def test_run_builtin_with_duration_override(tmp_path):
    out = tmp_path / "out"
    result = CliRunner().invoke(
        main, ["run", "--scenario", "homogeneous", "--variant", "baseline-ecn",
               "--seed", "2", "--out-dir", str(out), "--duration-s", "1"])
    assert result.exit_code == 0, result.output
    assert (out / "goodput.csv").exists()


def test_out_dir_env_override(tmp_path, monkeypatch):
    p = tmp_path / "s.ini"
    write_small_config(p)
    envdir = tmp_path / "from-env"
    monkeypatch.setenv("DCCSIM_OUT_DIR", str(envdir))
    result = CliRunner().invoke(main, ["run", "--scenario", str(p)])
    assert result.exit_code == 0, result.output
    assert (envdir / "goodput.csv").exists()


def test_run_unknown_scenario_exit_code():
    result = CliRunner().invoke(main, ["run", "--scenario", "no-such-thing"])
    assert result.exit_code == 2
