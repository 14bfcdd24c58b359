import json

import numpy as np
import pytest

from sparsediff import cli, experiments as ex
from sparsediff.config import PRESETS, ConfigError, RunConfig, parse_text

SMALL = ["--trials", "3", "--iterations", "200"]


@pytest.mark.parametrize("name,build", [
    ("4.1-white", lambda: ex.scenario_41()),
    ("4.1-colored", lambda: ex.scenario_41(colored=True)),
    ("4.2", lambda: ex.scenario_42()),
    ("4.3", lambda: ex.scenario_43()),
    *[(f"4.3-{k}", (lambda k=k: ex.scenario_43(sweep=k))) for k in ex.SCENARIO_43_SWEEPS],
])
def test_presets_match_scenarios(name, build):
    spec = RunConfig.from_dict(scenario=name).to_spec()
    assert spec.to_dict() == build().to_dict()


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_config_round_trips_through_json(name):
    cfg = RunConfig.from_dict(scenario=name)
    again = RunConfig.from_dict(json.loads(cfg.to_json()))
    assert again.to_dict() == cfg.to_dict()
    assert again.to_spec().to_dict() == cfg.to_spec().to_dict()


def test_unknown_keys_rejected_with_path():
    with pytest.raises(ConfigError, match="analysis.bogus"):
        RunConfig.from_dict({"analysis": {"bogus": 1}})
    with pytest.raises(ConfigError, match="'colour'"):
        RunConfig.from_dict({"colour": 1})


def test_yaml_error_location():
    with pytest.raises(ConfigError, match=r"cfg.yaml:2:"):
        parse_text("trials: 3\n  bad: [\n", "cfg.yaml")
    assert parse_text("x: 1e6")["x"] == 1e6


@pytest.mark.parametrize("doc", [
    {"trials": 0}, {"iterations": "many"}, {"variants": []},
    {"variants": [{"strategy": "atc", "mu": -1}]},
    {"variants": [{"strategy": "atc", "mu": 0.1, "colour": 1}]},
    {"signals": {"noise_range": [0.1]}},
    {"system": {"w_o": [1, 0]}, "topology": {"kind": "star"}},
])
def test_invalid_configs(doc):
    with pytest.raises(ConfigError):
        RunConfig.from_dict(doc)


def test_overrides_take_precedence(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("trials: 7\nanalysis: {burn_in: 5}\n")
    cfg = RunConfig.load(p, {"trials": 9}, "4.3")
    assert cfg["trials"] == 9 and cfg["analysis"]["burn_in"] == 5 and cfg["iterations"] == 3000


def test_output_dir_resolution(tmp_path, monkeypatch):
    monkeypatch.delenv("SPARSEDIFF_OUTPUT_DIR", raising=False)
    assert str(RunConfig.from_dict().output_dir()) == "."
    monkeypatch.setenv("SPARSEDIFF_OUTPUT_DIR", str(tmp_path / "env"))
    assert RunConfig.from_dict().output_dir() == tmp_path / "env"
    assert RunConfig.from_dict({"output": {"dir": str(tmp_path / "cfg")}}).output_dir() == tmp_path / "cfg"


def test_simulate_writes_csv_and_metadata_reparses(tmp_path):
    assert cli.main(["simulate", "--scenario", "4.3", *SMALL, "-o", str(tmp_path), "--theory"]) == 0
    table = ex.read_csv_table(tmp_path / "msd.csv")
    assert "theory_msd_db[ATC-LZA-DLMS]" in table.columns
    cfg = RunConfig.from_dict(table.metadata["config"])
    assert cfg.to_dict() == table.metadata["config"]
    assert cfg["trials"] == 3 and cfg.to_spec().to_dict() == RunConfig.from_dict(
        scenario="4.3", overrides={"trials": 3, "iterations": 200}).to_spec().to_dict()


def _body(path):
    return "".join(ln for ln in path.read_text().splitlines(keepends=True) if not ln.startswith("#"))


def test_identical_seeds_identical_bodies(tmp_path):
    for d, jobs in (("a", "1"), ("b", "4")):
        assert cli.main(["simulate", "--scenario", "4.3", *SMALL, "--jobs", jobs, "-o", str(tmp_path / d)]) == 0
    assert (tmp_path / "a" / "msd.csv").read_bytes() != b""
    assert _body(tmp_path / "a" / "msd.csv") == _body(tmp_path / "b" / "msd.csv")


def test_env_var_sets_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("SPARSEDIFF_OUTPUT_DIR", str(tmp_path / "out"))
    assert cli.main(["simulate", "--scenario", "4.3", *SMALL, "--no-timestamp"]) == 0
    assert "created" not in (tmp_path / "out" / "msd.csv").read_text()


def test_theory_command(tmp_path):
    assert cli.main(["theory", "--scenario", "4.3", "--iterations", "50", "--mean-errors", "-o", str(tmp_path)]) == 0
    t = ex.read_csv_table(tmp_path / "theory-1.csv")
    assert {"msd_db", "steady_state_msd_db", "mean_err[5,5]"} <= set(t.columns)
    assert (tmp_path / "theory-2.csv").exists()


def test_stability_command_json(tmp_path, capsys):
    assert cli.main(["stability", "--scenario", "4.3", "--json", "-o", str(tmp_path)]) == 0
    rows = json.loads(capsys.readouterr().out)
    assert len(rows) == 2 and all(r["combined"] == min(r["mean_bound"], r["ms_bound"]) for r in rows)


def test_stability_bisect(tmp_path, capsys):
    code = cli.main(["stability", "--scenario", "4.3", "--bisect", "--json", "--set", "analysis.bisect_trials=3",
                     "--set", "analysis.bisect_iterations=800", "--set", "analysis.bisect_steps=3",
                     "--set", "variants=[{strategy: atc, attractor: za, mu: 0.03, gamma: 0.001, rho: 0.001}]"])
    assert code == 0
    row = json.loads(capsys.readouterr().out)[0]
    assert row["empirical_stable"] < row["empirical_unstable"]


def test_validate(capsys):
    assert cli.main(["validate", "--scenario", "4.1-white"]) == 0
    assert json.loads(capsys.readouterr().out.splitlines()[0])["scenario"] == "4.1-white"


def test_plot_marks_theory_dashed(tmp_path):
    assert cli.main(["simulate", "--scenario", "4.3", *SMALL, "--theory", "-o", str(tmp_path)]) == 0
    assert cli.main(["plot", str(tmp_path / "msd.csv")]) == 0
    src = (tmp_path / "msd_plot.py").read_text()
    assert "('theory_msd_db[ATC-LZA-DLMS]', True)" in src
    assert "('msd_db[ATC-LZA-DLMS]', False)" in src
    compile(src, "msd_plot.py", "exec")


def test_plot_theory_file_all_dashed(tmp_path):
    ex.write_theory_csv(tmp_path / "t.csv", np.array([1.0, 0.5]), -3.0)
    assert cli.main(["plot", str(tmp_path / "t.csv"), "-o", str(tmp_path / "p.py")]) == 0
    assert "('msd_db', True)" in (tmp_path / "p.py").read_text()


@pytest.mark.parametrize("argv,code", [
    (["plot", "EMPTY"], 1),
    (["plot", "MISSING"], 3),
    (["simulate", "--set", "analysis.bogus=1"], 1),
    (["simulate", "--trials", "zero"], 1),
    (["frobnicate"], 1),
    (["simulate", "--jobs", "0"], 1),
    (["theory", "--scenario", "4.1-white"], 1),  # time-varying system
    (["theory", "--set", "variants=[{strategy: cta, attractor: za, mu: 0.03, gamma: 0.001, rho: 0.001}]"], 1),
    (["theory", "--set", "variants=[{strategy: atc, attractor: none, mu: 3.0}]"], 2),
    (["simulate", "--strict", "--trials", "2", "--iterations", "300",
      "--set", "variants=[{strategy: atc, attractor: none, mu: 3.0}]"], 2),
    (["simulate", "--config", "MISSING"], 3),
])
def test_exit_codes(tmp_path, argv, code):
    (tmp_path / "empty.csv").write_text("")
    argv = [str(tmp_path / "empty.csv") if a == "EMPTY" else str(tmp_path / "nope.csv") if a == "MISSING" else a
            for a in argv]
    if argv[0] != "plot" and argv[0] != "frobnicate":
        argv += ["-o", str(tmp_path)]
    assert cli.main(argv) == code
