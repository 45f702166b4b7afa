import filecmp
import json
import os
import shutil
import textwrap

import numpy as np
import pandas as pd
import pytest

from apps.dfm_app import app
from dfmrisk import pipeline
from dfmrisk.artifacts import file_sha256, scenario_filename
from dfmrisk.config import load_config
from dfmrisk.exceptions import (
    EXIT_CONFIG,
    EXIT_DATA,
    EXIT_OK,
    InvalidHorizon,
    InvalidOption,
    UnknownStage,
)
from dfmrisk.io import read_panel

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
DEMO_PARAMS = os.path.join(ROOT, "demo", "params.yaml")
GOLDEN_DIR = os.path.join(ROOT, "tests", "golden")
GOLDEN_TABLE = os.path.join(GOLDEN_DIR, "estimation.csv")
FIXTURE_PERIODS = 200
FIXTURE_SEED = 7

PARAMS = """
    spec: {{k: 4, n_f: 1, p: 1, q: 0}}
    names: [a, b, c, d]
    start: "1900"
    P: [[0.9], [0.8], [0.7], [0.6]]
    A: [[[0.7]]]
    sigma_eps: [0.4, 0.4, 0.5, 0.5]
    noise_scale: {noise}
"""


def write(path, text):
    path.write_text(textwrap.dedent(text).lstrip("\n"), encoding="utf-8")
    return str(path)


@pytest.fixture
def params_file(tmp_path):
    return write(tmp_path / "params.yaml", PARAMS.format(noise=1.0))


def run_config(tmp_path, panel_path, **extra):
    lines = [
        "version: 1",
        "data: {{path: {}}}".format(panel_path),
        "fit: {{reduce: {}}}".format("true" if extra.get("reduce") else "false"),
        "forecast: {horizon: 8, level: 0.9}",
        "seed: 7",
    ]
    if extra.get("scenario"):
        lines.append("scenarios: [{}]".format(extra["scenario"]))
    return write(tmp_path / "run.yaml", "\n".join(lines) + "\n")


# ---- simulate ----

def test_simulate_writes_panel_and_factors(tmp_path, params_file):
    out = tmp_path / "sim"
    paths = pipeline.simulate_cmd(params_file, 30, 7, str(out))
    assert [os.path.basename(p) for p in paths] == ["panel.csv", "factors.csv", "manifest.json"]
    panel = read_panel(str(out / "panel.csv"), "annual")
    assert panel.T == 30 and panel.names == ("a", "b", "c", "d")
    assert panel.index.start == "1900"
    factors = pd.read_csv(out / "factors.csv")
    assert list(factors.columns) == ["period", "f1"]


def test_simulate_is_byte_deterministic(tmp_path, params_file):
    pipeline.simulate_cmd(params_file, 40, 3, str(tmp_path / "one"))
    pipeline.simulate_cmd(params_file, 40, 3, str(tmp_path / "two"))
    for name in ("panel.csv", "factors.csv", "manifest.json"):
        assert filecmp.cmp(tmp_path / "one" / name, tmp_path / "two" / name, shallow=False)


def test_simulate_without_noise_is_zero(tmp_path):
    params = write(tmp_path / "quiet.yaml", PARAMS.format(noise=0.0))
    pipeline.simulate_cmd(params, 12, 1, str(tmp_path / "q"))
    panel = read_panel(str(tmp_path / "q" / "panel.csv"), "annual")
    assert np.all(panel.values == 0.0)


def test_simulate_rejects_empty_horizon(tmp_path, params_file):
    with pytest.raises(InvalidHorizon):
        pipeline.simulate_cmd(params_file, 0, 1, str(tmp_path / "none"))


# ---- exit codes ----

def test_cli_exit_codes(tmp_path, params_file):
    sim = str(tmp_path / "sim")
    assert app.run(["simulate", "--params", params_file, "--periods", "20", "--out", sim]) == EXIT_OK
    assert app.run(["simulate", "--params", params_file, "--periods", "0", "--out", sim]) == EXIT_DATA
    assert app.run(["estimate", "--config", str(tmp_path / "absent.yaml")]) == EXIT_CONFIG

    bad_panel = write(tmp_path / "bad.csv", "period,a,b\n2000,1,x\n2001,2,3\n")
    config = run_config(tmp_path, bad_panel)
    assert app.run(["estimate", "--config", config, "--out", str(tmp_path / "o")]) == EXIT_DATA


def test_unknown_stage(tmp_path):
    cfg = load_config(run_config(tmp_path, "panel.csv"))
    with pytest.raises(UnknownStage):
        pipeline.run(cfg, "publish")


# ---- end to end ----

@pytest.fixture
def simulated_panel(tmp_path, params_file):
    pipeline.simulate_cmd(params_file, 120, 11, str(tmp_path / "data"))
    return str(tmp_path / "data" / "panel.csv")


def test_full_run_is_reproducible(tmp_path, simulated_panel):
    scenario = write(tmp_path / "scenario.yaml", """
        name: b_shock
        kind: ShockOnce
        overrides:
          - {series: b, period: "2021", value: 1.0}
    """)
    config = run_config(tmp_path, simulated_panel, scenario=scenario)
    one, two = str(tmp_path / "one"), str(tmp_path / "two")
    assert app.run(["run", "--config", config, "--out", one]) == EXIT_OK
    assert app.run(["run", "--config", config, "--out", two]) == EXIT_OK

    expected = {"estimation.csv", "estimation.txt", "factor_path.csv", "contributions.csv",
                "risk.json", "forecast.csv", "scenario_b_shock.csv", "metadata.json"}
    assert set(os.listdir(one)) == expected
    for name in expected:
        assert filecmp.cmp(os.path.join(one, name), os.path.join(two, name), shallow=False), name

    meta = json.load(open(os.path.join(one, "metadata.json"), encoding="utf-8"))
    assert meta["fit"]["converged"] is True
    assert meta["model"]["parameters"] == 9
    assert meta["config"]["seed"] == 7
    assert "metadata.json" not in meta["files"]
    risk = json.load(open(os.path.join(one, "risk.json"), encoding="utf-8"))
    assert risk["risk"]["trend_direction"] in ("Rising", "Falling", "Flat")
    assert isinstance(risk["alert"]["fired"], bool)
    table = pd.read_csv(os.path.join(one, "estimation.csv"))
    assert list(table.columns) == ["parameter", "estimate", "std_err", "z", "p"]
    assert len(table) == 9


def test_estimate_stage_stops_early(tmp_path, simulated_panel):
    cfg = load_config(run_config(tmp_path, simulated_panel), {"out": str(tmp_path / "e")})
    result = pipeline.run(cfg, "estimate")
    assert result.risk is None and result.forecast is None
    assert sorted(os.listdir(tmp_path / "e")) == [
        "contributions.csv", "estimation.csv", "estimation.txt", "factor_path.csv",
        "metadata.json"]


def test_reduce_stage_writes_selection(tmp_path):
    params = write(tmp_path / "noisy.yaml", """
        spec: {k: 5, n_f: 1, p: 1, q: 0}
        names: [a, b, c, d, noise]
        start: "1800"
        P: [[0.9], [0.8], [0.7], [0.6], [0.0]]
        A: [[[0.8]]]
        sigma_eps: [0.3, 0.4, 0.5, 0.6, 1.0]
    """)
    pipeline.simulate_cmd(params, 300, 5, str(tmp_path / "data"))
    cfg = load_config(run_config(tmp_path, str(tmp_path / "data" / "panel.csv")),
                      {"out": str(tmp_path / "r")})
    result = pipeline.run(cfg, "reduce")
    selection = pd.read_csv(tmp_path / "r" / "reduction.csv")
    assert list(selection.columns) == ["series", "status", "round"]
    assert sorted(selection["series"]) == ["a", "b", "c", "d", "noise"]
    assert set(selection["status"]) <= {"kept", "dropped"}
    assert set(result.selection.kept) | set(result.selection.dropped) == set(result.report.series)
    assert result.final_report.spec.k == len(result.selection.kept)
    assert (tmp_path / "r" / "estimation_reduced.csv").exists()


def test_demo_configuration_runs_every_stage(tmp_path):
    pipeline.simulate_cmd(DEMO_PARAMS, 120, 7, str(tmp_path / "data"))
    for name in ("run.yaml", "scenario.yaml"):
        shutil.copy(os.path.join(ROOT, "demo", name), tmp_path / name)
    out = tmp_path / "out"
    assert app.run(["run", "--config", str(tmp_path / "run.yaml"), "--out", str(out)]) == EXIT_OK
    assert {"reduction.csv", "risk.json", "forecast.csv", "metadata.json",
            "scenario_reserves_drawdown.csv"} <= set(os.listdir(out))
    meta = json.load(open(out / "metadata.json", encoding="utf-8"))
    assert meta["fit"]["converged"] is True
    assert meta["fit"]["gradient_norm"] < 1e-5


# ---- scenario files ----

@pytest.mark.parametrize("name,expected", [
    ("b_shock", "scenario_b_shock.csv"),
    ("../../etc/x", "scenario_.._.._etc_x.csv"),
    ("a b\\c", "scenario_a_b_c.csv"),
])
def test_scenario_filename_stays_in_output_dir(name, expected):
    assert scenario_filename(name) == expected
    assert "/" not in expected and "\\" not in expected


def test_clashing_scenario_names_are_rejected(tmp_path):
    scenarios = write(tmp_path / "s.yaml", """
        - {name: "up/down"}
        - {name: "up down"}
    """)
    config = run_config(tmp_path, "panel.csv", scenario=scenarios)
    with pytest.raises(InvalidOption):
        pipeline.run(load_config(config), "scenario")
    assert app.run(["scenario", "--config", config, "--out", str(tmp_path / "o")]) == EXIT_CONFIG


# ---- manifest and golden files ----

def test_simulate_manifest_records_hashes(tmp_path, params_file):
    out = tmp_path / "sim"
    pipeline.simulate_cmd(params_file, 25, 4, str(out))
    manifest = json.load(open(out / "manifest.json", encoding="utf-8"))
    assert manifest["seed"] == 4 and manifest["periods"] == 25
    assert manifest["params"] == "params.yaml"
    assert manifest["sha256"] == {name: file_sha256(str(out / name))
                                  for name in ("panel.csv", "factors.csv")}


@pytest.fixture
def golden_fixture(update_golden):
    """The committed simulated panel; ``--update-golden`` regenerates it."""
    if update_golden:
        pipeline.simulate_cmd(DEMO_PARAMS, FIXTURE_PERIODS, FIXTURE_SEED, GOLDEN_DIR)
    path = os.path.join(GOLDEN_DIR, "panel.csv")
    if not os.path.exists(path):
        pytest.skip("no golden fixture; create it with --update-golden")
    return path


def test_golden_fixture_matches_manifest(golden_fixture, tmp_path):
    manifest = json.load(open(os.path.join(GOLDEN_DIR, "manifest.json"), encoding="utf-8"))
    assert (manifest["seed"], manifest["periods"]) == (FIXTURE_SEED, FIXTURE_PERIODS)
    assert file_sha256(golden_fixture) == manifest["sha256"]["panel.csv"]
    pipeline.simulate_cmd(DEMO_PARAMS, FIXTURE_PERIODS, FIXTURE_SEED, str(tmp_path / "again"))
    assert file_sha256(str(tmp_path / "again" / "panel.csv")) == manifest["sha256"]["panel.csv"]


def test_cli_runs_on_golden_fixture_are_identical(golden_fixture, tmp_path):
    config = run_config(tmp_path, golden_fixture)
    one, two = str(tmp_path / "one"), str(tmp_path / "two")
    assert app.run(["estimate", "--config", config, "--out", one]) == EXIT_OK
    assert app.run(["estimate", "--config", config, "--out", two]) == EXIT_OK
    assert sorted(os.listdir(one)) == sorted(os.listdir(two))
    for name in os.listdir(one):
        assert filecmp.cmp(os.path.join(one, name), os.path.join(two, name), shallow=False), name


def test_golden_estimation_table(golden_fixture, tmp_path, update_golden):
    cfg = load_config(run_config(tmp_path, golden_fixture), {"out": str(tmp_path / "g")})
    pipeline.run(cfg, "estimate")
    produced = pd.read_csv(tmp_path / "g" / "estimation.csv")
    if update_golden:
        shutil.copy(tmp_path / "g" / "estimation.csv", GOLDEN_TABLE)
        return
    if not os.path.exists(GOLDEN_TABLE):
        pytest.skip("no golden table; create it with --update-golden")
    golden = pd.read_csv(GOLDEN_TABLE)
    assert list(produced["parameter"]) == list(golden["parameter"])
    for column in ("estimate", "std_err", "z", "p"):
        np.testing.assert_allclose(produced[column], golden[column], rtol=0, atol=1e-6)
