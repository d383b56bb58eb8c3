import json
import math
from pathlib import Path

import pytest

import harness
from errors import ConfigError
from linalg_estimates import calibrate_constant
from experiments.curvature import SWEEP_COLUMNS
from main import main
from models import ExperimentConfig, ExperimentName, Provenance, ReportBundle, Verdict
from report import emit, load_bundle, parse_formats

CONFIGS = Path(__file__).parent / "configs"


def small_identity_config(tmp_path: Path) -> Path:
    path = tmp_path / "identity.json"
    path.write_text(json.dumps({
        "experiment": "PotentialIdentity",
        "params": {"eps": 0.5, "tail_tol": 1e-10},
        "eps_schedule": {"m": [1, 2]},
        "grid": {"n_points": 12, "min_distance": 0.2},
        "seed": 7,
    }))
    return path


def test_config_round_trip():
    config = ExperimentConfig(experiment=ExperimentName.REGION2, eps_schedule={"m": [4, 9]})
    again = ExperimentConfig.model_validate_json(config.model_dump_json())
    assert again == config
    assert harness.config_hash(again) == harness.config_hash(config)


def test_m_schedule_resolves():
    config = ExperimentConfig(experiment=ExperimentName.REGION1, eps_schedule={"m": [1, 2]})
    assert config.eps_schedule.resolve() == [math.exp(-2 * math.pi), math.exp(-4 * math.pi)]


def test_config_hash_changes_with_seed():
    a = ExperimentConfig(experiment=ExperimentName.MATRIX_LEMMA, seed=1)
    b = ExperimentConfig(experiment=ExperimentName.MATRIX_LEMMA, seed=2)
    assert harness.config_hash(a) != harness.config_hash(b)
    assert len(harness.config_hash(a)) == 64


@pytest.mark.parametrize("body", [
    {"experiment": "Region1", "unknown": 1},
    {"experiment": "Region1", "eps_schedule": {"values": [0.1, 0.2]}},
    {"experiment": "Region1", "eps_schedule": {"values": [0.1], "m": [1]}},
    {"experiment": "Region1", "eps_schedule": {"values": [1.5]}},
    {"experiment": "NoSuchThing"},
    {"experiment": "LimitStability", "options": {"perturbation": "cubic"}},
])
def test_invalid_configs_rejected(tmp_path, body):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(body))
    with pytest.raises(ConfigError):
        harness.load_config(path)


def test_missing_config_rejected(tmp_path):
    with pytest.raises(ConfigError, match="cannot read config"):
        harness.load_config(tmp_path / "absent.json")


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.json")), ids=lambda p: p.stem)
def test_shipped_configs_load(path):
    assert harness.load_config(path).experiment in ExperimentName


def test_every_experiment_registered():
    names = {route.name for route in harness.list_experiments()}
    assert names == set(ExperimentName)
    assert all(route.description for route in harness.list_experiments())


def test_format_parsing():
    assert parse_formats("csv, JSON") == ["csv", "json"]
    with pytest.raises(ConfigError):
        parse_formats("csv,pdf")


def test_identity_run_is_reproducible(tmp_path):
    config = harness.load_config(small_identity_config(tmp_path))
    first = harness.run(config)
    second = harness.run(config)
    assert first.passed, first.verdicts
    assert first.wall_time is not None

    a = emit(first, tmp_path / "a", ["csv", "json"])
    b = emit(second, tmp_path / "b", ["csv", "json"])
    for name in ("potential_identity.csv", "summary.json", "bundle.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert {p.name for p in a} == {p.name for p in b} == {
        "potential_identity.csv", "summary.json", "bundle.json", "timing.json"}

    summary = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert summary["provenance"]["config_hash"] == harness.config_hash(config)
    assert summary["provenance"]["seed"] == 7
    assert "wall_time" not in (tmp_path / "a" / "bundle.json").read_text()


def test_bundle_reloads(tmp_path):
    bundle = harness.run(harness.load_config(small_identity_config(tmp_path)))
    emit(bundle, tmp_path, ["json"])
    again = load_bundle(tmp_path / "bundle.json")
    assert again.rows == bundle.rows
    assert again.passed == bundle.passed


@pytest.mark.slow
def test_matrix_lemma_small_run():
    config = ExperimentConfig(
        experiment=ExperimentName.MATRIX_LEMMA,
        eps_schedule={"values": [0.1, 0.01]},
        options={"dimension": 2, "samples": 20_000, "guard": 0.1},
        seed=3,
    )
    bundle = harness.run(config)
    assert bundle.passed, bundle.verdicts
    assert [row["c_diagonal"] for row in bundle.rows] == pytest.approx([2.0, 2.0])


def sweep_bundle() -> ReportBundle:
    rows = [
        {"eps": 0.01, "max_norm_rm": 250.0, "ratio_upper": 0.5, "ratio_lower": 53.0,
         "argmax_u": 0.001, "argmax_y1": 0.002, "argmax_y2": None},
        {"eps": 0.001, "max_norm_rm": 3000.0, "ratio_upper": 0.43, "ratio_lower": 143.0,
         "argmax_u": 0.0001, "argmax_y1": 0.0002, "argmax_y2": None},
    ]
    return ReportBundle(
        experiment=ExperimentName.CURVATURE_SWEEP,
        columns=SWEEP_COLUMNS,
        rows=rows,
        verdicts=[Verdict(name="scaling", passed=True, threshold=10.0, observed=1.2)],
        provenance=Provenance(config_hash="0" * 64, code_version="test", seed=0),
        series={"eps": [0.01, 0.001], "max_norm_rm": [250.0, 3000.0], "reference": [460.5, 6907.8]},
    )


def test_sweep_csv_columns(tmp_path):
    emit(sweep_bundle(), tmp_path, ["csv"])
    lines = (tmp_path / "sweep.csv").read_text().splitlines()
    assert lines[0] == "eps,max_norm_rm,ratio_upper,ratio_lower,argmax_u,argmax_y1,argmax_y2"
    assert lines[1] == "0.01,250,0.5,53,0.001,0.002,"
    assert len(lines) == 3


def test_sweep_figure(tmp_path):
    written = emit(sweep_bundle(), tmp_path, ["svg"])
    assert [p.name for p in written] == ["sweep.svg"]
    text = (tmp_path / "sweep.svg").read_text()
    assert text.lstrip().startswith("<?xml")


def test_cli_lists_experiments(capsys):
    assert main(["list-experiments"]) == 0
    out = capsys.readouterr().out
    for name in ExperimentName:
        assert name.value in out


def test_cli_run(tmp_path, capsys):
    out_dir = tmp_path / "out"
    code = main(["run", str(small_identity_config(tmp_path)), "--out", str(out_dir), "--format", "csv,json"])
    assert code == 0
    assert (out_dir / "potential_identity.csv").exists()
    assert "✓ rescaling_identity" in capsys.readouterr().out


def test_cli_emit_from_bundle(tmp_path):
    main(["run", str(small_identity_config(tmp_path)), "--out", str(tmp_path), "--format", "json"])
    assert main(["emit", str(tmp_path / "bundle.json"), "--format", "csv"]) == 0
    assert (tmp_path / "potential_identity.csv").exists()


def test_cli_config_errors_exit_two(tmp_path):
    assert main(["run", str(tmp_path / "absent.json")]) == 2
    assert main(["run", str(small_identity_config(tmp_path)), "--format", "pdf"]) == 2


@pytest.mark.slow
def test_matrix_lemma_reports_raw_constant():
    config = ExperimentConfig(
        experiment=ExperimentName.MATRIX_LEMMA,
        eps_schedule={"values": [0.1, 0.01]},
        options={"dimension": 2, "samples": 10_000, "guard": 0.25},
        seed=11,
    )
    bundle = harness.run(config)
    raw = [calibrate_constant(2, [eps], 10_000, 11) for eps in (0.1, 0.01)]
    assert [row["c_hat"] for row in bundle.rows] == raw
    check = next(v for v in bundle.verdicts if v.name == "no_violations")
    assert check.threshold == pytest.approx(max(raw) * 1.25, rel=1e-15)


@pytest.mark.slow
def test_region2_reports_charge_term():
    bundle = harness.run(ExperimentConfig(experiment=ExperimentName.REGION2, eps_schedule={"m": [4, 9]}))
    charge = next(v for v in bundle.verdicts if v.name == "charge_term")
    assert charge.passed
    assert bundle.rows[1]["gamma_inv_c"] < bundle.rows[0]["gamma_inv_c"]
