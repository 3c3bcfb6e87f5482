import csv
import json
import math

import numpy as np
import pytest

from doafusion import (
    IwfConfig,
    TrainingConfig,
    emit_results,
    emit_spec,
    generate_training_data,
    init_model,
    monte_carlo_rmse,
    parse_spec,
    run_trial,
    save_model,
    sweep_iterations,
    train,
)
from doafusion.cli import main as cli_main
from doafusion.harness import (
    ALL_METHODS,
    RESULT_COLUMNS,
    ExperimentSpec,
    SourceSpec,
    _rmse,
    crlb_table,
    curve_rows,
    run_grid_point,
    traces_to_csv,
    trial_seed,
)


def desk_spec(geo, methods=("IWF-GMinD", "IWF-GMaxCS"), trials=8, model_path=None,
              snr_grid=(10.0,), snapshot_grid=(100,)):
    return ExperimentSpec(geometry=geo, source=SourceSpec(41.0, 100),
                          snr_grid=snr_grid, snapshot_grid=snapshot_grid,
                          trials=trials, methods=methods, iwf=IwfConfig(),
                          model_path=model_path, master_seed=77)


def write_config(path, **overrides):
    doc = {
        "geometry": {"num_groups": 3, "antennas_per_subarray": [7, 11, 13],
                     "subarrays_per_group": [16, 16, 16], "fd_antennas": 128,
                     "element_spacing": 0.5, "wavelength": 1.0},
        "source": {"true_angle_deg": 41.0, "snapshots": 100},
        "snr_grid": [10.0],
        "snapshot_grid": [100],
        "trials": 4,
        "methods": ["IWF-GMinD"],
        "iwf": {"tolerance_deg": 1e-4, "max_iterations": 20,
                "crlb_variant": "fisher", "relative_tolerance": False},
        "model_path": None,
        "master_seed": 123,
    }
    doc.update(overrides)
    path.write_text(json.dumps(doc))
    return path


# --- rmse definition ---------------------------------------------------------------

def test_rmse_definition():
    assert _rmse([0.0, 0.0, 0.0]) == 0.0
    assert _rmse([1.0, -1.0]) == pytest.approx(1.0)
    assert math.isnan(_rmse([]))


# --- spec parsing ---------------------------------------------------------------------

def test_parse_emit_round_trip(geo, tmp_path):
    spec = desk_spec(geo, methods=("IWF-GMinD", "IWF-GMaxCS"), trials=11,
                     snr_grid=(0.0, 5.0), snapshot_grid=(50, 100))
    path = tmp_path / "spec.json"
    emit_spec(spec, path)
    assert parse_spec(path) == spec


def test_parse_unknown_field_named(tmp_path):
    path = write_config(tmp_path / "c.json")
    doc = json.loads(path.read_text())
    doc["trails"] = 5
    path.write_text(json.dumps(doc))
    with pytest.raises(ValueError, match="trails"):
        parse_spec(path)


def test_parse_missing_field_named(tmp_path):
    path = write_config(tmp_path / "c.json")
    doc = json.loads(path.read_text())
    del doc["snr_grid"]
    path.write_text(json.dumps(doc))
    with pytest.raises(ValueError, match="snr_grid"):
        parse_spec(path)


def test_parse_nested_unknown_field(tmp_path):
    path = write_config(tmp_path / "c.json")
    doc = json.loads(path.read_text())
    doc["iwf"]["sigma"] = 1.0
    path.write_text(json.dumps(doc))
    with pytest.raises(ValueError, match="sigma"):
        parse_spec(path)


def test_shipped_benchmark_config_values():
    spec = parse_spec("configs/benchmark.json")
    assert spec.geometry.num_groups == 3
    assert spec.geometry.antennas_per_subarray == (7, 11, 13)
    assert spec.geometry.subarrays_per_group == (16, 16, 16)
    assert spec.geometry.fd_antennas == 128
    assert spec.source.snapshots == 100
    assert spec.source.true_angle_deg == 41.0
    assert spec.trials == 3000
    assert set(spec.methods) == set(ALL_METHODS)


def test_fusionnet_methods_require_model(geo):
    with pytest.raises(ValueError, match="model_path"):
        desk_spec(geo, methods=("FusionNet-GMinD",), model_path=None)


def test_unknown_method_rejected(geo):
    with pytest.raises(ValueError, match="IWF-Fancy"):
        desk_spec(geo, methods=("IWF-Fancy",))


# --- trials ---------------------------------------------------------------------------

def test_run_trial_noiseless_identity(geo):
    spec = desk_spec(geo)
    res = run_trial(spec, 10.0, 100, 0, noiseless=True)
    for m in spec.methods:
        assert not res[m].failure
        assert res[m].theta_deg == pytest.approx(41.0, abs=1e-5)


def test_run_trial_deterministic(geo):
    spec = desk_spec(geo)
    a = run_trial(spec, 10.0, 100, 3)
    b = run_trial(spec, 10.0, 100, 3)
    assert a["IWF-GMinD"].theta_deg == b["IWF-GMinD"].theta_deg


def test_run_trial_iteration_budget(geo):
    spec = desk_spec(geo)
    res = run_trial(spec, 10.0, 100, 1)
    assert 1 <= res["IWF-GMinD"].iterations_used <= 20


def test_trial_seed_distinct():
    seeds = {tuple(trial_seed(1, s, h, t).entropy)
             for s in (0.0, 10.0) for h in (50, 100) for t in (0, 1)}
    assert len(seeds) == 8


def test_monte_carlo_curve_structure(geo):
    spec = desk_spec(geo, trials=4, snr_grid=(5.0, 10.0))
    curve = monte_carlo_rmse(spec, "snr")
    assert curve.sweep_name == "snr"
    assert curve.values == (5.0, 10.0)
    assert len(curve.crlb_sqrt_deg) == 2
    for m in spec.methods:
        assert len(curve.rmse[m]) == 2
        assert all(r >= 0 for r in curve.rmse[m])
    assert curve.trials == [4, 4]


def test_monte_carlo_snapshot_sweep(geo):
    spec = desk_spec(geo, trials=3, snr_grid=(0.0,), snapshot_grid=(50, 100))
    curve = monte_carlo_rmse(spec, "snapshots")
    assert curve.sweep_name == "snapshots"
    assert curve.values == (50, 100)
    # bound improves with snapshots
    assert curve.crlb_sqrt_deg[1] < curve.crlb_sqrt_deg[0]


def test_thread_count_invariance(geo, tmp_path):
    spec = desk_spec(geo, trials=8, snr_grid=(5.0, 10.0))
    c1 = monte_carlo_rmse(spec, "snr", threads=1)
    c4 = monte_carlo_rmse(spec, "snr", threads=4)
    p1, p4 = tmp_path / "a.csv", tmp_path / "b.csv"
    emit_results(c1, p1)
    emit_results(c4, p4)
    assert p1.read_bytes() == p4.read_bytes()


# --- iteration sweep ----------------------------------------------------------------

def test_sweep_iterations_cap_zero_is_one_shot(geo):
    spec = desk_spec(geo, trials=5)
    curve = sweep_iterations(spec, [0, 1, 6])
    assert curve.values == (0, 1, 6)
    # cap 0 and cap 1 both mean a single weighted combination
    assert curve.rmse["IWF-GMinD"][0] == pytest.approx(curve.rmse["IWF-GMinD"][1], rel=1e-12)


def test_sweep_iterations_large_cap_matches_converged(geo):
    spec = desk_spec(geo, trials=5)
    curve = sweep_iterations(spec, [18])
    converged = monte_carlo_rmse(spec, "snr")
    assert curve.rmse["IWF-GMinD"][0] == pytest.approx(
        converged.rmse["IWF-GMinD"][0], abs=1e-3)


def test_sweep_iterations_requires_iwf(geo, tmp_path):
    model_path = tmp_path / "m.json"
    save_model(init_model([4, 8, 4, 1], seed=0), model_path)
    spec = desk_spec(geo, methods=("FusionNet-GMinD",), model_path=str(model_path))
    with pytest.raises(ValueError):
        sweep_iterations(spec, [1])


# --- emission --------------------------------------------------------------------------

def test_emit_csv_schema_and_digits(geo, tmp_path):
    spec = desk_spec(geo, trials=3)
    curve = monte_carlo_rmse(spec, "snr")
    path = tmp_path / "out.csv"
    emit_results(curve, path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == list(RESULT_COLUMNS)
    assert len(rows) == 1 + len(spec.methods)
    rmse_field = rows[1][3]
    assert len(rmse_field.replace(".", "").replace("-", "").lstrip("0")) <= 10


def test_emit_json_mirrors_csv(geo, tmp_path):
    spec = desk_spec(geo, trials=3)
    curve = monte_carlo_rmse(spec, "snr")
    cpath, jpath = tmp_path / "o.csv", tmp_path / "o.json"
    emit_results(curve, cpath, "csv")
    emit_results(curve, jpath, "json")
    payload = json.loads(jpath.read_text())
    with open(cpath, newline="") as fh:
        reader = csv.DictReader(fh)
        csv_rows = list(reader)
    assert len(payload) == len(csv_rows)
    for jrow, crow in zip(payload, csv_rows):
        assert list(jrow.keys()) == list(RESULT_COLUMNS)
        assert jrow["method"] == crow["method"]
        assert float(crow["rmse_deg"]) == pytest.approx(jrow["rmse_deg"], rel=1e-9)


def test_emit_rejects_unknown_format(geo, tmp_path):
    spec = desk_spec(geo, trials=2)
    curve = monte_carlo_rmse(spec, "snr")
    with pytest.raises(ValueError):
        emit_results(curve, tmp_path / "o.xml", "xml")


def test_traces_csv(geo, tmp_path):
    spec = desk_spec(geo, trials=3)
    _, _, per_trial = run_grid_point(spec, 10.0, 100, collect_traces=True)
    estimates = [(t, res["IWF-GMinD"].fused) for t, res in enumerate(per_trial)]
    path = tmp_path / "traces.csv"
    traces_to_csv(estimates, path, num_groups=3)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["trial_id", "iteration", "angle_deg", "w_fd", "w_1", "w_2", "w_3"]
    assert len(rows) > 1 + 3  # at least two iterates per trial
    for row in rows[1:]:
        total = float(row[3]) + float(row[4]) + float(row[5]) + float(row[6])
        assert total == pytest.approx(1.0, abs=1e-9)


def test_crlb_table_columns(geo):
    spec = desk_spec(geo, snr_grid=(0.0, 10.0), snapshot_grid=(100,))
    rows = crlb_table(spec)
    assert len(rows) == 2
    assert list(rows[0].keys()) == ["theta_deg", "snr_db", "snapshots", "crlb_fd_deg2",
                                    "crlb_group1_deg2", "crlb_group2_deg2",
                                    "crlb_group3_deg2", "hybrid_crlb_deg2",
                                    "hybrid_rmse_floor_deg"]
    assert rows[0]["hybrid_crlb_deg2"] > rows[1]["hybrid_crlb_deg2"]


def test_curve_rows_marks_all_failed_invalid(geo):
    from doafusion.harness import RmseCurve
    curve = RmseCurve(sweep_name="snr", values=(0.0,), methods=("IWF-GMinD",),
                      rmse={"IWF-GMinD": [math.nan]}, crlb_sqrt_deg=[0.1],
                      trials=[5], failures={"IWF-GMinD": [5]})
    row = curve_rows(curve)[0]
    assert math.isnan(row["rmse_deg"])
    assert row["failures"] == 5


# --- CLI ------------------------------------------------------------------------------

def test_cli_simulate_noiseless(geo, tmp_path):
    cfg = write_config(tmp_path / "cfg.json", trials=2)
    out = tmp_path / "out.csv"
    rc = cli_main(["simulate", "--config", str(cfg), "--out", str(out), "--noiseless"])
    assert rc == 0
    with open(out, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert rows[0]["method"] == "IWF-GMinD"
    assert abs(float(rows[0]["rmse_deg"])) < 1e-5


def test_cli_simulate_rejects_multipoint(tmp_path):
    cfg = write_config(tmp_path / "cfg.json", snr_grid=[0.0, 10.0])
    rc = cli_main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o.csv")])
    assert rc == 1


def test_cli_bad_config_diagnostic(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text("{\"geometry\": {}}")
    rc = cli_main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o.csv")])
    assert rc == 1
    assert "error" in capsys.readouterr().err


def test_cli_crlb_table(tmp_path):
    cfg = write_config(tmp_path / "cfg.json", snr_grid=[0.0, 10.0])
    out = tmp_path / "bounds.csv"
    rc = cli_main(["crlb", "--config", str(cfg), "--out", str(out)])
    assert rc == 0
    with open(out, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 2
    assert float(rows[0]["hybrid_crlb_deg2"]) > 0


def test_cli_sweep_iterations(tmp_path):
    cfg = write_config(tmp_path / "cfg.json", trials=2)
    out = tmp_path / "iters.csv"
    rc = cli_main(["sweep-iterations", "--config", str(cfg), "--out", str(out),
                   "--caps", "0,2", "--noiseless"])
    assert rc == 0
    with open(out, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert {r["sweep_value"] for r in rows} == {"0", "2"}


def test_cli_seed_override_changes_results(geo, tmp_path):
    cfg = write_config(tmp_path / "cfg.json", trials=3)
    out1, out2, out3 = (tmp_path / f"o{i}.csv" for i in range(3))
    assert cli_main(["sweep-snr", "--config", str(cfg), "--out", str(out1)]) == 0
    assert cli_main(["sweep-snr", "--config", str(cfg), "--out", str(out2), "--seed", "9"]) == 0
    assert cli_main(["sweep-snr", "--config", str(cfg), "--out", str(out3), "--seed", "9"]) == 0
    assert out1.read_bytes() != out2.read_bytes()
    assert out2.read_bytes() == out3.read_bytes()


def test_cli_train_fusion_smoke(tmp_path):
    """End-to-end tiny training run through the CLI surface."""
    cfg = write_config(tmp_path / "cfg.json",
                       geometry={"num_groups": 2, "antennas_per_subarray": [3, 5],
                                 "subarrays_per_group": [4, 4], "fd_antennas": 16},
                       source={"true_angle_deg": 41.0, "snapshots": 16})
    tcfg = tmp_path / "train.json"
    tcfg.write_text(json.dumps({
        "angle_max_deg": 30.0, "grid_step_deg": 15.0, "snr_list_db": [15.0],
        "epochs": 5, "batch_size": 4, "learning_rate": 1e-3,
        "seed": 1, "optimizer": "adam", "hidden_dims": [8, 4]}))
    out = tmp_path / "model.json"
    rc = cli_main(["train-fusion", "--config", str(cfg), "--out", str(out),
                   "--train-config", str(tcfg)])
    assert rc == 0
    from doafusion import load_model
    model = load_model(out)
    assert model.layer_dims == [3, 8, 4, 1]
