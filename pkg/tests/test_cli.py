import json

import numpy as np
import pytest

from cwinverse.cli import main
from cwinverse.mesh import load_field


MICRO = ["--paths", "2", "--outer", "1", "--steps", "20", "--forward-paths", "2",
         "--trace-every", "10"]


def run_cli(args, capsys):
    code = main(args)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_list_experiments(capsys):
    code, out, _ = run_cli(["list-experiments"], capsys)
    assert code == 0
    listing = json.loads(out)
    assert set(listing) == {"ex1", "ex1-desk", "ex2", "ex3", "ex4"}
    assert listing["ex1"]["steps"] == 12000
    assert listing["ex4"]["window"] == [[0.0, 1.0], [2.0, 3.0], [3.0, 4.5]]


def test_verify_weights(capsys):
    code, out, _ = run_cli(["verify-weights", "--experiment", "ex1"], capsys)
    assert code == 0
    report = json.loads(out)
    assert report["R1_squared"] == pytest.approx(0.075)
    assert report["temporal_condition_ok"] is False
    assert report["observed_edges"] == ["left", "right", "top"]
    assert report["cfl_number"] < 1.0


def test_gradcheck(capsys):
    code, out, _ = run_cli(["gradcheck", "--experiment", "ex1", "--mesh", "8x6x6",
                            "--probes", "20", "--seed", "3"], capsys)
    assert code == 0
    report = json.loads(out)
    assert report["passes_1e-6"] is True
    assert report["max_rel_error"] < 1e-6


def test_unknown_config_key_is_exit_2(tmp_path, capsys):
    cfg = tmp_path / "config.json"
    cfg.write_text(json.dumps({"experiment": "ex1", "kapa": 1e-4}))
    code, _, err = run_cli(["invert", "--config", str(cfg)], capsys)
    assert code == 2
    assert "kapa" in err


def test_malformed_config_is_exit_2(tmp_path, capsys):
    cfg = tmp_path / "config.json"
    cfg.write_text("{not json")
    code, _, err = run_cli(["invert", "--config", str(cfg)], capsys)
    assert code == 2
    assert "line" in err


def test_missing_experiment_is_exit_2(capsys):
    code, _, err = run_cli(["invert"], capsys)
    assert code == 2
    assert "experiment" in err


def test_unknown_experiment_is_exit_2(capsys):
    code, _, err = run_cli(["invert", "--experiment", "nope"], capsys)
    assert code == 2


def test_forward_invert_report_roundtrip(tmp_path, capsys):
    data_dir = tmp_path / "data"
    run_dir = tmp_path / "run"
    code, *_ = run_cli(["forward", "--experiment", "ex1", "--seed", "5",
                        "--forward-paths", "2", "--out", str(data_dir)], capsys)
    assert code == 0
    assert (data_dir / "manifest.json").exists()
    assert (data_dir / "path_001" / "trajectory.field").exists()

    code, *_ = run_cli(["invert", "--experiment", "ex1", "--seed", "5",
                        "--data", str(data_dir), "--out", str(run_dir), *MICRO], capsys)
    assert code == 0
    metrics = json.loads((run_dir / "metrics.json").read_text())
    assert 0.0 < metrics["l2_relative_error"] <= 1.5
    assert (run_dir / "error_vs_step.csv").exists()
    assert (run_dir / "consecutive_difference.csv").exists()
    assert (run_dir / "loss_trace.csv").exists()

    code, out, _ = run_cli(["report", str(run_dir)], capsys)
    assert code == 0
    summary = json.loads((run_dir / "summary.json").read_text())
    assert summary["final_l2_relative_error"] == pytest.approx(metrics["l2_relative_error"])
    recon = (run_dir / "reconstruction.csv").read_text().splitlines()
    mesh_nodes = 33 * 49
    assert len(recon) == 1 + mesh_nodes
    assert recon[0] == "x,y,u0,u0_true,rel_diff"


def test_invert_determinism(tmp_path, capsys):
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    for out in (out_a, out_b):
        code, *_ = run_cli(["invert", "--experiment", "ex1-desk", "--seed", "7",
                            "--out", str(out), *MICRO], capsys)
        assert code == 0
    assert (out_a / "metrics.json").read_bytes() == (out_b / "metrics.json").read_bytes()
    assert (out_a / "u_c.field").read_bytes() == (out_b / "u_c.field").read_bytes()
    for p in sorted((out_a / "paths").iterdir()):
        assert p.read_bytes() == (out_b / "paths" / p.name).read_bytes()


def test_report_refuses_tampered_manifest(tmp_path, capsys):
    run_dir = tmp_path / "run"
    code, *_ = run_cli(["invert", "--experiment", "ex1", "--seed", "1",
                        "--out", str(run_dir), *MICRO], capsys)
    assert code == 0
    manifest = json.loads((run_dir / "manifest.json").read_text())
    manifest["config"]["steps"] = 999  # silently edited config
    (run_dir / "manifest.json").write_text(json.dumps(manifest))
    code, _, err = run_cli(["report", str(run_dir)], capsys)
    assert code == 2
    assert "hash mismatch" in err


def test_report_on_non_run_dir(tmp_path, capsys):
    code, _, err = run_cli(["report", str(tmp_path)], capsys)
    assert code == 2


def test_invert_missing_data_dir_is_exit_2(tmp_path, capsys):
    code, _, err = run_cli(["invert", "--experiment", "ex1", "--data",
                            str(tmp_path / "nope"), *MICRO], capsys)
    assert code == 2


def test_dataset_experiment_mismatch(tmp_path, capsys):
    data_dir = tmp_path / "data"
    code, *_ = run_cli(["forward", "--experiment", "ex1", "--seed", "5",
                        "--forward-paths", "1", "--out", str(data_dir)], capsys)
    assert code == 0
    code, _, err = run_cli(["invert", "--experiment", "ex2", "--data", str(data_dir),
                            *MICRO], capsys)
    assert code == 2
    assert "ex1" in err


def test_saved_average_field_is_loadable(tmp_path, capsys):
    run_dir = tmp_path / "run"
    code, *_ = run_cli(["invert", "--experiment", "ex1", "--seed", "2",
                        "--out", str(run_dir), *MICRO], capsys)
    assert code == 0
    field = load_field(run_dir / "u_c.field")
    assert field.mesh.Nx == 32 and field.mesh.Ny == 48
    assert np.isfinite(field.values).all()
