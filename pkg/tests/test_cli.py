import json

import numpy as np
import pytest

from multisuction import synth
from multisuction.cli import EXIT_FORMAT, EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, run_bench, run_cli
from multisuction.scene_io import save_scene

from conftest import TWO_CUP


@pytest.fixture
def workspace(tmp_path):
    (tmp_path / "gripper.json").write_text(json.dumps({"cup_centers_local": TWO_CUP, "cup_radius": 0.01}))
    return tmp_path


def scene_args(d, aff="affordance.npy"):
    return ["--depth", str(d / "depth.npy"), "--affordance", str(d / aff),
            "--intrinsics", str(d / "intrinsics.json")]


def gen(workspace, preset, name):
    out = workspace / name
    assert run_cli(["gen-scene", "--preset", preset, "--out-dir", str(out),
                    "--gripper", str(workspace / "gripper.json")]) == EXIT_OK
    return out


def test_plan_plate(workspace, capsys):
    d = gen(workspace, "plate", "plate")
    truth = json.loads((d / "ground_truth.json").read_text())
    assert truth["expected_max_obj"] == 1
    rc = run_cli(["plan", *scene_args(d), "--gripper", str(workspace / "gripper.json"),
                  "--out", str(workspace / "r.json"), "--ply", str(workspace / "r.ply"),
                  "--map-cache", str(workspace / "map.json")])
    assert rc == EXIT_OK
    rep = json.loads((workspace / "r.json").read_text())
    assert rep["outcome"] == "multi_cup" and rep["optimal"]["A"] == [1, 1]
    assert (workspace / "r.ply").read_text().startswith("ply\n")
    assert (workspace / "map.json").exists()


def test_plan_empty_affordance(workspace):
    d = gen(workspace, "blob", "blob")
    np.save(d / "zero.npy", np.zeros_like(np.load(d / "affordance.npy")))
    rc = run_cli(["plan", *scene_args(d, "zero.npy"), "--gripper", str(workspace / "gripper.json"),
                  "--out", str(workspace / "r.json")])
    assert rc == EXIT_OK
    rep = json.loads((workspace / "r.json").read_text())
    assert rep["outcome"] == "no_solution" and rep["optimal"] is None


def test_plan_config_and_threads(workspace):
    d = gen(workspace, "two-box", "boxes")
    (workspace / "cfg.json").write_text(json.dumps({"angle_interval_deg": 10, "eps_normal_deg": 11.5}))
    rc = run_cli(["plan", *scene_args(d), "--gripper", str(workspace / "gripper.json"),
                  "--config", str(workspace / "cfg.json"), "--threads", "0",
                  "--out", str(workspace / "r.json")])
    assert rc == EXIT_OK
    rep = json.loads((workspace / "r.json").read_text())
    assert rep["config"]["angle_interval_deg"] == pytest.approx(10)
    assert rep["optimal"]["maxObj"] == 2


def test_validate_random(capsys):
    assert run_cli(["validate", "--random", "20", "--grid", "24", "--orientations", "8"]) == EXIT_OK
    assert "validation passed" in capsys.readouterr().out


def test_validate_scene(workspace, capsys):
    d = gen(workspace, "two-box", "boxes")
    rc = run_cli(["validate", *scene_args(d), "--gripper", str(workspace / "gripper.json"), "--top", "20"])
    assert rc == EXIT_OK
    assert "0 violations" in capsys.readouterr().out


def test_validate_failure_exit(monkeypatch):
    import multisuction.cli as cli
    monkeypatch.setattr(cli, "equivalence_mismatch", lambda *a: {"missing": [1], "extra": [], "count": 1})
    assert run_cli(["validate", "--random", "1", "--grid", "8", "--orientations", "2"]) == EXIT_VALIDATION


def test_bench(capsys):
    assert run_cli(["bench", "--size", "16", "--kernels", "4"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "identical: True" in out and "sparse_cells_per_s" in out
    res = run_bench(12, 0.05, 3, cups=4)
    assert res["identical"] and res["kernels"] == 3


@pytest.mark.parametrize("argv", [[], ["plan"], ["bench", "--size", "x"], ["frobnicate"], ["validate"]])
def test_usage_errors(argv):
    assert run_cli(argv) == EXIT_USAGE


def test_format_errors(workspace):
    d = gen(workspace, "blob", "blob")
    base = ["plan", *scene_args(d), "--out", str(workspace / "r.json")]
    (workspace / "bad.json").write_text("{not json")
    assert run_cli(base + ["--gripper", str(workspace / "bad.json")]) == EXIT_FORMAT
    assert run_cli(base + ["--gripper", str(workspace / "missing.json")]) == EXIT_FORMAT
    (workspace / "cfg.json").write_text(json.dumps({"bogus": 1}))
    assert run_cli(base + ["--gripper", str(workspace / "gripper.json"),
                           "--config", str(workspace / "cfg.json")]) == EXIT_FORMAT
    np.save(d / "int.npy", np.ones((240, 320), dtype=np.int32))
    bad_depth = ["plan", "--depth", str(d / "int.npy"), *scene_args(d)[2:], "--out", str(workspace / "r.json"),
                 "--gripper", str(workspace / "gripper.json")]
    assert run_cli(bad_depth) == EXIT_FORMAT
    (d / "intrinsics.json").write_text(json.dumps({"fx": 1}))
    assert run_cli(base + ["--gripper", str(workspace / "gripper.json")]) == EXIT_FORMAT


def test_gen_scene_from_spec(workspace):
    spec = synth.plate_scene(size=(0.1, 0.1))
    (workspace / "spec.json").write_text(json.dumps(spec.to_dict()))
    assert run_cli(["gen-scene", "--spec", str(workspace / "spec.json"),
                    "--out-dir", str(workspace / "s")]) == EXIT_OK
    assert (workspace / "s" / "depth.npy").exists()
    truth = json.loads((workspace / "s" / "ground_truth.json").read_text())
    assert len(truth["regions"]) == 1
    (workspace / "bad_spec.json").write_text(json.dumps({"primitives": [{"type": "cone"}]}))
    assert run_cli(["gen-scene", "--spec", str(workspace / "bad_spec.json"),
                    "--out-dir", str(workspace / "t")]) == EXIT_FORMAT
    assert run_cli(["gen-scene", "--out-dir", str(workspace / "u")]) == EXIT_USAGE
