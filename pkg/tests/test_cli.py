"""Driving the command line front end in process, end to end."""

import json
import os
import shutil

import numpy as np
import pytest

from romforge import store
from romforge.cli import main

PLATE_SPACE = {
    "names": ["E", "nu", "t"],
    "lower": [150.0e9, 0.30, 0.002],
    "upper": [250.0e9, 0.40, 0.006],
}
CENTER = {"E": 200.0e9, "nu": 0.35, "t": 0.004}


def _write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh)
    return str(path)


@pytest.fixture(scope="module")
def space_file(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli_space")
    return _write_json(root / "space.json", PLATE_SPACE)


@pytest.fixture(scope="module")
def plate_run(tmp_path_factory, run_cli, space_file):
    """One full linear pipeline: doe, fom on a 5x5 mesh, train."""
    root = tmp_path_factory.mktemp("cli_plate")
    plan = str(root / "plan.json")
    snaps = str(root / "snaps")
    model = str(root / "model")
    assert run_cli("doe", "--space", space_file, "--method", "chebyshev",
                   "--order", 2, "--out", plan) == 0
    assert run_cli("fom", "plate", "--params", plan, "--grid", 5,
                   "--out", snaps) == 0
    assert run_cli("train", "--manifest", snaps, "--out", model, "--seed", 11,
                   "--val-count", 2, "--regressor", "pgd", "--pgd-degrees", 2,
                   "--target-scaler", "none", "--ratio-phi", 0) == 0
    return {"root": root, "plan": plan, "snaps": snaps, "model": model}


@pytest.fixture(scope="module")
def spring_run(tmp_path_factory, run_cli):
    """One full nonlinear pipeline on a three mass spring chain."""
    root = tmp_path_factory.mktemp("cli_spring")
    point = _write_json(root / "point.json", {"k": 400.0, "k3": 10.0})
    snaps = str(root / "snaps")
    model = str(root / "model")
    assert run_cli("fom", "spring", "--params", point, "--steps", 8,
                   "--masses", 3, "--out", snaps) == 0
    assert run_cli("train", "--manifest", snaps, "--out", model, "--seed", 3,
                   "--rf-estimators", 4, "--rf-min-leaf", 2, "--no-bootstrap",
                   "--ratio-v", 1e8, "--ratio-phi", 0) == 0
    return {"root": root, "point": point, "snaps": snaps, "model": model}


class TestTopLevel:
    def test_version_flag_exits_cleanly(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0
        assert "romforge" in capsys.readouterr().out

    def test_unknown_subcommand_is_rejected(self):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 2

    def test_json_logs_are_parseable(self, tmp_path, space_file, capsys):
        out = str(tmp_path / "plan.json")
        assert main(["--json-logs", "doe", "--space", space_file, "--method",
                     "chebyshev", "--order", "2", "--out", out]) == 0
        lines = [l for l in capsys.readouterr().err.splitlines() if l.strip()]
        assert lines
        for line in lines:
            record = json.loads(line)
            assert "event" in record

    def test_plain_logs_carry_the_event_name(self, tmp_path, space_file, capsys):
        out = str(tmp_path / "plan.json")
        assert main(["doe", "--space", space_file, "--method", "chebyshev",
                     "--order", "2", "--out", out]) == 0
        assert "doe.written" in capsys.readouterr().err


class TestDoeCommand:
    def test_chebyshev_grid_includes_the_center(self, run_cli, tmp_path, space_file):
        out = tmp_path / "plan.json"
        assert run_cli("doe", "--space", space_file, "--method", "chebyshev",
                       "--order", 2, "--out", out) == 0
        doc = json.loads(out.read_text())
        assert doc["method"] == "chebyshev"
        assert len(doc["points"]) == 9
        assert not any(p["corner"] for p in doc["points"])
        centers = [p["params"] for p in doc["points"]
                   if abs(p["params"]["E"] - 200.0e9) < 1.0]
        assert centers and centers[0] == pytest.approx(CENTER)

    def test_no_center_drops_one_point(self, run_cli, tmp_path, space_file):
        out = tmp_path / "plan.json"
        assert run_cli("doe", "--space", space_file, "--method", "chebyshev",
                       "--order", 2, "--no-center", "--out", out) == 0
        assert len(json.loads(out.read_text())["points"]) == 8

    def test_chebyshev_without_order_is_a_usage_error(self, run_cli, tmp_path,
                                                      space_file, capsys):
        rc = run_cli("doe", "--space", space_file, "--method", "chebyshev",
                     "--out", tmp_path / "plan.json")
        assert rc == 2
        assert "--order" in capsys.readouterr().err

    def test_lhs_without_seed_is_a_usage_error(self, run_cli, tmp_path, space_file):
        assert run_cli("doe", "--space", space_file, "--method", "lhs",
                       "--count", 5, "--out", tmp_path / "plan.json") == 2

    def test_corner_fill_counts_corners_first(self, run_cli, tmp_path, space_file):
        out = tmp_path / "plan.json"
        assert run_cli("doe", "--space", space_file, "--method", "corners+lhs",
                       "--count", 10, "--seed", 4, "--out", out) == 0
        points = json.loads(out.read_text())["points"]
        assert len(points) == 10
        assert sum(p["corner"] for p in points) == 8

    def test_count_below_the_corner_budget_is_refused(self, run_cli, tmp_path,
                                                      space_file):
        assert run_cli("doe", "--space", space_file, "--method", "corners+lhs",
                       "--count", 6, "--seed", 4,
                       "--out", tmp_path / "plan.json") == 2

    def test_missing_space_file_is_a_data_error(self, run_cli, tmp_path, capsys):
        rc = run_cli("doe", "--space", tmp_path / "absent.json", "--method",
                     "chebyshev", "--order", 2, "--out", tmp_path / "plan.json")
        assert rc == 3
        assert "no such file" in capsys.readouterr().err


class TestFomCommand:
    def test_plate_manifest_holds_one_entry_per_point(self, plate_run):
        manifest = store.read_manifest(plate_run["snaps"])
        assert manifest.problem_kind == "linear"
        assert len(manifest.entries) == 9
        bundle = store.load_entry(manifest, manifest.entries[0])
        assert bundle.displacements.shape == (manifest.n_dofs, 1)

    def test_spring_trajectory_records_every_step(self, spring_run):
        manifest = store.read_manifest(spring_run["snaps"])
        assert manifest.problem_kind == "nonlinear"
        assert len(manifest.entries) == 1
        bundle = store.load_entry(manifest, manifest.entries[0])
        assert bundle.displacements.shape == (3, 8)
        assert bundle.times.shape == (9,)

    def test_geometric_profile_stretches_the_grid(self, run_cli, tmp_path):
        point = _write_json(tmp_path / "point.json", {"k": 400.0, "k3": 10.0})
        snaps = str(tmp_path / "snaps")
        assert run_cli("fom", "spring", "--params", point, "--steps", 6,
                       "--masses", 3, "--profile", "geometric",
                       "--time-ratio", 4, "--out", snaps) == 0
        manifest = store.read_manifest(snaps)
        times = store.load_entry(manifest, manifest.entries[0]).times
        dt = np.diff(times)
        assert dt[-1] / dt[0] == pytest.approx(4.0, rel=1e-9)

    def test_point_missing_a_parameter_names_the_file(self, run_cli, tmp_path,
                                                      capsys):
        point = _write_json(tmp_path / "point.json", {"E": 2.0e11, "nu": 0.3})
        rc = run_cli("fom", "plate", "--params", point,
                     "--out", tmp_path / "snaps")
        assert rc == 3
        err = capsys.readouterr().err
        assert "point.json" in err and "'t'" in err

    def test_absent_params_file_is_a_data_error(self, run_cli, tmp_path):
        assert run_cli("fom", "plate", "--params", tmp_path / "nope.json",
                       "--out", tmp_path / "snaps") == 3

    def test_invalid_physics_surfaces_as_a_data_error(self, run_cli, tmp_path):
        point = _write_json(tmp_path / "point.json", {"k": 0.0, "k3": 10.0})
        assert run_cli("fom", "spring", "--params", point, "--steps", 4,
                       "--out", tmp_path / "snaps") == 3


class TestTrainCommand:
    def test_model_directory_has_the_expected_files(self, plate_run):
        names = sorted(os.listdir(plate_run["model"]))
        assert names == ["Phi.mm", "V.mm", "load.mm", "meta.json", "pgd.json",
                         "scaler.json", "train_report.json"]

    def test_train_report_reflects_the_split(self, plate_run):
        with open(os.path.join(plate_run["model"], "train_report.json")) as fh:
            report = json.load(fh)
        assert report["n_train"] == 7
        assert len(report["validation_members"]) == 2

    def test_grid_search_writes_a_table(self, run_cli, tmp_path, spring_run):
        grid = _write_json(tmp_path / "grid.json", {"n_estimators": [2, 4]})
        model = str(tmp_path / "model")
        assert run_cli("train", "--manifest", spring_run["snaps"], "--out",
                       model, "--seed", 3, "--grid", grid, "--cv-folds", 2,
                       "--rf-min-leaf", 2, "--ratio-v", 1e8,
                       "--ratio-phi", 0) == 0
        with open(os.path.join(model, "grid_search.csv")) as fh:
            rows = [r for r in fh.read().splitlines() if r]
        assert len(rows) == 3
        assert rows[0].split(",")[0] == "n_estimators"

    def test_missing_manifest_is_a_data_error(self, run_cli, tmp_path):
        assert run_cli("train", "--manifest", tmp_path / "absent", "--out",
                       tmp_path / "model", "--seed", 1) == 3

    def test_tampered_manifest_version_is_refused(self, run_cli, tmp_path,
                                                  spring_run):
        snaps = str(tmp_path / "snaps")
        shutil.copytree(spring_run["snaps"], snaps)
        path = os.path.join(snaps, "manifest.json")
        with open(path) as fh:
            doc = json.load(fh)
        doc["version"] = 99
        _write_json(path, doc)
        assert run_cli("train", "--manifest", snaps, "--out",
                       tmp_path / "model", "--seed", 1) == 3


class TestPredictCommand:
    def test_linear_prediction_writes_field_and_diagnostics(self, run_cli,
                                                            tmp_path, plate_run):
        point = _write_json(tmp_path / "point.json", CENTER)
        out = str(tmp_path / "pred")
        assert run_cli("predict", "--model", plate_run["model"], "--kind",
                       "linear", "--params", point, "--out", out) == 0
        u = store.read_dense(os.path.join(out, "u.mm"))
        manifest = store.read_manifest(plate_run["snaps"])
        assert u.shape == (manifest.n_dofs, 1)
        with open(os.path.join(out, "diagnostics.csv")) as fh:
            rows = fh.read().splitlines()
        assert rows[0].startswith("step,time,condition,symmetry_defect")
        assert len(rows) == 2

    def test_nonlinear_prediction_writes_the_whole_history(self, run_cli,
                                                           tmp_path, spring_run):
        point = _write_json(tmp_path / "point.json", {"k": 400.0, "k3": 10.0})
        out = str(tmp_path / "pred")
        assert run_cli("predict", "--model", spring_run["model"], "--kind",
                       "nonlinear", "--params", point, "--steps", 8,
                       "--out", out) == 0
        u = store.read_dense(os.path.join(out, "u.mm"))
        xi = store.read_dense(os.path.join(out, "xi.mm"))
        assert u.shape[1] == 9 and u.shape[0] == 3
        assert xi.shape[1] == 9
        assert np.all(u[:, 0] == 0.0)

    def test_kind_mismatch_is_a_usage_error(self, run_cli, tmp_path, plate_run,
                                            capsys):
        point = _write_json(tmp_path / "point.json", CENTER)
        rc = run_cli("predict", "--model", plate_run["model"], "--kind",
                     "nonlinear", "--params", point, "--out", tmp_path / "p")
        assert rc == 2
        assert "linear" in capsys.readouterr().err

    def test_missing_parameter_is_named(self, run_cli, tmp_path, plate_run,
                                        capsys):
        point = _write_json(tmp_path / "point.json", {"E": 2.0e11, "nu": 0.35})
        rc = run_cli("predict", "--model", plate_run["model"], "--kind",
                     "linear", "--params", point, "--out", tmp_path / "p")
        assert rc == 3
        assert "['t']" in capsys.readouterr().err

    def test_point_file_must_hold_a_single_dict(self, run_cli, tmp_path,
                                                plate_run):
        point = _write_json(tmp_path / "point.json", [CENTER])
        assert run_cli("predict", "--model", plate_run["model"], "--kind",
                       "linear", "--params", point, "--out",
                       tmp_path / "p") == 3


class TestValidateCommand:
    def test_report_and_figures_land_together(self, run_cli, tmp_path, plate_run):
        out = str(tmp_path / "report")
        assert run_cli("validate", "--manifest", plate_run["snaps"], "--model",
                       plate_run["model"], "--out", out) == 0
        names = sorted(os.listdir(out))
        assert "report.csv" in names and "summary.json" in names
        pngs = [n for n in names if n.endswith(".png")]
        assert len(pngs) == 4
        for name in pngs:
            with open(os.path.join(out, name), "rb") as fh:
                assert fh.read(8) == b"\x89PNG\r\n\x1a\n"

    @pytest.mark.filterwarnings("ignore:features outside the training range")
    def test_no_figures_suppresses_the_pngs(self, run_cli, tmp_path, spring_run):
        out = str(tmp_path / "report")
        assert run_cli("validate", "--manifest", spring_run["snaps"], "--model",
                       spring_run["model"], "--out", out, "--no-figures") == 0
        names = os.listdir(out)
        assert not [n for n in names if n.endswith(".png")]
        with open(os.path.join(out, "report.csv")) as fh:
            rows = fh.read().splitlines()
        assert len(rows) == 2
        assert rows[1].split(",")[1] == "mixed"
