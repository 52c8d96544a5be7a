"""
End-to-end tests for the guidetouch command line: every subcommand, its
output files and its exit codes.
"""

import json
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
from PIL import Image

from app.cli import EXIT_DEGENERATE, EXIT_INPUT, EXIT_OK, Trajectory, Waypoint, load_trajectory, main
from app.errors import ConfigError
from app.experiment import ingest_table, load_table_csv, load_trials
from app.haptics_codec import EMPTY, parse
from app.pipeline import load_run_log
from app.render import COLOR_SENTINEL, DEFAULT_CELL_PX, load_frames_csv, load_point_cloud, point_cloud
from app.scene_geometry import Vec3
from app.stats import per_pattern_accuracy
from app.tof_model import DepthFrame, SensorId, SensorPose

ROOT = Path(__file__).parent
DATA = ROOT / "data"
SCENES = DATA / "scenes"
TRAJECTORIES = DATA / "trajectories"

QUIET = {"sigma_mm": 0, "spike_prob": 0, "dropout_prob": 0}


def write_config(tmp_path, **sections) -> str:
    doc = {"noise": QUIET}
    doc.update(sections)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(doc))
    return str(path)


def zones(path) -> np.ndarray:
    """PPM back to one RGB value per zone."""
    image = np.asarray(Image.open(path).convert("RGB"))
    return image[::DEFAULT_CELL_PX, ::DEFAULT_CELL_PX]


# --- simulate ----------------------------------------------------------------

def test_simulate_empty_scene_never_triggers(tmp_path):
    out = tmp_path / "out"
    code = main(["simulate", "--config", write_config(tmp_path), "--scene", str(SCENES / "empty.json"),
                 "--out", str(out)])
    assert code == EXIT_OK
    log = load_run_log(out / "run_log.csv")
    assert len(log) == 100
    assert all(mask == EMPTY for mask in log["mask"])
    raw = pd.read_csv(out / "run_log.csv", dtype={"mask": str}, keep_default_na=False)
    assert set(raw["mask"]) == {"none"}
    summary = (out / "summary.txt").read_text()
    assert "ticks: 100" in summary
    assert "L1: never" in summary


def test_simulate_head_bar_demo(tmp_path, capsys):
    out = tmp_path / "bar"
    code = main(["simulate", "--config", str(DATA / "configs" / "bar_demo.json"),
                 "--trajectory", str(TRAJECTORIES / "walk_forward.json"), "--out", str(out)])
    assert code == EXIT_OK
    assert "simulated 15 ticks" in capsys.readouterr().out

    log = load_run_log(out / "run_log.csv")
    active = log[log["mask"] != EMPTY]
    first = active.iloc[0]
    assert first["mask"] == parse("L2+R2")
    assert first["tick"] <= 4
    assert 1.5 - 0.1 * first["tick"] >= 1.0

    summary = (out / "summary.txt").read_text()
    bar_line = next(line for line in summary.splitlines() if line.strip().startswith("bar:"))
    assert int(bar_line.split(":")[1]) == first["tick"]
    assert "ground" not in summary


def test_simulate_is_byte_identical_per_seed(tmp_path):
    args = ["simulate", "--scene", str(SCENES / "corridor.json"), "--trajectory",
            str(TRAJECTORIES / "walk_forward.json"), "--ticks", "40", "--seed", "5", "--dump-frames"]
    assert main(args + ["--out", str(tmp_path / "a")]) == EXIT_OK
    assert main(args + ["--out", str(tmp_path / "b")]) == EXIT_OK
    for name in ("run_log.csv", "summary.txt", "frames.csv", "grids.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_simulate_dumped_frames_reparse(tmp_path):
    out = tmp_path / "dump"
    code = main(["simulate", "--config", write_config(tmp_path), "--scene", str(SCENES / "wall.json"),
                 "--ticks", "3", "--dump-frames", "--out", str(out)])
    assert code == EXIT_OK
    frames = load_frames_csv(out / "frames.csv")
    assert sorted(frames) == sorted((t, s) for t in range(3) for s in (SensorId.UPPER, SensorId.LOWER))
    assert frames[(0, SensorId.UPPER)].zones.shape == (8, 8)
    grids = pd.read_csv(out / "grids.csv")
    assert list(grids.columns) == ["tick", "row", "col", "distance_mm", "valid"]
    assert len(grids) == 3 * 12 * 8


def test_simulate_alarm_events_in_summary(tmp_path):
    out = tmp_path / "alarm"
    code = main(["simulate", "--config", write_config(tmp_path), "--scene", str(SCENES / "empty.json"),
                 "--trajectory", str(TRAJECTORIES / "dislodged.json"), "--ticks", "30", "--out", str(out)])
    assert code == EXIT_OK
    summary = (out / "summary.txt").read_text()
    assert "20: triggered" in summary


# --- render ------------------------------------------------------------------

def test_render_empty_scene_is_uniform(tmp_path):
    out = tmp_path / "render"
    assert main(["render", "--scene", str(SCENES / "empty.json"), "--out", str(out)]) == EXIT_OK
    image = np.asarray(Image.open(out / "heatmap.ppm").convert("RGB"))
    assert image.shape == (12 * DEFAULT_CELL_PX, 8 * DEFAULT_CELL_PX, 3)
    assert np.all(image == np.array(COLOR_SENTINEL, dtype=np.uint8))
    assert set((out / "heatmap.txt").read_text().replace("\n", "")) == {" "}


def test_render_wall_heatmap_is_symmetric_and_warmest_ahead(tmp_path):
    out = tmp_path / "wall"
    code = main(["render", "--scene", str(SCENES / "wall.json"), "--sensor", "upper", "--out", str(out)])
    assert code == EXIT_OK
    rgb = zones(out / "heatmap.ppm")
    assert rgb.shape == (8, 8, 3)
    assert np.array_equal(rgb, rgb[:, ::-1])
    red = rgb[..., 0].astype(int)
    row, col = np.unravel_index(np.argmax(red), red.shape)
    assert row in (2, 3) and col in (3, 4)
    assert red[row, col] > red[0, 0]


def test_render_point_cloud_lies_on_wall(tmp_path):
    out = tmp_path / "cloud"
    code = main(["render", "--mode", "pointcloud", "--scene", str(SCENES / "wall.json"),
                 "--sensor", "upper", "--out", str(out)])
    assert code == EXIT_OK
    points = load_point_cloud(out / "pointcloud.txt")
    assert points.shape == (64, 3)
    assert np.all(np.abs(points[:, 0] - 2.0) < 1e-3)


def test_render_from_dumped_frames(tmp_path):
    sim = tmp_path / "sim"
    main(["simulate", "--config", write_config(tmp_path), "--scene", str(SCENES / "wall.json"),
          "--ticks", "2", "--dump-frames", "--out", str(sim)])
    out = tmp_path / "from_frames"
    code = main(["render", "--mode", "pointcloud", "--frames", str(sim / "frames.csv"), "--tick", "1",
                 "--out", str(out)])
    assert code == EXIT_OK
    points = load_point_cloud(out / "pointcloud.txt")
    assert len(points) > 64
    code = main(["render", "--frames", str(sim / "grids.csv"), "--out", str(tmp_path / "grid")])
    assert code == EXIT_OK
    assert zones(tmp_path / "grid" / "heatmap.ppm").shape == (12, 8, 3)


def test_single_zone_point_is_straight_ahead():
    pose = SensorPose(Vec3(0.0, 0.0, 0.0), pitch_deg=0.0)
    cells = np.full((8, 8), 4000.0)
    cells[3, 3] = 1000.0
    points = point_cloud(DepthFrame(SensorId.UPPER, 0, cells, np.ones((8, 8), bool)), pose)
    assert points.shape == (1, 3)
    assert np.linalg.norm(points[0]) == pytest.approx(1.0)
    assert np.allclose(points[0], [1.0, 0.0, 0.0], atol=0.1)


# --- experiment and stats ----------------------------------------------------

def test_experiment_identity_group_b(tmp_path, capsys):
    out = tmp_path / "exp"
    assert main(["experiment", "--group", "B", "--seed", "3", "--out", str(out)]) == EXIT_OK
    assert "accuracy 100.0%" in capsys.readouterr().out
    records = load_trials(out / "trials_all.csv")
    assert len(records) == 550
    assert all(r.correct for r in records)
    assert len(list(out.glob("trials_P*.csv"))) == 11


def test_experiment_group_a_size(tmp_path):
    out = tmp_path / "exp_a"
    assert main(["experiment", "--group", "A", "--out", str(out)]) == EXIT_OK
    assert len(load_trials(out / "trials_all.csv")) == 825


def test_stats_on_published_table_b(tmp_path):
    out = tmp_path / "stats_b"
    assert main(["stats", "--table", str(DATA / "table_group_b.csv"), "--out", str(out)]) == EXIT_OK
    acc = pd.read_csv(out / "accuracy.csv")
    assert acc.iloc[-1]["pattern"] == "mean"
    assert acc.iloc[-1]["accuracy_percent"] == pytest.approx(92.9, abs=0.1)
    assert "skipped" in (out / "report.txt").read_text()


def test_stats_table_a_accuracies_follow_diagonal(tmp_path):
    out = tmp_path / "stats_a"
    table = DATA / "table_group_a.csv"
    assert main(["stats", "--table", str(table), "--out", str(out)]) == EXIT_OK
    acc = pd.read_csv(out / "accuracy.csv").iloc[:-1]
    expected = np.round(np.array(per_pattern_accuracy(ingest_table(load_table_csv(table)))) * 100, 1)
    np.testing.assert_allclose(acc["accuracy_percent"].to_numpy(), expected)
    pct = pd.read_csv(out / "confusion_percent.csv", index_col=0)
    assert pct.shape == (15, 15)
    assert pct.index.name == "true"


def test_stats_identity_trials_are_degenerate(tmp_path, capsys):
    exp = tmp_path / "exp"
    main(["experiment", "--group", "B", "--out", str(exp)])
    capsys.readouterr()
    code = main(["stats", "--trials", str(exp / "trials_all.csv"), "--out", str(tmp_path / "stats")])
    assert code == EXIT_DEGENERATE
    assert "no variance" in capsys.readouterr().out


def test_stats_on_simulated_published_trials(tmp_path):
    exp = tmp_path / "exp"
    assert main(["experiment", "--group", "B", "--responder", "published", "--seed", "11",
                 "--out", str(exp)]) == EXIT_OK
    out = tmp_path / "stats"
    trials = sorted(str(p) for p in exp.glob("trials_P*.csv"))
    assert main(["stats", "--trials", *trials, "--out", str(out)]) == EXIT_OK
    anova = pd.read_csv(out / "anova.csv")
    dfs = {row["factor"]: (row["df_between"], row["df_within"]) for _, row in anova.iterrows()}
    assert dfs == {"pattern": (9, 100), "participant": (10, 99)}
    for name in ("tukey.csv", "bonferroni.csv"):
        frame = pd.read_csv(out / name)
        assert list(frame.columns)[:3] == ["factor", "group_a", "group_b"]
        assert len(frame) == 45 + 55
    acc = pd.read_csv(out / "accuracy.csv")
    assert abs(acc.iloc[-1]["accuracy_percent"] - 92.9) <= 4.0


def test_stats_rejects_mixed_groups(tmp_path):
    main(["experiment", "--group", "A", "--participants", "1", "--out", str(tmp_path / "a")])
    main(["experiment", "--group", "B", "--participants", "1", "--out", str(tmp_path / "b")])
    code = main(["stats", "--trials", str(tmp_path / "a" / "trials_all.csv"),
                 str(tmp_path / "b" / "trials_all.csv"), "--out", str(tmp_path / "s")])
    assert code == EXIT_INPUT


# --- coverage and errors -----------------------------------------------------

def test_coverage_default_rig_passes(capsys):
    assert main(["coverage"]) == EXIT_OK
    assert "PASS" in capsys.readouterr().out


def test_coverage_fail_exits_nonzero(tmp_path, capsys):
    cfg = write_config(tmp_path, rig={"upper_pitch_deg": 0, "lower_pitch_deg": 30})
    assert main(["coverage", "--config", cfg]) == EXIT_INPUT
    assert "FAIL" in capsys.readouterr().out


def test_input_errors_exit_one(tmp_path, capsys):
    assert main(["simulate", "--scene", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == EXIT_INPUT
    assert "error:" in capsys.readouterr().err

    bad = tmp_path / "bad.json"
    bad.write_text('{"detection": {"danger_threshold": 900}}')
    assert main(["coverage", "--config", str(bad)]) == EXIT_INPUT

    table = tmp_path / "table.csv"
    table.write_text("true,L1,X7\nL1,100,0\nX7,0,100\n")
    assert main(["stats", "--table", str(table), "--out", str(tmp_path / "s")]) == EXIT_INPUT


def test_trajectory_interpolation_and_validation(tmp_path):
    trajectory = load_trajectory(TRAJECTORIES / "walk_forward.json")
    position, heading, _ = trajectory.pose_at(25)
    assert position.x == pytest.approx(2.5) and heading == 0.0
    assert trajectory.pose_at(500)[0].x == pytest.approx(10.0)
    dislodged = load_trajectory(TRAJECTORIES / "dislodged.json")
    assert dislodged.pose_at(21)[2] and not dislodged.pose_at(26)[2]
    with pytest.raises(ConfigError):
        Trajectory([Waypoint(5, Vec3(0, 0, 0)), Waypoint(5, Vec3(1, 0, 0))])
    assert Trajectory.straight(0.1, 10).pose_at(5)[0].x == pytest.approx(0.5)


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-v"]))
