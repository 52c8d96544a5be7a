"""
Command-line entry point for the GuideTouch toolkit.

Subcommands:
    simulate    run the sensing pipeline along a scripted trajectory
    render      heatmap or point cloud of one frame
    experiment  simulated perception study with per-participant trial logs
    stats       confusion matrix, accuracies, ANOVA and pairwise tests
    coverage    check the rig's vertical coverage against knee/head heights

Exit codes: 0 success, 1 input error, 2 degenerate statistics.
"""

import argparse
import json
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.config import RunConfig, load_config
from app.errors import ConfigError, DegenerateStatisticsError, GuideTouchError, TableFormatError
from app.experiment import (
    load_table_csv,
    ingest_table,
    load_trials,
    participant_ids,
    responder_from_source,
    run_study,
    write_trials,
    accuracy,
)
from app.haptics_codec import Group, patterns_for
from app.pipeline import AlarmState, DetectionConfig, GuidePipeline, triggering_obstacles
from app.render import (
    ascii_heatmap,
    heat_colors,
    is_grid_file,
    load_frames_csv,
    load_grids_csv,
    point_cloud,
    save_heatmap_figure,
    save_point_cloud_figure,
    write_frames_csv,
    write_grids_csv,
    write_point_cloud,
    write_ppm,
)
from app.reports import build_stats_report, simulation_summary, write_stats_report
from app.scene_geometry import Vec3, load_scene
from app.stats import accuracy_cells, confusion_from_trials
from app.tof_model import (
    DualRig,
    NoiseModel,
    SensorId,
    coverage_report,
    fuse,
    sense_rig,
)
from app.utils.logger import get_logger

logger = get_logger("CLI")

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_DEGENERATE = 2


# --- trajectories ----------------------------------------------------------

@dataclass(frozen=True)
class Waypoint:
    tick: int
    position: Vec3
    heading_deg: float = 0.0
    clip_closed: bool = False


class Trajectory:
    """
    Wearer path through a scene.

    Position and heading are interpolated linearly between waypoints and held
    constant outside them; clip_closed steps at each waypoint.
    """

    def __init__(self, waypoints: Sequence[Waypoint]):
        if not waypoints:
            raise ConfigError("trajectory needs at least one waypoint")
        ticks = [w.tick for w in waypoints]
        if any(b <= a for a, b in zip(ticks, ticks[1:])):
            raise ConfigError("trajectory ticks must be strictly increasing")
        self.waypoints = tuple(waypoints)

    @classmethod
    def stationary(cls) -> "Trajectory":
        return cls([Waypoint(0, Vec3(0.0, 0.0, 0.0))])

    @classmethod
    def straight(cls, speed_m_per_tick: float, ticks: int, heading_deg: float = 0.0) -> "Trajectory":
        """Constant-speed walk from the origin along the heading."""
        h = np.radians(heading_deg)
        end = Vec3(speed_m_per_tick * ticks * float(np.cos(h)), speed_m_per_tick * ticks * float(np.sin(h)), 0.0)
        return cls([Waypoint(0, Vec3(0.0, 0.0, 0.0), heading_deg), Waypoint(ticks, end, heading_deg)])

    def pose_at(self, tick: int) -> Tuple[Vec3, float, bool]:
        w = self.waypoints
        if tick <= w[0].tick:
            return w[0].position, w[0].heading_deg, w[0].clip_closed
        if tick >= w[-1].tick:
            return w[-1].position, w[-1].heading_deg, w[-1].clip_closed
        for a, b in zip(w, w[1:]):
            if a.tick <= tick < b.tick:
                f = (tick - a.tick) / (b.tick - a.tick)
                position = a.position + (b.position - a.position).scaled(f)
                return position, a.heading_deg + f * (b.heading_deg - a.heading_deg), a.clip_closed
        raise AssertionError("unreachable")


def load_trajectory(path) -> Trajectory:
    """
    JSON trajectory: {"waypoints": [{"tick": 0, "position": [x, y, z],
    "heading_deg": 0, "clip_closed": false}, ...]}
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as e:
        raise ConfigError(f"cannot read trajectory {path}: {e.strerror}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}, line {e.lineno}: {e.msg}") from None
    if not isinstance(doc, dict) or not isinstance(doc.get("waypoints"), list):
        raise ConfigError(f"{path}: expected an object with a 'waypoints' list")
    waypoints = []
    for i, raw in enumerate(doc["waypoints"]):
        try:
            waypoints.append(Waypoint(int(raw["tick"]), Vec3.of(raw["position"]),
                                      float(raw.get("heading_deg", 0.0)), bool(raw.get("clip_closed", False))))
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"{path}: waypoint #{i} is malformed ({e})") from None
    return Trajectory(waypoints)


# --- commands --------------------------------------------------------------

def _out_dir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ConfigError(f"cannot create output directory {out}: {e.strerror}") from None
    return out


def _noise(cfg: RunConfig) -> NoiseModel:
    n = cfg.noise
    return NoiseModel(n.sigma_mm, n.dropout_prob, n.spike_prob, n.spike_value_mm, seed=cfg.run.seed)


def cmd_simulate(cfg: RunConfig, trajectory: Trajectory, out_dir, dump_frames: bool = False) -> GuidePipeline:
    """
    Run cfg.run.ticks pipeline ticks along the trajectory.

    Writes run_log.csv and summary.txt (plus frames.csv and grids.csv with
    dump_frames) into out_dir.
    """
    if cfg.scene_path is None:
        raise ConfigError("simulate needs a scene (--scene or \"scene\" in the config)")
    scene = load_scene(cfg.scene_path)
    rig = DualRig.from_config(cfg.rig)
    detection = DetectionConfig.from_settings(cfg.detection)
    pipeline = GuidePipeline(rig, detection, _noise(cfg), AlarmState(buzzer_freq_hz=cfg.alarm.buzzer_freq_hz))
    out = _out_dir(out_dir)

    frames, grids = [], []
    first_by_obstacle: Dict[str, Optional[int]] = {o.id: None for o in scene.obstacles}
    for t in range(cfg.run.ticks):
        position, heading, clip_closed = trajectory.pose_at(t)
        result = pipeline.step(scene, t, position, heading, clip_closed)
        if dump_frames:
            frames.extend(result.frames)
            grids.append(result.filtered)
        if result.report.mask.is_empty:
            continue
        for label in triggering_obstacles(scene, rig.placed(position, heading), result.report, detection):
            if first_by_obstacle.get(label) is None:
                first_by_obstacle[label] = t

    pipeline.log.to_csv(out / "run_log.csv")
    summary = simulation_summary(pipeline.log.reports, [o.id for o in scene.obstacles],
                                 first_by_obstacle, pipeline.alarm_events)
    (out / "summary.txt").write_text(summary)
    if dump_frames:
        write_frames_csv(frames, out / "frames.csv")
        write_grids_csv(grids, out / "grids.csv")
    logger.info(f"Simulated {cfg.run.ticks} ticks into {out}")
    return pipeline


def _select_tick(available: Sequence[int], tick: Optional[int], source) -> int:
    if not available:
        raise TableFormatError(f"{source}: no frames")
    if tick is None:
        return min(available)
    if tick not in available:
        raise TableFormatError(f"{source}: no frame for tick {tick}")
    return tick


def cmd_render(cfg: RunConfig, mode: str, out_dir, frames_path=None, tick: Optional[int] = None,
               sensor: str = "combined", figure: bool = False) -> List[Path]:
    """
    Render one frame as heatmap (PPM + ASCII) or point cloud (x y z text).

    The frame comes from a frames/grids CSV or, without one, from sensing
    cfg's scene noise-free at the origin pose, tick 0. Point clouds are in
    the wearer frame.
    """
    rig = DualRig.from_config(cfg.rig)
    out = _out_dir(out_dir)
    per_sensor = None
    grid = None

    if frames_path is not None:
        if is_grid_file(frames_path):
            if mode == "pointcloud":
                raise TableFormatError(f"{frames_path}: point clouds need per-sensor frames, not fused grids")
            grids = load_grids_csv(frames_path, rig)
            grid = grids[_select_tick(sorted(grids), tick, frames_path)]
        else:
            loaded = load_frames_csv(frames_path)
            t = _select_tick(sorted({k[0] for k in loaded}), tick, frames_path)
            if (t, SensorId.UPPER) not in loaded or (t, SensorId.LOWER) not in loaded:
                raise TableFormatError(f"{frames_path}: tick {t} lacks a frame from each sensor")
            per_sensor = (loaded[(t, SensorId.UPPER)], loaded[(t, SensorId.LOWER)])
    else:
        if cfg.scene_path is None:
            raise ConfigError("render needs --frames or a scene")
        per_sensor = sense_rig(load_scene(cfg.scene_path), rig, 0, NoiseModel.off())

    written = []
    if mode == "heatmap":
        if grid is None:
            if sensor == "combined":
                grid = fuse(per_sensor[0], per_sensor[1], rig)
                cells, valid, max_mm = grid.cells, grid.valid, grid.sentinel_mm
            else:
                frame = per_sensor[0] if sensor == "upper" else per_sensor[1]
                pose = rig.upper if sensor == "upper" else rig.lower
                cells, valid, max_mm = frame.zones, frame.valid, pose.sentinel_mm
        else:
            cells, valid, max_mm = grid.cells, grid.valid, grid.sentinel_mm
        write_ppm(out / "heatmap.ppm", heat_colors(cells, valid, max_mm))
        (out / "heatmap.txt").write_text(ascii_heatmap(cells, valid, max_mm))
        written += [out / "heatmap.ppm", out / "heatmap.txt"]
        if figure:
            save_heatmap_figure(out / "heatmap.png", cells, valid, max_mm, title=f"{sensor} distance (mm)")
            written.append(out / "heatmap.png")
    elif mode == "pointcloud":
        parts = []
        if sensor in ("upper", "combined"):
            parts.append(point_cloud(per_sensor[0], rig.upper))
        if sensor in ("lower", "combined"):
            parts.append(point_cloud(per_sensor[1], rig.lower))
        points = np.vstack(parts) if parts else np.empty((0, 3))
        write_point_cloud(out / "pointcloud.txt", points)
        written.append(out / "pointcloud.txt")
        if figure:
            save_point_cloud_figure(out / "pointcloud.png", points, title=f"{sensor} point cloud")
            written.append(out / "pointcloud.png")
    else:
        raise ConfigError(f"unknown render mode '{mode}'")
    return written


def cmd_experiment(cfg: RunConfig, group, responder_source: str, out_dir) -> Dict[str, list]:
    """Simulated study; writes trials_<participant>.csv per participant and trials_all.csv."""
    group = Group(group)
    responder = responder_from_source(responder_source, group, cfg.experiment.trials_per_row, cfg.run.seed)
    sessions = run_study(group, responder, cfg.experiment.reps, cfg.experiment.participants, cfg.run.seed)
    out = _out_dir(out_dir)
    everything = []
    for pid in participant_ids(cfg.experiment.participants):
        write_trials(sessions[pid], out / f"trials_{pid}.csv")
        everything.extend(sessions[pid])
    write_trials(everything, out / "trials_all.csv")
    return sessions


def cmd_stats(cfg: RunConfig, out_dir, trials_paths: Sequence = (), table_path=None, alpha: float = 0.05):
    """Analyse trial logs or a published-style percentage table."""
    if table_path is not None:
        cm = ingest_table(load_table_csv(table_path), cfg.experiment.trials_per_row)
        report = build_stats_report(cm, None, alpha)
    else:
        records = []
        for path in trials_paths:
            records.extend(load_trials(path))
        if not records:
            raise TableFormatError("no trial records to analyse")
        groups = {r.group for r in records}
        if len(groups) != 1:
            raise TableFormatError(f"trial logs mix groups {sorted(g.value for g in groups)}")
        labels = patterns_for(groups.pop()).names()
        cm = confusion_from_trials(records, labels)
        report = build_stats_report(cm, accuracy_cells(records, labels), alpha)
    write_stats_report(report, out_dir)
    return report


# --- argument parsing ------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int, help="override run.seed")
    common.add_argument("--out", help="output directory")

    parser = argparse.ArgumentParser(prog="guidetouch", description="GuideTouch obstacle-sensing and haptics toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="run the pipeline along a trajectory")
    p.add_argument("--scene", help="scene JSON (overrides the config)")
    p.add_argument("--ticks", type=int, help="override run.ticks")
    p.add_argument("--trajectory", help="trajectory JSON; default is standing at the origin")
    p.add_argument("--dump-frames", action="store_true", help="also write frames.csv and grids.csv")

    p = sub.add_parser("render", parents=[common], help="heatmap or point cloud of one frame")
    p.add_argument("--mode", choices=["heatmap", "pointcloud"], default="heatmap")
    p.add_argument("--frames", help="frames.csv or grids.csv written by simulate --dump-frames")
    p.add_argument("--scene", help="sense this scene at the origin instead of reading frames")
    p.add_argument("--tick", type=int, help="tick to render (default: first in file)")
    p.add_argument("--sensor", choices=["upper", "lower", "combined"], default="combined")
    p.add_argument("--figure", action="store_true", help="also save a matplotlib PNG")

    p = sub.add_parser("experiment", parents=[common], help="simulated perception study")
    p.add_argument("--group", choices=[g.value for g in Group], default="B")
    p.add_argument("--reps", type=int, help="repetitions of each pattern")
    p.add_argument("--participants", type=int, help="number of simulated participants")
    p.add_argument("--responder", default="identity", help="identity, uniform, published, or a table CSV path")

    p = sub.add_parser("stats", parents=[common], help="analyse trial logs or a table")
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--trials", nargs="+", help="trial log CSV(s)")
    source.add_argument("--table", help="percentage table CSV")
    p.add_argument("--alpha", type=float, default=0.05)

    p = sub.add_parser("coverage", parents=[common], help="vertical coverage check")
    p.add_argument("--user-height", type=float, default=1.70)
    p.add_argument("--distance", type=float, default=0.5)
    return parser


def _resolve_config(args) -> RunConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, run=replace(cfg.run, seed=args.seed))
    if getattr(args, "ticks", None) is not None:
        if args.ticks < 1:
            raise ConfigError("--ticks must be >= 1")
        cfg = replace(cfg, run=replace(cfg.run, ticks=args.ticks))
    if getattr(args, "scene", None):
        if not Path(args.scene).exists():
            raise ConfigError(f"scene file not found: {args.scene}")
        cfg = replace(cfg, scene_path=args.scene)
    if getattr(args, "reps", None) is not None:
        cfg = replace(cfg, experiment=replace(cfg.experiment, reps=args.reps))
    if getattr(args, "participants", None) is not None:
        cfg = replace(cfg, experiment=replace(cfg.experiment, participants=args.participants))
    if cfg.experiment.reps < 1 or cfg.experiment.participants < 1:
        raise ConfigError("reps and participants must be >= 1")
    if args.out:
        cfg = replace(cfg, out_dir=args.out)
    return cfg


def run(args) -> int:
    cfg = _resolve_config(args)

    if args.command == "simulate":
        trajectory = load_trajectory(args.trajectory) if args.trajectory else Trajectory.stationary()
        pipeline = cmd_simulate(cfg, trajectory, cfg.out_dir, args.dump_frames)
        triggered = sum(not r.mask.is_empty for r in pipeline.log.reports)
        print(f"simulated {len(pipeline.log)} ticks, {triggered} with an active mask -> {cfg.out_dir}")
        return EXIT_OK

    if args.command == "render":
        written = cmd_render(cfg, args.mode, cfg.out_dir, args.frames, args.tick, args.sensor, args.figure)
        for path in written:
            print(path)
        return EXIT_OK

    if args.command == "experiment":
        sessions = cmd_experiment(cfg, args.group, args.responder, cfg.out_dir)
        records = [r for s in sessions.values() for r in s]
        print(f"group {args.group}: {len(sessions)} participants, {len(records)} trials, "
              f"accuracy {accuracy(records) * 100:.1f}% -> {cfg.out_dir}")
        return EXIT_OK

    if args.command == "stats":
        report = cmd_stats(cfg, cfg.out_dir, args.trials or (), args.table, args.alpha)
        print(f"mean accuracy: {report.accuracy_frame().iloc[-1]['accuracy_percent']:.1f}%")
        for outcome in report.anova:
            print(f"{outcome.factor}-wise ANOVA: " + (outcome.status if outcome.result is None else
                  f"F({outcome.result.df_between},{outcome.result.df_within}) = {outcome.result.f_stat:.4f}, "
                  f"p = {outcome.result.p_value:.6g}"))
        return EXIT_DEGENERATE if report.degenerate else EXIT_OK

    if args.command == "coverage":
        report = coverage_report(DualRig.from_config(cfg.rig), args.user_height, args.distance)
        verdict = "PASS" if report.passed else "FAIL"
        print(f"coverage at {args.distance:.2f} m for a {args.user_height:.2f} m user: "
              f"lowest {report.lowest_hit_z:.3f} m (knee {report.knee_target_z:.3f} m), "
              f"highest {report.highest_hit_z:.3f} m (head {report.head_target_z:.3f} m): {verdict}")
        return EXIT_OK if report.passed else EXIT_INPUT

    raise ConfigError(f"unknown command '{args.command}'")


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except DegenerateStatisticsError as e:
        logger.debug(f"Degenerate statistics: {e}", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (GuideTouchError, ValueError, KeyError, OSError) as e:
        logger.debug(f"{args.command} failed: {e}", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
