"""
Render module for the GuideTouch toolkit.
Heatmaps (PPM and ASCII), point clouds and optional matplotlib figures of
depth frames, plus the long-format frame/grid CSVs that feed them.

Color ramp: linear in distance from red (255, 0, 0) at 0 mm to blue
(0, 0, 255) at the sensor's maximum range. Invalid and no-target zones use
the sentinel color (0, 0, 96), darker than any ramp color.
"""

from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from PIL import Image

from app.errors import TableFormatError
from app.tof_model import CombinedGrid, DepthFrame, DualRig, SensorId, SensorPose, zone_directions
from app.utils.logger import get_logger
from app.utils.preprocess import normalize_array, upscale, validate_grid

logger = get_logger("Render")

COLOR_NEAR = np.array([255, 0, 0], dtype=float)
COLOR_FAR = np.array([0, 0, 255], dtype=float)
COLOR_SENTINEL = (0, 0, 96)
ASCII_RAMP = "@%#*+=-:."
ASCII_SENTINEL = " "
DEFAULT_CELL_PX = 16

FRAME_COLUMNS = ["tick", "sensor", "row", "col", "distance_mm", "valid"]
GRID_COLUMNS = ["tick", "row", "col", "distance_mm", "valid"]


# --- heatmaps --------------------------------------------------------------

def _no_target(cells: np.ndarray, valid: np.ndarray, max_mm: float) -> np.ndarray:
    return ~valid | (cells >= max_mm)


def heat_colors(cells: np.ndarray, valid: np.ndarray, max_mm: float) -> np.ndarray:
    """
    Map a distance grid to RGB.

    Args:
        cells: Distances in mm, (rows, cols)
        valid: Validity mask of the same shape
        max_mm: Distance mapped to the far color

    Returns:
        (rows, cols, 3) uint8 array
    """
    cells = validate_grid(cells, np.shape(valid), "heatmap grid")
    t = normalize_array(cells, 0.0, max_mm)[..., None]
    rgb = np.rint(COLOR_NEAR * (1.0 - t) + COLOR_FAR * t)
    rgb[_no_target(cells, valid, max_mm)] = COLOR_SENTINEL
    return rgb.astype(np.uint8)


def write_ppm(path: Union[str, Path], rgb: np.ndarray, cell_px: int = DEFAULT_CELL_PX) -> None:
    """Binary PPM (P6), each zone enlarged to a cell_px square."""
    Image.fromarray(np.ascontiguousarray(upscale(rgb, cell_px))).save(path, format="PPM")


def ascii_heatmap(cells: np.ndarray, valid: np.ndarray, max_mm: float) -> str:
    """One character per zone: '@' nearest through '.' farthest, blank for no target."""
    cells = validate_grid(cells, np.shape(valid), "heatmap grid")
    t = normalize_array(cells, 0.0, max_mm)
    idx = np.minimum((t * len(ASCII_RAMP)).astype(int), len(ASCII_RAMP) - 1)
    empty = _no_target(cells, valid, max_mm)
    lines = []
    for r in range(cells.shape[0]):
        lines.append("".join(ASCII_SENTINEL if empty[r, c] else ASCII_RAMP[idx[r, c]]
                             for c in range(cells.shape[1])))
    return "\n".join(lines) + "\n"


# --- point clouds ----------------------------------------------------------

def point_cloud(frame: DepthFrame, pose: SensorPose) -> np.ndarray:
    """
    Points (meters) of every zone with a target: origin + distance * zone direction.

    Returns:
        (M, 3) array in row-major zone order
    """
    directions = zone_directions(pose)
    zones = validate_grid(frame.zones, directions.shape[:2], f"{frame.sensor.value} frame")
    hit = frame.valid & (zones < pose.sentinel_mm)
    origin = pose.mount_point.as_array()
    return origin + (zones[hit] / 1000.0)[:, None] * directions[hit]


def format_point_cloud(points: np.ndarray) -> str:
    return "".join(f"{x:.4f} {y:.4f} {z:.4f}\n" for x, y, z in points)


def write_point_cloud(path: Union[str, Path], points: np.ndarray) -> None:
    Path(path).write_text(format_point_cloud(points))


def load_point_cloud(path: Union[str, Path]) -> np.ndarray:
    text = Path(path).read_text()
    if not text.strip():
        return np.empty((0, 3))
    return np.loadtxt(path, ndmin=2)


# --- figures ---------------------------------------------------------------

def save_heatmap_figure(path: Union[str, Path], cells: np.ndarray, valid: np.ndarray, max_mm: float,
                        title: str = "") -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(4, 4 * cells.shape[0] / cells.shape[1]))
    ax.imshow(heat_colors(cells, valid, max_mm), interpolation="nearest")
    ax.set_xlabel("column (wearer left to right)")
    ax.set_ylabel("row (top to bottom)")
    if title:
        ax.set_title(title)
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)


def save_point_cloud_figure(path: Union[str, Path], points: np.ndarray, title: str = "") -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig = plt.figure(figsize=(5, 5))
    ax = fig.add_subplot(projection="3d")
    if len(points):
        ax.scatter(points[:, 0], points[:, 1], points[:, 2], c=points[:, 0], cmap="jet_r", s=8)
    ax.set_xlabel("x forward (m)")
    ax.set_ylabel("y left (m)")
    ax.set_zlabel("z up (m)")
    if title:
        ax.set_title(title)
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)


# --- frame and grid CSVs ---------------------------------------------------

def _long_rows(tick: int, cells: np.ndarray, valid: np.ndarray) -> List[list]:
    rows, cols = cells.shape
    return [[tick, r, c, round(float(cells[r, c]), 1), int(valid[r, c])] for r in range(rows) for c in range(cols)]


def frames_to_frame(frames: Iterable[DepthFrame]) -> pd.DataFrame:
    data = []
    for frame in frames:
        data.extend([row[0], frame.sensor.value] + row[1:] for row in _long_rows(frame.tick, frame.zones, frame.valid))
    return pd.DataFrame(data, columns=FRAME_COLUMNS)


def grids_to_frame(grids: Iterable[CombinedGrid]) -> pd.DataFrame:
    data = []
    for grid in grids:
        data.extend(_long_rows(grid.tick, grid.cells, grid.valid))
    return pd.DataFrame(data, columns=GRID_COLUMNS)


def write_frames_csv(frames: Iterable[DepthFrame], path: Union[str, Path]) -> None:
    frames_to_frame(frames).to_csv(path, index=False, float_format="%.1f", lineterminator="\n")


def write_grids_csv(grids: Iterable[CombinedGrid], path: Union[str, Path]) -> None:
    grids_to_frame(grids).to_csv(path, index=False, float_format="%.1f", lineterminator="\n")


def _read_long(path: Union[str, Path]) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path, keep_default_na=False)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise TableFormatError(f"cannot read {path}: {e}") from None
    if list(frame.columns) not in (FRAME_COLUMNS, GRID_COLUMNS):
        raise TableFormatError(f"{path}: unrecognized header {','.join(map(str, frame.columns))}")
    if frame.empty:
        raise TableFormatError(f"{path}: no rows")
    return frame


def _to_matrix(rows: pd.DataFrame, path) -> Tuple[np.ndarray, np.ndarray]:
    n_rows, n_cols = int(rows["row"].max()) + 1, int(rows["col"].max()) + 1
    if len(rows) != n_rows * n_cols or rows.duplicated(["row", "col"]).any():
        raise TableFormatError(f"{path}: incomplete or duplicated zones")
    cells = np.empty((n_rows, n_cols))
    valid = np.empty((n_rows, n_cols), dtype=bool)
    r, c = rows["row"].to_numpy(int), rows["col"].to_numpy(int)
    cells[r, c] = rows["distance_mm"].to_numpy(float)
    valid[r, c] = rows["valid"].to_numpy(int) != 0
    return cells, valid


def is_grid_file(path: Union[str, Path]) -> bool:
    return list(_read_long(path).columns) == GRID_COLUMNS


def load_frames_csv(path: Union[str, Path]) -> Dict[Tuple[int, SensorId], DepthFrame]:
    """Per-sensor frames keyed by (tick, sensor)."""
    frame = _read_long(path)
    if list(frame.columns) != FRAME_COLUMNS:
        raise TableFormatError(f"{path}: not a per-sensor frame file")
    out = {}
    for (tick, sensor), rows in frame.groupby(["tick", "sensor"], sort=True):
        try:
            sensor_id = SensorId(str(sensor))
        except ValueError:
            raise TableFormatError(f"{path}: unknown sensor '{sensor}'") from None
        cells, valid = _to_matrix(rows, path)
        out[(int(tick), sensor_id)] = DepthFrame(sensor_id, int(tick), cells, valid)
    return out


def load_grids_csv(path: Union[str, Path], rig: Optional[DualRig] = None) -> Dict[int, CombinedGrid]:
    """
    Fused grids keyed by tick. Row elevations come from rig when its
    combined row count matches, NaN otherwise.
    """
    frame = _read_long(path)
    if list(frame.columns) != GRID_COLUMNS:
        raise TableFormatError(f"{path}: not a combined grid file")
    sentinel = max(rig.upper.sentinel_mm, rig.lower.sentinel_mm) if rig else float(frame["distance_mm"].max())
    out = {}
    for tick, rows in frame.groupby("tick", sort=True):
        cells, valid = _to_matrix(rows, path)
        elevations = np.full(cells.shape[0], np.nan)
        if rig is not None:
            step = rig.upper.zone_step_deg
            top = max(rig.upper.row_elevations_deg().max(), rig.lower.row_elevations_deg().max())
            bottom = min(rig.upper.row_elevations_deg().min(), rig.lower.row_elevations_deg().min())
            if int(round((top - bottom) / step)) + 1 == cells.shape[0]:
                elevations = top - step * np.arange(cells.shape[0])
        out[int(tick)] = CombinedGrid(int(tick), cells, elevations, valid, sentinel)
    return out
