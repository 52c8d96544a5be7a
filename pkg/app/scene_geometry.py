"""
Scene geometry module for the GuideTouch toolkit.
Axis-aligned boxes over an optional ground plane, and the ray casting used by
the simulated ToF sensors.

World frame: x forward from the wearer, y to the wearer's left, z up, meters.
"""

import json
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, List, Optional, Tuple, Union

import numpy as np

from app.errors import SceneFormatError
from app.utils.logger import get_logger

logger = get_logger("SceneGeometry")

# Tolerance on |direction| and on hit points lying on a box face
UNIT_TOL = 1e-9


@dataclass(frozen=True)
class Vec3:
    """Point or direction in the world frame (meters)."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.z)):
            raise ValueError(f"Vec3 components must be finite: {self}")

    @classmethod
    def of(cls, values: Iterable[float]) -> "Vec3":
        x, y, z = (float(v) for v in values)
        return cls(x, y, z)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    def __add__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x + other.x, self.y + other.y, self.z + other.z)

    def __sub__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x - other.x, self.y - other.y, self.z - other.z)

    def scaled(self, k: float) -> "Vec3":
        return Vec3(self.x * k, self.y * k, self.z * k)

    def norm(self) -> float:
        return math.sqrt(self.x * self.x + self.y * self.y + self.z * self.z)

    def unit(self) -> "Vec3":
        n = self.norm()
        if n == 0.0:
            raise ValueError("cannot normalize a zero vector")
        return self.scaled(1.0 / n)


@dataclass(frozen=True)
class Obstacle:
    """Axis-aligned box. Zero thickness along any axis is allowed (signs, sheets)."""

    id: str
    min_corner: Vec3
    max_corner: Vec3

    def __post_init__(self):
        lo, hi = self.min_corner, self.max_corner
        if lo.x > hi.x or lo.y > hi.y or lo.z > hi.z:
            raise ValueError(f"obstacle '{self.id}': min corner exceeds max corner")

    def translated(self, offset: Vec3) -> "Obstacle":
        return replace(self, min_corner=self.min_corner + offset, max_corner=self.max_corner + offset)

    def bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.min_corner.as_array(), self.max_corner.as_array()


@dataclass(frozen=True)
class Ray:
    """Half-line from origin along a unit direction."""

    origin: Vec3
    direction: Vec3

    def __post_init__(self):
        if abs(self.direction.norm() - 1.0) > UNIT_TOL:
            raise ValueError(f"ray direction must be unit length, got |d|={self.direction.norm()!r}")

    def at(self, t: float) -> Vec3:
        return self.origin + self.direction.scaled(t)


@dataclass(frozen=True)
class Scene:
    """Obstacles plus an optional horizontal ground plane at ground_z."""

    obstacles: Tuple[Obstacle, ...] = field(default_factory=tuple)
    ground_z: Optional[float] = 0.0

    def __post_init__(self):
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        ids = [o.id for o in self.obstacles]
        if len(ids) != len(set(ids)):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise ValueError(f"duplicate obstacle ids: {dupes}")
        if self.ground_z is not None and not math.isfinite(self.ground_z):
            raise ValueError("ground_z must be finite")

    def with_obstacle(self, obstacle: Obstacle) -> "Scene":
        return Scene(self.obstacles + (obstacle,), self.ground_z)

    def translated(self, offset: Vec3) -> "Scene":
        ground = None if self.ground_z is None else self.ground_z + offset.z
        return Scene(tuple(o.translated(offset) for o in self.obstacles), ground)


def intersect_box(ray: Ray, box: Obstacle) -> Optional[float]:
    """
    Slab-method ray/box intersection.

    Args:
        ray: Ray with unit direction
        box: Axis-aligned obstacle

    Returns:
        Smallest t >= 0 with the hit point on the box boundary, or None on a miss.
        A ray starting inside the box reports its exit face.
    """
    origin = (ray.origin.x, ray.origin.y, ray.origin.z)
    direction = (ray.direction.x, ray.direction.y, ray.direction.z)
    lo = (box.min_corner.x, box.min_corner.y, box.min_corner.z)
    hi = (box.max_corner.x, box.max_corner.y, box.max_corner.z)

    t_near = -math.inf
    t_far = math.inf
    for o, d, a, b in zip(origin, direction, lo, hi):
        if d == 0.0:
            # Parallel to this slab: inside it or a miss. A zero-thickness slab
            # is entered only by crossing it, so parallel rays miss.
            if a == b or o < a or o > b:
                return None
            continue
        t1 = (a - o) / d
        t2 = (b - o) / d
        if t1 > t2:
            t1, t2 = t2, t1
        t_near = max(t_near, t1)
        t_far = min(t_far, t2)
        if t_near > t_far:
            return None

    if t_far < 0.0:
        return None
    return t_near if t_near >= 0.0 else t_far


def _ground_hit(ray: Ray, ground_z: Optional[float]) -> Optional[float]:
    if ground_z is None or ray.direction.z == 0.0:
        return None
    t = (ground_z - ray.origin.z) / ray.direction.z
    return t if t >= 0.0 else None


def cast(scene: Scene, ray: Ray, max_range: float) -> float:
    """
    Distance to the first surface along a ray, clamped to max_range.

    Returns max_range (the "no target" sentinel) when nothing is closer.
    """
    if max_range <= 0:
        raise ValueError("max_range must be positive")
    best = max_range
    for box in scene.obstacles:
        t = intersect_box(ray, box)
        if t is not None and t < best:
            best = t
    t = _ground_hit(ray, scene.ground_z)
    if t is not None and t < best:
        best = t
    return best


def cast_many(scene: Scene, origins: np.ndarray, directions: np.ndarray, max_range: float) -> np.ndarray:
    """
    Vectorized cast over a bundle of rays.

    Args:
        scene: Scene to cast against
        origins: (..., 3) ray origins
        directions: (..., 3) unit directions
        max_range: Clamp and sentinel value (meters)

    Returns:
        Array of distances with the leading shape of `directions`
    """
    if max_range <= 0:
        raise ValueError("max_range must be positive")
    directions = np.asarray(directions, dtype=float)
    origins = np.broadcast_to(np.asarray(origins, dtype=float), directions.shape)
    best = np.full(directions.shape[:-1], float(max_range))

    with np.errstate(divide="ignore", invalid="ignore"):
        for box in scene.obstacles:
            lo, hi = box.bounds()
            parallel = directions == 0.0
            t1 = (lo - origins) / directions
            t2 = (hi - origins) / directions
            t_min = np.where(parallel, -np.inf, np.minimum(t1, t2))
            t_max = np.where(parallel, np.inf, np.maximum(t1, t2))
            outside = parallel & ((lo == hi) | (origins < lo) | (origins > hi))
            t_near = t_min.max(axis=-1)
            t_far = t_max.min(axis=-1)
            hit = ~outside.any(axis=-1) & (t_near <= t_far) & (t_far >= 0.0)
            t = np.where(t_near >= 0.0, t_near, t_far)
            best = np.where(hit & (t < best), t, best)

        if scene.ground_z is not None:
            dz = directions[..., 2]
            t = (scene.ground_z - origins[..., 2]) / dz
            ok = (dz != 0.0) & (t >= 0.0)
            best = np.where(ok & (t < best), t, best)

    return best


# --- scene files -----------------------------------------------------------

def _line_of(text: str, pattern: str) -> Optional[int]:
    match = re.search(pattern, text)
    if match is None:
        return None
    return text.count("\n", 0, match.start()) + 1


def _triple(value, key: str, obstacle_id: str) -> Vec3:
    if not isinstance(value, (list, tuple)) or len(value) != 3:
        raise ValueError(f"obstacle '{obstacle_id}': '{key}' must be a list of 3 numbers")
    try:
        return Vec3.of(value)
    except (TypeError, ValueError) as e:
        raise ValueError(f"obstacle '{obstacle_id}': '{key}' {e}") from None


def parse_scene(text: str, path: Optional[str] = None) -> Scene:
    """
    Parse a JSON scene document.

    Format:
        {"ground_z": 0.0,
         "obstacles": [{"id": "bar", "min": [x, y, z], "max": [x, y, z]}]}

    `ground_z` may be null for a scene without a ground plane.

    Raises:
        SceneFormatError: with the offending line number when it can be located
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise SceneFormatError(e.msg, path=path, lineno=e.lineno) from None

    if not isinstance(doc, dict):
        raise SceneFormatError("top level must be an object", path=path, lineno=1)
    unknown = set(doc) - {"ground_z", "obstacles"}
    if unknown:
        key = sorted(unknown)[0]
        raise SceneFormatError(f"unknown key '{key}'", path=path,
                               lineno=_line_of(text, rf'"{re.escape(key)}"\s*:'))

    ground_z = doc.get("ground_z", 0.0)
    if ground_z is not None and not isinstance(ground_z, (int, float)):
        raise SceneFormatError("'ground_z' must be a number or null", path=path,
                               lineno=_line_of(text, r'"ground_z"\s*:'))

    obstacles: List[Obstacle] = []
    for index, raw in enumerate(doc.get("obstacles", [])):
        obstacle_id = raw.get("id") if isinstance(raw, dict) else None
        anchor = (rf'"id"\s*:\s*"{re.escape(obstacle_id)}"' if isinstance(obstacle_id, str)
                  else r'"obstacles"\s*:')
        try:
            if not isinstance(raw, dict):
                raise ValueError(f"obstacle #{index} must be an object")
            if not isinstance(obstacle_id, str) or not obstacle_id:
                raise ValueError(f"obstacle #{index} needs a non-empty string 'id'")
            extra = set(raw) - {"id", "min", "max"}
            if extra:
                raise ValueError(f"obstacle '{obstacle_id}': unknown key '{sorted(extra)[0]}'")
            obstacles.append(Obstacle(
                obstacle_id,
                _triple(raw.get("min"), "min", obstacle_id),
                _triple(raw.get("max"), "max", obstacle_id),
            ))
        except ValueError as e:
            raise SceneFormatError(str(e), path=path, lineno=_line_of(text, anchor)) from None

    try:
        scene = Scene(tuple(obstacles), None if ground_z is None else float(ground_z))
    except ValueError as e:
        raise SceneFormatError(str(e), path=path, lineno=_line_of(text, r'"obstacles"\s*:')) from None

    logger.debug(f"Parsed scene with {len(scene.obstacles)} obstacles")
    return scene


def load_scene(path: Union[str, Path]) -> Scene:
    """Load and validate a scene file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise SceneFormatError(f"cannot read scene file: {e.strerror}", path=str(path)) from None
    scene = parse_scene(text, path=str(path))
    logger.info(f"Loaded scene {path} ({len(scene.obstacles)} obstacles)")
    return scene


def dump_scene(scene: Scene) -> str:
    """Canonical echo of a scene; parse_scene(dump_scene(s)) == s."""
    doc = {
        "ground_z": scene.ground_z,
        "obstacles": [
            {
                "id": o.id,
                "min": [o.min_corner.x, o.min_corner.y, o.min_corner.z],
                "max": [o.max_corner.x, o.max_corner.y, o.max_corner.z],
            }
            for o in scene.obstacles
        ],
    }
    return json.dumps(doc, indent=2) + "\n"
