"""Synthetic driving scenes, ray-cast LiDAR and per-object point extraction.

Boxes are axis-aligned. A scene holds the CAVs (index 0 is the ego vehicle),
the objects inside the ego's region of interest and the RSU position. Point
clouds are produced by casting a fixed fan of rays from each roof-mounted
sensor and keeping the nearest hit against object boxes, other CAV bodies and
the ground plane.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CLASSES = ("car", "truck", "pedestrian", "cyclist")

# nominal (l_x, l_y, l_z) per class, meters
CLASS_DIMENSIONS = {
    "car": (4.5, 1.9, 1.6),
    "truck": (8.0, 2.5, 3.0),
    "pedestrian": (0.6, 0.6, 1.8),
    "cyclist": (1.8, 0.7, 1.7),
}


@dataclass(frozen=True)
class BoundingBox:
    center: tuple[float, float, float]
    lengths: tuple[float, float, float]

    def __post_init__(self):
        center = tuple(float(v) for v in self.center)
        lengths = tuple(float(v) for v in self.lengths)
        if len(center) != 3 or len(lengths) != 3:
            raise ValueError("box center and lengths must have 3 components")
        if not all(math.isfinite(v) for v in center + lengths):
            raise ValueError("box coordinates must be finite")
        if min(lengths) <= 0:
            raise ValueError(f"box lengths must be positive, got {lengths}")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "lengths", lengths)

    @property
    def lower(self) -> np.ndarray:
        return np.asarray(self.center) - np.asarray(self.lengths) / 2

    @property
    def upper(self) -> np.ndarray:
        return np.asarray(self.center) + np.asarray(self.lengths) / 2

    def intersects(self, other: "BoundingBox") -> bool:
        return bool(np.all(self.lower <= other.upper) and np.all(other.lower <= self.upper))


@dataclass(frozen=True)
class ObjectSpec:
    id: int
    class_label: str
    box: BoundingBox

    def __post_init__(self):
        if self.class_label not in CLASSES:
            raise ValueError(f"unknown object class {self.class_label!r}")


@dataclass(frozen=True)
class CavSpec:
    id: int
    sensor_origin: tuple[float, float, float]
    body_box: BoundingBox

    def __post_init__(self):
        origin = tuple(float(v) for v in self.sensor_origin)
        object.__setattr__(self, "sensor_origin", origin)
        if origin[2] <= self.body_box.upper[2]:
            raise ValueError(f"CAV {self.id}: sensor must sit above the body box")


@dataclass(frozen=True)
class LidarConfig:
    """Uniform azimuth grid crossed with a fixed list of elevation angles."""

    azimuth_steps: int = 1200
    elevation_angles: tuple[float, ...] = tuple(
        np.deg2rad(np.linspace(-25.0, 3.0, 32)).tolist())
    max_range: float = 100.0

    def __post_init__(self):
        if self.azimuth_steps < 4:
            raise ValueError("azimuth_steps must be at least 4")
        if self.max_range <= 0:
            raise ValueError("max_range must be positive")
        if len(self.elevation_angles) == 0:
            raise ValueError("at least one elevation angle is required")
        object.__setattr__(self, "elevation_angles",
                           tuple(float(a) for a in self.elevation_angles))

    def directions(self) -> np.ndarray:
        az = 2 * np.pi * np.arange(self.azimuth_steps) / self.azimuth_steps
        el = np.asarray(self.elevation_angles)
        az, el = np.meshgrid(az, el, indexing="ij")
        d = np.stack([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)], axis=-1)
        return d.reshape(-1, 3)


@dataclass(frozen=True)
class Scenario:
    cavs: tuple[CavSpec, ...]
    objects: tuple[ObjectSpec, ...]
    rsu_position: tuple[float, float, float]
    roi: BoundingBox
    ground_z: float = 0.0
    lidar: LidarConfig = field(default_factory=LidarConfig)

    def __post_init__(self):
        object.__setattr__(self, "cavs", tuple(self.cavs))
        object.__setattr__(self, "objects", tuple(self.objects))
        object.__setattr__(self, "rsu_position", tuple(float(v) for v in self.rsu_position))
        if not self.cavs:
            raise ValueError("scenario needs at least one CAV")
        if not self.objects:
            raise ValueError("scenario needs at least one object")
        if [c.id for c in self.cavs] != list(range(len(self.cavs))):
            raise ValueError("CAV ids must be 0..N-1 in order")
        if [o.id for o in self.objects] != list(range(len(self.objects))):
            raise ValueError("object ids must be 0..M-1 in order")
        for obj in self.objects:
            if not obj.box.intersects(self.roi):
                raise ValueError(f"object {obj.id} lies outside the RoI")

    @property
    def n_cavs(self) -> int:
        return len(self.cavs)

    @property
    def n_objects(self) -> int:
        return len(self.objects)


def surface_area(box: BoundingBox) -> float:
    lx, ly, lz = box.lengths
    return 2.0 * (lx * ly + ly * lz + lx * lz)


def _ray_box_hits(origin, directions, lower, upper):
    """Entry distance of every ray into every box (inf on miss).

    Returns an array of shape (n_rays, n_boxes).
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / directions[:, None, :]
        t1 = (lower[None, :, :] - origin) * inv
        t2 = (upper[None, :, :] - origin) * inv
    # rays parallel to a slab: inside -> unbounded, outside -> empty
    parallel = directions[:, None, :] == 0
    inside = (origin >= lower[None]) & (origin <= upper[None])
    tmin = np.where(parallel, np.where(inside, -np.inf, np.inf), np.minimum(t1, t2))
    tmax = np.where(parallel, np.where(inside, np.inf, -np.inf), np.maximum(t1, t2))
    t_near = tmin.max(axis=2)
    t_far = tmax.min(axis=2)
    hit = (t_near <= t_far) & (t_near > 0)
    return np.where(hit, t_near, np.inf), tmin.argmax(axis=2)


def simulate_lidar(scenario: Scenario, cav: CavSpec, cfg: LidarConfig | None = None) -> np.ndarray:
    """Nearest-hit point cloud of one CAV's roof sensor, shape (P, 3)."""
    if cav not in scenario.cavs:
        raise ValueError("cav is not part of the scenario")
    cfg = cfg or scenario.lidar
    origin = np.asarray(cav.sensor_origin)
    dirs = cfg.directions()

    boxes = [o.box for o in scenario.objects] + [c.body_box for c in scenario.cavs if c.id != cav.id]
    lower = np.array([b.lower for b in boxes])
    upper = np.array([b.upper for b in boxes])
    t_box, entry_axis = _ray_box_hits(origin, dirs, lower, upper)
    which = t_box.argmin(axis=1)
    rows = np.arange(len(dirs))
    t_best = t_box[rows, which]
    axis = entry_axis[rows, which]

    down = dirs[:, 2] < 0
    t_ground = np.full(len(dirs), np.inf)
    t_ground[down] = (scenario.ground_z - origin[2]) / dirs[down, 2]
    on_ground = t_ground < t_best
    t_best = np.where(on_ground, t_ground, t_best)

    keep = t_best <= cfg.max_range
    points = np.zeros_like(dirs)
    points[keep] = origin + t_best[keep, None] * dirs[keep]
    # snap each hit exactly onto the face it entered through
    box_hit = keep & ~on_ground
    r, a, b = rows[box_hit], axis[box_hit], which[box_hit]
    face = np.where(dirs[r, a] > 0, lower[b, a], upper[b, a])
    points[r, a] = face
    points[keep & on_ground, 2] = scenario.ground_z
    return points[keep]


def _inside(points: np.ndarray, box: BoundingBox) -> np.ndarray:
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    return np.all((points >= box.lower) & (points <= box.upper), axis=1)


def extract_object_points(cloud: np.ndarray, box: BoundingBox) -> np.ndarray:
    """Points of ``cloud`` inside ``box``, faces included."""
    cloud = np.asarray(cloud, dtype=float).reshape(-1, 3)
    return cloud[_inside(cloud, box)]


def extract_all_objects(cloud: np.ndarray, objects) -> list[np.ndarray]:
    """Per-object point sets; a point on a shared face goes to the lowest object index."""
    cloud = np.asarray(cloud, dtype=float).reshape(-1, 3)
    free = np.ones(len(cloud), dtype=bool)
    out = []
    for obj in objects:
        mask = free & _inside(cloud, obj.box)
        out.append(cloud[mask])
        free &= ~mask
    return out


def make_cav(cav_id: int, x: float, y: float, ground_z: float = 0.0,
             lengths=(4.5, 1.9, 1.6), mount_height: float = 0.3) -> CavSpec:
    lx, ly, lz = lengths
    body = BoundingBox((x, y, ground_z + lz / 2), lengths)
    return CavSpec(cav_id, (x, y, ground_z + lz + mount_height), body)


def make_object(obj_id: int, class_label: str, x: float, y: float, ground_z: float = 0.0,
                lengths=None) -> ObjectSpec:
    if class_label not in CLASS_DIMENSIONS:
        raise ValueError(f"unknown object class {class_label!r}")
    lengths = tuple(lengths) if lengths is not None else CLASS_DIMENSIONS[class_label]
    return ObjectSpec(obj_id, class_label, BoundingBox((x, y, ground_z + lengths[2] / 2), lengths))


# ---------------------------------------------------------------------------
# JSON scenario files

def _box_json(box: BoundingBox) -> dict:
    return {"center": list(box.center), "lengths": list(box.lengths)}


def scenario_to_dict(scenario: Scenario, params: dict | None = None) -> dict:
    doc = {
        "cavs": [{"id": c.id, "sensor_origin": list(c.sensor_origin),
                  "body_center": list(c.body_box.center),
                  "body_lengths": list(c.body_box.lengths)} for c in scenario.cavs],
        "objects": [{"id": o.id, "class": o.class_label, "center": list(o.box.center),
                     "lengths": list(o.box.lengths)} for o in scenario.objects],
        "rsu_position": list(scenario.rsu_position),
        "roi": _box_json(scenario.roi),
        "ground_z": scenario.ground_z,
        "lidar": {"azimuth_steps": scenario.lidar.azimuth_steps,
                  "elevation_angles": list(scenario.lidar.elevation_angles),
                  "max_range": scenario.lidar.max_range},
    }
    if params:
        doc["params"] = dict(params)
    return doc


def scenario_from_dict(doc: dict) -> Scenario:
    try:
        cavs = [CavSpec(int(c["id"]), tuple(c["sensor_origin"]),
                        BoundingBox(tuple(c["body_center"]), tuple(c["body_lengths"])))
                for c in doc["cavs"]]
        objects = [ObjectSpec(int(o["id"]), o["class"],
                              BoundingBox(tuple(o["center"]), tuple(o["lengths"])))
                   for o in doc["objects"]]
        roi = BoundingBox(tuple(doc["roi"]["center"]), tuple(doc["roi"]["lengths"]))
        lidar = LidarConfig(**doc["lidar"]) if "lidar" in doc else LidarConfig()
        return Scenario(cavs, objects, tuple(doc["rsu_position"]), roi,
                        float(doc.get("ground_z", 0.0)), lidar)
    except KeyError as exc:
        raise ValueError(f"scenario document is missing field {exc.args[0]!r}") from None


def load_scenario(path) -> tuple[Scenario, dict]:
    """Read a scenario file; returns the scenario and its optional ``params`` block."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"scenario file not found: {path}")
    doc = json.loads(path.read_text())
    return scenario_from_dict(doc), dict(doc.get("params", {}))


def save_scenario(scenario: Scenario, path, params: dict | None = None) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(scenario, params), indent=2))


# ---------------------------------------------------------------------------
# random scenes for training data

def _jitter_dims(rng: np.random.Generator, class_label: str) -> tuple[float, float, float]:
    base = np.asarray(CLASS_DIMENSIONS[class_label])
    return tuple((base * rng.uniform(0.85, 1.15, size=3)).tolist())


def random_scenario(rng: np.random.Generator, n_cavs: int | None = None,
                    n_objects: int | None = None, road_length: float = 50.0,
                    lidar: LidarConfig | None = None) -> Scenario:
    """Random road scene: CAVs and objects scattered over three lanes and a sidewalk."""
    n_cavs = int(n_cavs if n_cavs is not None else rng.integers(2, 6))
    n_objects = int(n_objects if n_objects is not None else rng.integers(3, 9))
    lanes = np.array([0.0, 3.5, 7.0])
    sidewalk = (-3.5, 10.5)
    placed: list[BoundingBox] = []

    def free(box: BoundingBox, gap: float = 0.5) -> bool:
        grown = BoundingBox(box.center, tuple(v + 2 * gap for v in box.lengths))
        return not any(grown.intersects(b) for b in placed)

    cavs = []
    for n in range(n_cavs):
        while True:
            x = rng.uniform(0.0, road_length) if n else rng.uniform(0.0, 0.3 * road_length)
            cav = make_cav(n, x, float(rng.choice(lanes)) + rng.uniform(-0.3, 0.3))
            if free(cav.body_box):
                break
        cavs.append(cav)
        placed.append(cav.body_box)

    objects = []
    for m in range(n_objects):
        label = str(rng.choice(CLASSES))
        while True:
            x = rng.uniform(0.0, road_length)
            if label in ("pedestrian", "cyclist") and rng.random() < 0.6:
                y = float(rng.choice(sidewalk)) + rng.uniform(-0.8, 0.8)
            else:
                y = float(rng.choice(lanes)) + rng.uniform(-0.4, 0.4)
            obj = make_object(m, label, x, y, lengths=_jitter_dims(rng, label))
            if free(obj.box):
                break
        objects.append(obj)
        placed.append(obj.box)

    roi = BoundingBox((road_length / 2, 3.5, 2.5), (road_length + 20.0, 24.0, 10.0))
    rsu = (road_length / 2, -8.0, 6.0)
    return Scenario(tuple(cavs), tuple(objects), rsu, roi, 0.0, lidar or LidarConfig())


# the fixed evaluation scene: ego plus three helpers, two trucks, two cars,
# one pedestrian and one cyclist on a 50 m road segment
_DEFAULT_CAVS = ((4.0, 0.0), (28.0, 3.5), (10.0, 7.0), (46.0, 7.0))
_DEFAULT_OBJECTS = (("truck", 16.0, 0.0), ("car", 36.0, 7.0), ("cyclist", 24.0, -3.5),
                    ("pedestrian", 40.0, 10.5), ("car", 30.0, 0.0), ("truck", 40.0, 3.5))


def make_default_scenario(seed: int = 0, jitter: float = 0.5,
                          lidar: LidarConfig | None = None) -> Scenario:
    """Default evaluation scene; seeds other than 0 jitter positions along x by up to ``jitter`` m."""
    rng = np.random.default_rng(seed)
    scale = jitter if seed else 0.0
    cavs = [make_cav(n, x + scale * rng.uniform(-1, 1), y) for n, (x, y) in enumerate(_DEFAULT_CAVS)]
    objects = [make_object(m, label, x + scale * rng.uniform(-1, 1), y)
               for m, (label, x, y) in enumerate(_DEFAULT_OBJECTS)]
    roi = BoundingBox((27.0, 3.5, 2.5), (50.0, 24.0, 10.0))
    return Scenario(tuple(cavs), tuple(objects), (25.0, -8.0, 6.0), roi, 0.0, lidar or LidarConfig())
