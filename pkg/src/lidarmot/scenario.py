"""Scenario layouts, actor motion along waypoint paths and per-sensor LiDAR scans.

Five layouts are provided: A (X-intersection, 8 elevated sensors), B (same
with one relocated sensor position), C (straight road, zigzag sensors),
D (curved road, zigzag sensors) and E (intersection with 4 low horizontal
sensors, as on a test track).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import raycast
from .geometry import ObjectClass, Pose, PointCloudFrame, OrientedBox, ValidationError

# class-typical box dimensions (l, w, h) in meters, configurable per actor
DEFAULT_DIMS: dict[ObjectClass, tuple[float, float, float]] = {
    ObjectClass.CAR: (4.5, 1.8, 1.6),
    ObjectClass.TRUCK: (8.0, 2.5, 3.2),
    ObjectClass.PEDESTRIAN: (0.5, 0.5, 1.8),
    ObjectClass.BICYCLE: (1.8, 0.6, 1.7),
    ObjectClass.MOTORCYCLE: (2.2, 0.8, 1.4),
}

# surface reflectance constants; all strictly positive so the
# zero-intensity filter only removes genuinely empty returns
GROUND_REFLECTANCE = 0.2
BUILDING_REFLECTANCE = 0.4
CLASS_REFLECTANCE: dict[ObjectClass, float] = {
    ObjectClass.CAR: 0.8,
    ObjectClass.TRUCK: 0.7,
    ObjectClass.PEDESTRIAN: 0.5,
    ObjectClass.BICYCLE: 0.55,
    ObjectClass.MOTORCYCLE: 0.6,
}


@dataclass
class SensorSpec:
    """One LiDAR: spinning multi-layer scan pattern plus a world pose."""

    id: int
    pose: Pose
    layers: int = 64
    vertical_fov: float = math.radians(45.0)  # full symmetric span
    azimuth_steps: int = 1024
    max_range: float = 120.0
    rate: float = 20.0

    def __post_init__(self) -> None:
        if self.layers < 1 or self.max_range <= 0 or self.rate <= 0:
            raise ValidationError("invalid sensor spec")

    def ray_directions(self) -> np.ndarray:
        """Unit ray directions in the sensor frame, (layers*azimuth_steps, 3)."""
        el = np.linspace(-0.5 * self.vertical_fov, 0.5 * self.vertical_fov, self.layers)
        az = np.arange(self.azimuth_steps) * (2.0 * np.pi / self.azimuth_steps)
        ce, se = np.cos(el), np.sin(el)
        ca, sa = np.cos(az), np.sin(az)
        dirs = np.empty((self.layers, self.azimuth_steps, 3))
        dirs[:, :, 0] = ce[:, None] * ca[None, :]
        dirs[:, :, 1] = ce[:, None] * sa[None, :]
        dirs[:, :, 2] = se[:, None]
        return dirs.reshape(-1, 3)


@dataclass
class Actor:
    """A road user moving along a waypoint polyline at per-segment speeds."""

    id: int
    cls: ObjectClass
    dims: tuple[float, float, float]  # (l, w, h)
    waypoints: np.ndarray  # (K, 2) ground-plane positions
    speeds: np.ndarray  # (K-1,) m/s per segment
    spawn_time: float = 0.0

    def __post_init__(self) -> None:
        self.waypoints = np.asarray(self.waypoints, dtype=np.float64).reshape(-1, 2)
        self.speeds = np.asarray(self.speeds, dtype=np.float64).reshape(-1)
        if self.waypoints.shape[0] < 2:
            raise ValidationError(f"actor {self.id}: path needs >= 2 waypoints")
        if self.speeds.shape[0] != self.waypoints.shape[0] - 1:
            raise ValidationError(f"actor {self.id}: one speed per segment required")
        if (self.speeds < 0).any() or min(self.dims) <= 0:
            raise ValidationError(f"actor {self.id}: negative speed or dims")
        seg = np.diff(self.waypoints, axis=0)
        self._seg_len = np.hypot(seg[:, 0], seg[:, 1])
        with np.errstate(divide="ignore", invalid="ignore"):
            dt = np.where(self.speeds > 0, self._seg_len / self.speeds, np.inf)
        self._seg_t0 = np.concatenate([[0.0], np.cumsum(dt)])
        self._seg_dir = seg / np.maximum(self._seg_len[:, None], 1e-12)

    @property
    def total_time(self) -> float:
        return float(self._seg_t0[-1])

    def state_at(self, t: float):
        """(position(3), yaw, velocity(3), acceleration(3)) or None if inactive."""
        tau = t - self.spawn_time
        if tau < 0 or tau > self.total_time:
            return None
        k = int(np.searchsorted(self._seg_t0, tau, side="right") - 1)
        k = min(k, len(self.speeds) - 1)
        d = self._seg_dir[k]
        s = self.speeds[k] * (tau - self._seg_t0[k])
        xy = self.waypoints[k] + d * s
        pos = np.array([xy[0], xy[1], 0.5 * self.dims[2]])
        yaw = math.atan2(d[1], d[0])
        vel = np.array([d[0], d[1], 0.0]) * self.speeds[k]
        # piecewise-constant speed: acceleration is zero inside segments
        return pos, yaw, vel, np.zeros(3)


@dataclass
class Scene:
    ground_extent: float  # ground plane covers |x|,|y| <= extent
    buildings: np.ndarray  # (B, 6) AABB min/max corners
    sensors: list[SensorSpec]
    actors: list[Actor]
    layout: str = "custom"

    def __post_init__(self) -> None:
        self.buildings = np.asarray(self.buildings, dtype=np.float64).reshape(-1, 6)
        ids = [s.id for s in self.sensors]
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate sensor ids")
        aids = [a.id for a in self.actors]
        if len(set(aids)) != len(aids):
            raise ValidationError("duplicate actor ids")


@dataclass
class GroundTruthRecord:
    frame_index: int
    actor_id: int
    cls: ObjectClass
    box: OrientedBox
    velocity: np.ndarray
    acceleration: np.ndarray


def step_actors(scene: Scene, t: float, frame_index: int = 0) -> list[GroundTruthRecord]:
    """Place every active actor at time t and report its ground-truth state."""
    records = []
    for actor in scene.actors:
        state = actor.state_at(t)
        if state is None:
            continue
        pos, yaw, vel, acc = state
        l, w, h = actor.dims
        records.append(
            GroundTruthRecord(
                frame_index=frame_index,
                actor_id=actor.id,
                cls=actor.cls,
                box=OrientedBox(pos, l, w, h, yaw),
                velocity=vel,
                acceleration=acc,
            )
        )
    return records


def cast_scan(scene: Scene, sensor: SensorSpec, t: float,
              frame_index: int | None = None) -> PointCloudFrame:
    """One full scan at time t; points are expressed in the SENSOR frame.

    The scan is rendered atomically (no intra-scan motion).  Determinism
    follows from the fixed ray ordering; noise is injected downstream.
    """
    if frame_index is None:
        frame_index = int(round(t * sensor.rate))
    dirs_local = sensor.ray_directions()
    dirs_world = dirs_local @ sensor.pose.rotation.T

    records = step_actors(scene, t)
    obbs = np.empty((len(records), 7))
    refl = np.empty(len(records))
    for i, r in enumerate(records):
        obbs[i, :3] = r.box.center
        obbs[i, 3:6] = (r.box.l, r.box.w, r.box.h)
        obbs[i, 6] = r.box.yaw
        refl[i] = CLASS_REFLECTANCE[r.cls]

    t_hit, r_hit = raycast.cast_rays(
        sensor.pose.translation, dirs_world, sensor.max_range,
        scene.ground_extent, scene.buildings, obbs,
        GROUND_REFLECTANCE,
        np.full(len(scene.buildings), BUILDING_REFLECTANCE),
        refl,
    )
    hit = np.isfinite(t_hit)
    pts = np.empty((int(hit.sum()), 4))
    pts[:, :3] = dirs_local[hit] * t_hit[hit, None]
    pts[:, 3] = r_hit[hit]
    return PointCloudFrame(sensor.id, frame_index, t, pts)


def export_gt(scene: Scene, frame_range: range, rate: float) -> list[GroundTruthRecord]:
    """Ground truth for a frame range at the configured rate."""
    out: list[GroundTruthRecord] = []
    for fi in frame_range:
        out.extend(step_actors(scene, fi / rate, fi))
    return out


# ---------------------------------------------------------------------------
# layouts

def _aimed_pose(position, target_xy, tilt: float) -> Pose:
    """Pose at `position` yawed toward target and pitched down by `tilt`."""
    px, py, pz = position
    yaw = math.atan2(target_xy[1] - py, target_xy[0] - px)
    return Pose.from_euler(yaw=yaw, pitch=tilt, translation=(px, py, pz))


def _elevated_pair(sensor_id: int, position_xy, height: float,
                   tilts=(0.1, 0.3), **kw) -> list[SensorSpec]:
    out = []
    for k, tilt in enumerate(tilts):
        pose = _aimed_pose((position_xy[0], position_xy[1], height), (0.0, 0.0), tilt)
        out.append(SensorSpec(id=sensor_id + k, pose=pose, **kw))
    return out


def _corner_buildings() -> np.ndarray:
    b = []
    for sx in (-1, 1):
        for sy in (-1, 1):
            b.append([sx * 48 - 14, sy * 48 - 14, 0.0, sx * 48 + 14, sy * 48 + 14, 12.0])
    return np.array(b)


def _roadside_buildings() -> np.ndarray:
    # one-sided row along a straight road
    return np.array([[x, 16.0, 0.0, x + 18.0, 28.0, 10.0] for x in (-48.0, -24.0, 0.0, 24.0)])


_CORNERS_A = [(-24.0, -24.0), (-24.0, 24.0), (24.0, -24.0), (24.0, 24.0)]
_CORNERS_B = [(-24.0, -24.0), (-24.0, 24.0), (24.0, -24.0), (32.0, 8.0)]
_ZIGZAG = [(-36.0, -10.0), (-12.0, 10.0), (12.0, -10.0), (36.0, 10.0)]


def build_sensors(layout: str, **sensor_kw) -> list[SensorSpec]:
    layout = layout.upper()
    if layout in ("A", "B"):
        corners = _CORNERS_A if layout == "A" else _CORNERS_B
        sensors = []
        for i, c in enumerate(corners):
            sensors.extend(_elevated_pair(2 * i + 1, c, height=6.0, **sensor_kw))
        return sensors
    if layout in ("C", "D"):
        positions = _ZIGZAG if layout == "C" else [
            (x, y + 0.004 * x * x) for x, y in _ZIGZAG  # gentle curve offset
        ]
        sensors = []
        for i, c in enumerate(positions):
            sensors.extend(_elevated_pair(2 * i + 1, c, height=6.0, **sensor_kw))
        return sensors
    if layout == "E":
        positions = [(28.0, 0.0), (-28.0, 0.0), (0.0, 28.0), (0.0, -28.0)]
        return [
            SensorSpec(id=i + 1, pose=_aimed_pose((p[0], p[1], 2.0), (0.0, 0.0), 0.0),
                       **sensor_kw)
            for i, p in enumerate(positions)
        ]
    raise ValidationError(f"unknown layout {layout!r}")


def _buildings_for(layout: str) -> np.ndarray:
    layout = layout.upper()
    if layout in ("A", "B"):
        return _corner_buildings()
    if layout in ("C", "D"):
        return _roadside_buildings()
    return np.empty((0, 6))


_CLASS_CYCLE = [
    ObjectClass.CAR, ObjectClass.PEDESTRIAN, ObjectClass.TRUCK,
    ObjectClass.BICYCLE, ObjectClass.CAR, ObjectClass.MOTORCYCLE,
]
_SPEED_RANGE = {
    ObjectClass.CAR: (8.0, 12.0),
    ObjectClass.TRUCK: (6.0, 9.0),
    ObjectClass.MOTORCYCLE: (8.0, 12.0),
    ObjectClass.BICYCLE: (3.0, 5.0),
    ObjectClass.PEDESTRIAN: (1.1, 1.7),
}

# corridor centerlines are separated so that neighboring actors can never
# merge into one detector cluster (edge gap > cluster radius); offsets near
# the origin keep traffic flowing through the central heat-map cell
_VEHICLE_H = [(1.75, 1), (-1.75, -1), (7.0, -1), (-7.0, 1), (10.5, 1), (-10.5, -1)]
_VEHICLE_V = [(2.8, 1), (-2.8, -1), (8.0, -1), (-8.0, 1)]
_BICYCLE_H = [(4.5, 1), (-4.5, -1)]
_BICYCLE_V = [(5.2, 1), (-5.2, -1)]
_PED_CROSSINGS = [0.5, -0.9, 13.0, -14.2]


def _corridor_path(axis: str, offset: float, sign: int, half_len: float) -> np.ndarray:
    if axis == "h":
        return np.array([[-sign * half_len, offset], [sign * half_len, offset]])
    return np.array([[offset, -sign * half_len], [offset, sign * half_len]])


def generate_actors(layout: str, n: int, duration: float, seed: int,
                    classes=None) -> list[Actor]:
    """Procedural traffic on non-overlapping corridors.

    Every corridor carries one fixed speed, so actors sharing a corridor
    never occupy the same spot.  Vehicle and crossing corridors near the
    origin route traffic through the central heat-map cell.  Spawns are
    staggered over the duration.
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(71,)))
    layout = layout.upper()
    cross = layout in ("A", "B", "E")
    half_len = 48.0
    vehicle_corr = [("h", off, sign) for off, sign in _VEHICLE_H]
    bike_corr = [("h", off, sign) for off, sign in _BICYCLE_H]
    if cross:
        vehicle_corr += [("v", off, sign) for off, sign in _VEHICLE_V]
        bike_corr += [("v", off, sign) for off, sign in _BICYCLE_V]
    # pedestrians cross the road(s) on foot regardless of layout
    ped_corr = [("v", off, 1 if off > 0 else -1) for off in _PED_CROSSINGS]

    corridor_speed: dict[tuple, float] = {}
    next_idx = {"vehicle": 0, "bike": 0, "ped": 0}
    pools = {"vehicle": vehicle_corr, "bike": bike_corr, "ped": ped_corr}

    def take(kind: str, cls: ObjectClass):
        pool = pools[kind]
        corr = pool[next_idx[kind] % len(pool)]
        next_idx[kind] += 1
        if corr not in corridor_speed:
            corridor_speed[corr] = rng.uniform(*_SPEED_RANGE[cls])
        return corr, corridor_speed[corr]

    actors = []
    cycle = list(classes) if classes else _CLASS_CYCLE
    for i in range(n):
        cls = cycle[i % len(cycle)]
        if cls is ObjectClass.PEDESTRIAN:
            corr, speed = take("ped", cls)
            axis, off, sign = corr
            path = _corridor_path(axis, off, sign, 14.0)
        elif cls is ObjectClass.BICYCLE:
            corr, speed = take("bike", cls)
            axis, off, sign = corr
            path = _corridor_path(axis, off, sign, half_len)
        else:
            corr, speed = take("vehicle", cls)
            axis, off, sign = corr
            path = _corridor_path(axis, off, sign, half_len)
        travel = np.hypot(*(path[-1] - path[0])) / speed
        latest = max(0.0, duration - travel)
        spawn = (i / max(n, 1)) * latest if latest > 0 else 0.0
        actors.append(
            Actor(
                id=i + 1,
                cls=cls,
                dims=DEFAULT_DIMS[cls],
                waypoints=path,
                speeds=np.full(len(path) - 1, speed),
                spawn_time=float(spawn),
            )
        )
    return actors


def build_scenario(config: dict) -> Scene:
    """Scene from a scenario-config mapping (see the README for the schema)."""
    layout = str(config.get("layout", "A")).upper()
    sensor_kw = dict(config.get("sensor", {}))
    sensors = build_sensors(layout, **sensor_kw)
    duration = float(config.get("duration", 30.0))
    seed = int(config.get("seed", 0))
    if "actors" in config:
        actors = []
        for a in config["actors"]:
            cls = ObjectClass(a["class"])
            actors.append(
                Actor(
                    id=int(a["id"]),
                    cls=cls,
                    dims=tuple(a.get("dims", DEFAULT_DIMS[cls])),
                    waypoints=np.asarray(a["waypoints"], dtype=float),
                    speeds=np.asarray(a["speeds"], dtype=float),
                    spawn_time=float(a.get("spawn_time", 0.0)),
                )
            )
    else:
        actors = generate_actors(layout, int(config.get("n_actors", 12)), duration, seed)
    return Scene(
        ground_extent=float(config.get("ground_extent", 80.0)),
        buildings=config.get("buildings", _buildings_for(layout)),
        sensors=sensors,
        actors=actors,
        layout=layout,
    )
