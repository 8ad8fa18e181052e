"""End-to-end orchestration: simulate datasets, run the detection/tracking
toolchain per stream (fused or one sensor) and evaluate the results.

The same per-frame building blocks serve the file-based CLI and in-memory
experiment runs (used by the acceptance suite), so intermediate artifacts
can be staged to disk or streamed without duplicating logic.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dataio
from .detector import Detection, DetectorParams, detect_frame, filter_detections
from .geometry import PointCloudFrame, Pose, transform_points
from .metrics import (HeatMap, MotResult, accumulate_coverage,
                      accumulate_point_count, average_precision, clear_mot,
                      gt_trajectories, mae_deviation)
from .noise import NoiseSpec, perturb_points, perturb_pose
from .preprocess import RoiSpec, fuse, preprocess
from .refine import RefineParams, Trajectory, fix_dimensions, refine, trajectories_from_records
from .scenario import (CLASS_REFLECTANCE, BUILDING_REFLECTANCE,
                       GROUND_REFLECTANCE, Scene, build_scenario, cast_scan,
                       step_actors)
from .tracker import MultiObjectTracker, TrackerParams

VARIANTS = ("b-s", "b-f", "n-s", "n-f", "t-s", "t-f", "r-s", "r-f")


def variant_is_noisy(tag: str) -> bool:
    return tag.split("-")[0] in ("n", "t", "r")


def variant_is_fused(tag: str) -> bool:
    return tag.endswith("-f")


@dataclass
class RunParams:
    rate: float = 20.0
    seed: int = 0
    roi: RoiSpec = field(default_factory=RoiSpec)
    noise: NoiseSpec | None = None
    detector: DetectorParams = field(default_factory=DetectorParams)
    tracker: TrackerParams = field(default_factory=TrackerParams)
    refine: RefineParams = field(default_factory=RefineParams)
    intensity_max: float = max(
        [GROUND_REFLECTANCE, BUILDING_REFLECTANCE, *CLASS_REFLECTANCE.values()]
    )


def params_from_config(config: dict) -> RunParams:
    rate = float(config.get("rate", 20.0))
    seed = int(config.get("seed", 0))
    variant = config.get("variant", "b-f")
    noisy = variant_is_noisy(variant)
    roi_cfg = dict(config.get("roi", {}))
    if noisy and "ground_band" not in roi_cfg:
        roi_cfg["ground_band"] = 0.25
    if variant.startswith(("t", "r")):
        roi_cfg.setdefault("x_range", (-40.0, 40.0))
        roi_cfg.setdefault("y_range", (-40.0, 40.0))
    roi_cfg["x_range"] = tuple(roi_cfg.get("x_range", (-56.0, 56.0)))
    roi_cfg["y_range"] = tuple(roi_cfg.get("y_range", (-56.0, 56.0)))
    roi_cfg["z_range"] = tuple(roi_cfg.get("z_range", (-0.05, 4.0)))
    noise = None
    if noisy:
        n = dict(config.get("noise", {}))
        noise = NoiseSpec(
            point_sigma=float(n.get("point_sigma", 0.1)),
            pos_sigma=float(n.get("pos_sigma", 0.1)),
            rot_sigma=float(n.get("rot_sigma", 5e-3)),
            seed=int(n.get("seed", seed)),
            per_frame_pose=bool(n.get("per_frame_pose", False)),
        )
    kw = {}
    if "detector" in config:
        kw["detector"] = DetectorParams(**config["detector"])
    if "tracker" in config:
        kw["tracker"] = TrackerParams(**config["tracker"])
    if "refine" in config:
        kw["refine"] = RefineParams(**config["refine"])
    return RunParams(rate=rate, seed=seed, roi=RoiSpec(**roi_cfg), noise=noise, **kw)


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:8]


# ---------------------------------------------------------------------------
# simulation to disk

def simulate_dataset(config: dict, outdir: Path) -> dict:
    """Simulate a scenario and write frames, ground truth and a manifest.

    Frames are stored in each sensor's own frame; the manifest carries the
    (possibly noise-perturbed) extrinsic pose used downstream for fusion.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    scene = build_scenario(config)
    params = params_from_config(config)
    duration = float(config.get("duration", 30.0))
    n_frames = int(round(duration * params.rate))
    variant = config.get("variant", "b-f")

    poses = {}
    for sensor in scene.sensors:
        pose = sensor.pose
        if params.noise is not None:
            pose = perturb_pose(pose, params.noise, sensor_id=sensor.id)
        poses[sensor.id] = pose

    sensors_json = []
    gt_records = []
    for sensor in scene.sensors:
        files = []
        for fi in range(n_frames):
            frame = cast_scan(scene, sensor, fi / params.rate, fi)
            if params.noise is not None:
                frame = perturb_points(frame, params.noise)
            name = dataio.frame_filename(sensor.id, fi)
            dataio.write_frame(outdir / name, frame)
            files.append(name)
        sensors_json.append(
            {"id": sensor.id, "pose": dataio.pose_to_json(poses[sensor.id]),
             "frames": files}
        )
    for fi in range(n_frames):
        gt_records.extend(step_actors(scene, fi / params.rate, fi))
    dataio.write_gt(outdir / "gt.csv", gt_records)

    manifest = {
        "variant": variant,
        "rate": params.rate,
        "n_frames": n_frames,
        "seed": params.seed,
        "intensity_max": params.intensity_max,
        "gt": "gt.csv",
        "sensors": sensors_json,
        "config_hash": config_hash(config),
    }
    dataio.write_manifest(outdir / "manifest.json", manifest)
    return manifest


# ---------------------------------------------------------------------------
# per-frame toolchain

def world_frame(frames: dict[int, PointCloudFrame], poses: dict[int, Pose],
                mode: str, sensor: int | None, rate: float) -> PointCloudFrame:
    """Fused world-frame cloud, or a single sensor's cloud in world coordinates."""
    if mode == "fused":
        return fuse([(frames[sid], poses[sid]) for sid in sorted(frames)], rate=rate)
    if sensor not in frames:
        raise KeyError(f"sensor {sensor} not present in frame set")
    return transform_points(poses[sensor], frames[sensor])


def process_frame(world: PointCloudFrame, params: RunParams) -> list[Detection]:
    """Pre-process one world-frame cloud and detect objects in it."""
    prepped = preprocess(world, params.roi, params.intensity_max, seed=params.seed)
    dets = detect_frame(prepped, params.detector)
    return filter_detections(dets, params.roi, params.detector)


@dataclass
class StreamResult:
    """Everything one stream (fused or single-sensor) produced."""

    mode: str
    sensor: int | None
    detections: list[Detection]
    raw_trajectories: list[Trajectory]
    trajectories: list[Trajectory]  # refined

    @property
    def name(self) -> str:
        return "fused" if self.mode == "fused" else f"s{self.sensor}"


class StreamRunner:
    """Sequential detector+tracker state for one stream."""

    def __init__(self, mode: str, sensor: int | None, params: RunParams):
        self.mode = mode
        self.sensor = sensor
        self.params = params
        self.tracker = MultiObjectTracker(params.tracker, params.rate)
        self.detections: list[Detection] = []

    def step_world(self, world: PointCloudFrame, frame_index: int) -> None:
        dets = process_frame(world, self.params)
        self.detections.extend(dets)
        self.tracker.step(frame_index, dets)

    def step(self, frames: dict[int, PointCloudFrame], poses: dict[int, Pose],
             frame_index: int) -> None:
        world = world_frame(frames, poses, self.mode, self.sensor, self.params.rate)
        self.step_world(world, frame_index)

    def finish(self) -> StreamResult:
        raw = trajectories_from_records(self.tracker.records, self.params.rate)
        refined = [refine(t, self.params.refine) for t in raw]
        return StreamResult(self.mode, self.sensor, self.detections, raw, refined)


def run_pipeline(frame_iter, poses: dict[int, Pose], params: RunParams,
                 mode: str = "fused", sensor: int | None = None) -> StreamResult:
    """Run the toolchain over an iterator of (frame_index, {sensor_id: frame})."""
    runner = StreamRunner(mode, sensor, params)
    for frame_index, frames in frame_iter:
        runner.step(frames, poses, frame_index)
    return runner.finish()


def manifest_frame_iter(manifest: dict, base: Path):
    rate = manifest["rate"]
    for fi in range(manifest["n_frames"]):
        frames = {}
        for s in manifest["sensors"]:
            frames[s["id"]] = dataio.read_frame(base / s["frames"][fi], s["id"], fi, fi / rate)
        yield fi, frames


def manifest_poses(manifest: dict) -> dict[int, Pose]:
    return {s["id"]: dataio.pose_from_json(s["pose"]) for s in manifest["sensors"]}


# ---------------------------------------------------------------------------
# evaluation

def evaluate_run(result: StreamResult, gt_records, params: RunParams,
                 l_t: float = 10.0, n_t: int = 50,
                 distance_gate=None, iou_thresholds=None) -> dict:
    """AP, CLEAR-MOT and frame-weighted deviations for one stream."""
    track_frames: dict[int, list] = {}
    for t in result.trajectories:
        for k in range(t.n_frames):
            track_frames.setdefault(int(t.frame_indices[k]), []).append(
                (t.track_id, t.cls, t.pos[k])
            )
    mot = clear_mot(track_frames, gt_records, distance_gate)
    ap = average_precision(result.detections, gt_records, iou_thresholds)
    dev = mae_deviation(result.trajectories, gt_trajectories(gt_records), l_t, n_t)
    return {
        "stream": result.name,
        "ap": {cls.value: v for cls, v in ap.items()},
        "mota": mot.mota,
        "motp": mot.motp,
        "motp_meters": mot.motp_meters,
        "counts": {"fp": mot.fp, "fn": mot.fn, "idsw": mot.idsw, "gt": mot.n_gt},
        "deviation": dev,
        "selection": {"l_t": l_t, "n_t": n_t},
    }


# ---------------------------------------------------------------------------
# in-memory experiment (simulate + all streams + heat maps in one pass)

@dataclass
class ExperimentResult:
    gt_records: list
    streams: dict[str, StreamResult]
    point_heatmaps: dict[str, HeatMap]
    coverage_heatmaps: dict[str, tuple[HeatMap, HeatMap, HeatMap]]


def run_experiment(config: dict, modes=None, heatmap_streams=None) -> ExperimentResult:
    """Simulate a scenario and run fused plus per-sensor streams in one pass.

    Frames are discarded after processing, so memory stays flat regardless
    of duration.  heatmap_streams selects which streams also accumulate
    point-count and coverage heat maps (default: all requested modes).
    """
    scene = build_scenario(config)
    params = params_from_config(config)
    duration = float(config.get("duration", 30.0))
    n_frames = int(round(duration * params.rate))

    if modes is None:
        modes = ["fused"] + [s.id for s in scene.sensors]
    runners = {}
    for m in modes:
        if m == "fused":
            runners["fused"] = StreamRunner("fused", None, params)
        else:
            runners[f"s{m}"] = StreamRunner("single", m, params)
    if heatmap_streams is None:
        heatmap_streams = list(runners)
    hm_low, hm_high = params.roi.x_range
    point_hms = {name: HeatMap(hm_low, hm_high) for name in heatmap_streams}
    cov_hms = {
        name: (HeatMap(hm_low, hm_high), HeatMap(hm_low, hm_high), HeatMap(hm_low, hm_high))
        for name in heatmap_streams
    }

    poses = {}
    for sensor in scene.sensors:
        pose = sensor.pose
        if params.noise is not None:
            pose = perturb_pose(pose, params.noise, sensor_id=sensor.id)
        poses[sensor.id] = pose

    gt_records = []
    for fi in range(n_frames):
        t = fi / params.rate
        frames = {}
        for sensor in scene.sensors:
            frame = cast_scan(scene, sensor, t, fi)
            if params.noise is not None:
                frame = perturb_points(frame, params.noise)
            frames[sensor.id] = frame
        gt_now = step_actors(scene, t, fi)
        gt_records.extend(gt_now)
        worlds = {}
        for name, runner in runners.items():
            world = world_frame(frames, poses, runner.mode, runner.sensor, params.rate)
            worlds[name] = world
            runner.step_world(world, fi)
        for name in heatmap_streams:
            accumulate_point_count(point_hms[name], gt_now, worlds[name])
            accumulate_coverage(cov_hms[name], gt_now, worlds[name])

    return ExperimentResult(
        gt_records=gt_records,
        streams={name: r.finish() for name, r in runners.items()},
        point_heatmaps=point_hms,
        coverage_heatmaps=cov_hms,
    )
