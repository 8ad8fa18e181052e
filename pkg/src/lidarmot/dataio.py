"""File formats: frame CSVs, ground-truth CSV, detections/tracks CSVs,
dataset manifest JSON and heat-map grids.

All floats are written with fixed precision so identical runs produce
byte-identical artifacts.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .detector import Detection
from .geometry import ObjectClass, OrientedBox, PointCloudFrame, Pose
from .refine import Trajectory
from .scenario import GroundTruthRecord

_F = "%.6f"


def frame_filename(sensor_id: int, frame_index: int) -> str:
    return f"s{sensor_id}_f{frame_index:06d}.csv"


def write_frame(path: Path, frame: PointCloudFrame) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("x,y,z,intensity\n")
        np.savetxt(fh, frame.points, fmt=_F, delimiter=",")


def read_frame(path: Path, sensor_id: int, frame_index: int, timestamp: float) -> PointCloudFrame:
    with open(path) as fh:
        fh.readline()  # header
        body = fh.read()
    if body.strip():
        pts = np.loadtxt(body.splitlines(), delimiter=",", ndmin=2)
    else:
        pts = np.empty((0, 4))
    return PointCloudFrame(sensor_id, frame_index, timestamp, pts)


GT_HEADER = "frame,actor_id,class,cx,cy,cz,l,w,h,yaw,vx,vy,vz,ax,ay,az"


def write_gt(path: Path, records: list[GroundTruthRecord]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(GT_HEADER + "\n")
        w = csv.writer(fh)
        for r in records:
            w.writerow(
                [r.frame_index, r.actor_id, r.cls.value]
                + [_F % v for v in r.box.center]
                + [_F % r.box.l, _F % r.box.w, _F % r.box.h, _F % r.box.yaw]
                + [_F % v for v in r.velocity]
                + [_F % v for v in r.acceleration]
            )


def read_gt(path: Path) -> list[GroundTruthRecord]:
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            out.append(
                GroundTruthRecord(
                    frame_index=int(row["frame"]),
                    actor_id=int(row["actor_id"]),
                    cls=ObjectClass(row["class"]),
                    box=OrientedBox(
                        np.array([float(row["cx"]), float(row["cy"]), float(row["cz"])]),
                        float(row["l"]), float(row["w"]), float(row["h"]),
                        float(row["yaw"]),
                    ),
                    velocity=np.array([float(row["vx"]), float(row["vy"]), float(row["vz"])]),
                    acceleration=np.array([float(row["ax"]), float(row["ay"]), float(row["az"])]),
                )
            )
    return out


DET_HEADER = "frame,class,score,cx,cy,cz,l,w,h,yaw"


def write_detections(path: Path, dets: list[Detection]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(DET_HEADER + "\n")
        w = csv.writer(fh)
        for d in dets:
            w.writerow(
                [d.frame_index, d.cls.value, _F % d.score]
                + [_F % v for v in d.box.center]
                + [_F % d.box.l, _F % d.box.w, _F % d.box.h, _F % d.box.yaw]
            )


def read_detections(path: Path) -> list[Detection]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(
                Detection(
                    box=OrientedBox(
                        np.array([float(row["cx"]), float(row["cy"]), float(row["cz"])]),
                        float(row["l"]), float(row["w"]), float(row["h"]),
                        float(row["yaw"]),
                    ),
                    cls=ObjectClass(row["class"]),
                    score=float(row["score"]),
                    frame_index=int(row["frame"]),
                    n_points=int(row.get("n_points", 0) or 0),
                )
            )
    return out


TRACKS_HEADER = "frame,track_id,class,cx,cy,cz,l,w,h,yaw,vx,vy,vz"
REFINED_HEADER = TRACKS_HEADER + ",ax,ay,az"


def write_trajectories(path: Path, trajs: list[Trajectory],
                       with_acceleration: bool = False) -> None:
    rows = []
    for t in trajs:
        for k in range(t.n_frames):
            rows.append((int(t.frame_indices[k]), t.track_id, t, k))
    rows.sort(key=lambda r: (r[0], r[1]))
    with open(path, "w", newline="") as fh:
        fh.write((REFINED_HEADER if with_acceleration else TRACKS_HEADER) + "\n")
        w = csv.writer(fh)
        for fi, tid, t, k in rows:
            row = (
                [fi, tid, t.cls.value]
                + [_F % v for v in t.pos[k]]
                + [_F % v for v in t.dims[k]]
                + [_F % t.yaw[k]]
                + [_F % v for v in t.vel[k]]
            )
            if with_acceleration:
                row += [_F % v for v in t.acc[k]]
            w.writerow(row)


def read_trajectories(path: Path, rate: float = 20.0) -> list[Trajectory]:
    rows_by_id: dict[int, list[dict]] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rows_by_id.setdefault(int(row["track_id"]), []).append(row)
    out = []
    for tid, rows in sorted(rows_by_id.items()):
        rows.sort(key=lambda r: int(r["frame"]))
        fi = np.array([int(r["frame"]) for r in rows])
        out.append(
            Trajectory(
                track_id=tid,
                cls=ObjectClass(rows[0]["class"]),
                frame_indices=fi,
                times=fi / rate,
                pos=np.array([[float(r["cx"]), float(r["cy"]), float(r["cz"])] for r in rows]),
                vel=np.array([[float(r["vx"]), float(r["vy"]), float(r["vz"])] for r in rows]),
                acc=np.array([[float(r.get("ax", 0) or 0), float(r.get("ay", 0) or 0),
                               float(r.get("az", 0) or 0)] for r in rows]),
                yaw=np.array([float(r["yaw"]) for r in rows]),
                dims=np.array([[float(r["l"]), float(r["w"]), float(r["h"])] for r in rows]),
                n_points=np.zeros(len(rows), dtype=int),
            )
        )
    return out


def write_fixed_dims(path: Path, dims_by_track: dict[int, tuple[float, float, float]]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("track_id,l,w,h\n")
        w = csv.writer(fh)
        for tid, (l, wd, h) in sorted(dims_by_track.items()):
            w.writerow([tid, _F % l, _F % wd, _F % h])


def write_heatmap(path: Path, grid: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        np.savetxt(fh, grid, fmt=_F, delimiter=",")


def write_manifest(path: Path, manifest: dict) -> None:
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_manifest(path: Path) -> dict:
    with open(path) as fh:
        manifest = json.load(fh)
    base = path.parent
    for sensor in manifest["sensors"]:
        for f in sensor["frames"]:
            if not (base / f).exists():
                raise FileNotFoundError(f"manifest references missing file {f}")
    return manifest


def pose_to_json(pose: Pose) -> dict:
    return {
        "quaternion_xyzw": [float(v) for v in pose.as_quat()],
        "translation": [float(v) for v in pose.translation],
    }


def pose_from_json(d: dict) -> Pose:
    return Pose.from_quat(d["quaternion_xyzw"], d["translation"])
