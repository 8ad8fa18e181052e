"""Evaluation mathematics: heat maps, bounding-box coverage, average
precision, CLEAR-MOT and frame-weighted trajectory deviations.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .geometry import (ObjectClass, OrientedBox, PointCloudFrame, bev_iou,
                       is_vru, min_box_dims, points_in_box)
from .refine import Trajectory
from .scenario import GroundTruthRecord


class HeatMap:
    """Grid accumulator of per-cell means over a square BEV extent."""

    def __init__(self, low: float = -56.0, high: float = 56.0, cell: float = 4.0):
        self.low = low
        self.cell = cell
        self.n = int(round((high - low) / cell))
        self.sum = np.zeros((self.n, self.n))
        self.count = np.zeros((self.n, self.n), dtype=np.int64)
        self.ignored = 0

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.n)

    def add(self, x: float, y: float, value: float) -> None:
        i = int(np.floor((x - self.low) / self.cell))
        j = int(np.floor((y - self.low) / self.cell))
        if 0 <= i < self.n and 0 <= j < self.n:
            self.sum[i, j] += value
            self.count[i, j] += 1
        else:
            self.ignored += 1

    def cell_index(self, x: float, y: float) -> tuple[int, int]:
        return (int(np.floor((x - self.low) / self.cell)),
                int(np.floor((y - self.low) / self.cell)))

    def cell_centers(self) -> np.ndarray:
        c = self.low + (np.arange(self.n) + 0.5) * self.cell
        gx, gy = np.meshgrid(c, c, indexing="ij")
        return np.stack([gx, gy], axis=-1)

    def mean(self) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            return np.where(self.count > 0, self.sum / np.maximum(self.count, 1), 0.0)

    def merge(self, other: "HeatMap") -> "HeatMap":
        assert self.shape == other.shape
        self.sum += other.sum
        self.count += other.count
        self.ignored += other.ignored
        return self


def accumulate_point_count(hm: HeatMap, gt_records: list[GroundTruthRecord],
                           frame: PointCloudFrame) -> None:
    """Add each GT box's contained-point count to the cell under its center."""
    for r in gt_records:
        n = len(points_in_box(frame, r.box))
        hm.add(r.box.center[0], r.box.center[1], float(n))


def accumulate_coverage(hms: tuple[HeatMap, HeatMap, HeatMap],
                        gt_records: list[GroundTruthRecord],
                        frame: PointCloudFrame) -> None:
    """Add per-box dimension coverage ratios (w, l, h order: hm_w, hm_l, hm_h)."""
    hm_w, hm_l, hm_h = hms
    for r in gt_records:
        pts = points_in_box(frame, r.box)
        h_m, w_m, l_m = min_box_dims(pts, r.box)
        x, y = r.box.center[0], r.box.center[1]
        hm_w.add(x, y, w_m / r.box.w)
        hm_l.add(x, y, l_m / r.box.l)
        hm_h.add(x, y, h_m / r.box.h)


def point_count_heatmap(gt: list[GroundTruthRecord],
                        frames: dict[int, PointCloudFrame],
                        low: float = -56.0, high: float = 56.0,
                        cell: float = 4.0) -> HeatMap:
    hm = HeatMap(low, high, cell)
    by_frame: dict[int, list[GroundTruthRecord]] = {}
    for r in gt:
        by_frame.setdefault(r.frame_index, []).append(r)
    for fi, frame in frames.items():
        accumulate_point_count(hm, by_frame.get(fi, []), frame)
    return hm


def coverage_heatmap(gt: list[GroundTruthRecord],
                     frames: dict[int, PointCloudFrame],
                     low: float = -56.0, high: float = 56.0,
                     cell: float = 4.0) -> tuple[HeatMap, HeatMap, HeatMap]:
    hms = (HeatMap(low, high, cell), HeatMap(low, high, cell), HeatMap(low, high, cell))
    by_frame: dict[int, list[GroundTruthRecord]] = {}
    for r in gt:
        by_frame.setdefault(r.frame_index, []).append(r)
    for fi, frame in frames.items():
        accumulate_coverage(hms, by_frame.get(fi, []), frame)
    return hms


# ---------------------------------------------------------------------------
# average precision

DEFAULT_IOU_THRESHOLDS = {
    ObjectClass.CAR: 0.5,
    ObjectClass.TRUCK: 0.5,
    ObjectClass.PEDESTRIAN: 0.25,
    ObjectClass.BICYCLE: 0.25,
    ObjectClass.MOTORCYCLE: 0.25,
}


def average_precision(dets, gt: list[GroundTruthRecord],
                      iou_thresholds: dict | None = None,
                      n_recall_points: int = 41) -> dict[ObjectClass, float | None]:
    """Per-class AP with interpolated precision at equally spaced recall points.

    Greedy score-ordered matching at the class IoU threshold, each GT box
    matched at most once.  Classes absent from GT report None.
    """
    thr = iou_thresholds or DEFAULT_IOU_THRESHOLDS
    gt_by_cf: dict[tuple[ObjectClass, int], list[GroundTruthRecord]] = {}
    for r in gt:
        gt_by_cf.setdefault((r.cls, r.frame_index), []).append(r)
    out: dict[ObjectClass, float | None] = {}
    for cls in ObjectClass:
        n_gt = sum(len(v) for (c, _), v in gt_by_cf.items() if c is cls)
        if n_gt == 0:
            out[cls] = None
            continue
        cls_dets = sorted((d for d in dets if d.cls is cls), key=lambda d: -d.score)
        matched: set[int] = set()
        tp = np.zeros(len(cls_dets))
        for k, d in enumerate(cls_dets):
            best_iou, best = 0.0, None
            for g in gt_by_cf.get((cls, d.frame_index), []):
                if id(g) in matched:
                    continue
                iou = bev_iou(d.box, g.box)
                if iou > best_iou:
                    best_iou, best = iou, g
            if best is not None and best_iou >= thr[cls]:
                matched.add(id(best))
                tp[k] = 1.0
        if len(cls_dets) == 0:
            out[cls] = 0.0
            continue
        cum_tp = np.cumsum(tp)
        recall = cum_tp / n_gt
        precision = cum_tp / (np.arange(len(cls_dets)) + 1)
        ap = 0.0
        for r_thr in np.linspace(0.0, 1.0, n_recall_points):
            mask = recall >= r_thr - 1e-12
            ap += precision[mask].max() if mask.any() else 0.0
        out[cls] = float(ap / n_recall_points)
    return out


# ---------------------------------------------------------------------------
# CLEAR-MOT

@dataclass
class MotResult:
    mota: float
    motp: float  # 1 - mean_distance / gate, higher is better
    motp_meters: float
    fp: int
    fn: int
    idsw: int
    n_gt: int
    n_matches: int


def _gate_for(cls: ObjectClass, gate) -> float:
    if isinstance(gate, dict):
        return gate["vru"] if is_vru(cls) else gate["vehicle"]
    return float(gate)


def clear_mot(track_frames: dict[int, list[tuple[int, ObjectClass, np.ndarray]]],
              gt: list[GroundTruthRecord],
              distance_gate=None) -> MotResult:
    """CLEAR-MOT on BEV center distance with correspondence persistence.

    track_frames maps frame_index -> [(track_id, class, center)].  Existing
    GT-track correspondences survive while both are present and within the
    gate; the remainder is matched per frame by the Hungarian algorithm
    maximizing within-gate matches (minimal total distance among those).
    """
    if distance_gate is None:
        distance_gate = {"vehicle": 2.0, "vru": 1.0}
    gt_by_frame: dict[int, list[GroundTruthRecord]] = {}
    for r in gt:
        gt_by_frame.setdefault(r.frame_index, []).append(r)
    if not gt_by_frame:
        raise ValueError("CLEAR-MOT requires non-empty ground truth")

    fp = fn = idsw = n_gt = 0
    dist_sum = 0.0
    gate_norm_sum = 0.0
    n_match = 0
    last_match: dict[int, int] = {}  # gt actor id -> track id
    corr: dict[int, int] = {}  # persisted correspondence

    for fi in sorted(gt_by_frame.keys() | track_frames.keys()):
        gts = gt_by_frame.get(fi, [])
        trks = track_frames.get(fi, [])
        n_gt += len(gts)
        trk_pos = {tid: c for tid, _, c in trks}
        matched_gt: dict[int, int] = {}
        used_tracks: set[int] = set()
        # keep persisted correspondences that are still valid
        for g in gts:
            tid = corr.get(g.actor_id)
            if tid is not None and tid in trk_pos:
                d = float(np.hypot(*(g.box.center[:2] - trk_pos[tid][:2])))
                if d <= _gate_for(g.cls, distance_gate):
                    matched_gt[g.actor_id] = tid
                    used_tracks.add(tid)
                    dist_sum += d
                    gate_norm_sum += d / _gate_for(g.cls, distance_gate)
                    n_match += 1
        # Hungarian on the remainder
        rem_gts = [g for g in gts if g.actor_id not in matched_gt]
        rem_trks = [t for t in trks if t[0] not in used_tracks]
        if rem_gts and rem_trks:
            big = 1e9
            cost = np.full((len(rem_gts), len(rem_trks)), big)
            for i, g in enumerate(rem_gts):
                for j, (tid, _, c) in enumerate(rem_trks):
                    d = float(np.hypot(*(g.box.center[:2] - c[:2])))
                    if d <= _gate_for(g.cls, distance_gate):
                        cost[i, j] = d
            rows, cols = linear_sum_assignment(cost)
            for i, j in zip(rows, cols):
                if cost[i, j] >= big:
                    continue
                g = rem_gts[i]
                tid = rem_trks[j][0]
                matched_gt[g.actor_id] = tid
                used_tracks.add(tid)
                dist_sum += cost[i, j]
                gate_norm_sum += cost[i, j] / _gate_for(g.cls, distance_gate)
                n_match += 1
        # mismatch counting against the last known assignment
        for aid, tid in matched_gt.items():
            prev = last_match.get(aid)
            if prev is not None and prev != tid:
                idsw += 1
            last_match[aid] = tid
        corr = dict(matched_gt)
        fn += len(gts) - len(matched_gt)
        fp += len(trks) - len(used_tracks)

    mota = 1.0 - (fp + fn + idsw) / n_gt
    motp_m = dist_sum / n_match if n_match else float("nan")
    motp = 1.0 - gate_norm_sum / n_match if n_match else float("nan")
    return MotResult(mota=mota, motp=motp, motp_meters=motp_m, fp=fp, fn=fn,
                     idsw=idsw, n_gt=n_gt, n_matches=n_match)


# ---------------------------------------------------------------------------
# frame-weighted trajectory deviations

@dataclass
class GtTrajectory:
    actor_id: int
    cls: ObjectClass
    frame_indices: np.ndarray
    pos: np.ndarray
    vel: np.ndarray
    acc: np.ndarray

    @property
    def n_frames(self) -> int:
        return len(self.frame_indices)

    @property
    def length(self) -> float:
        if self.n_frames < 2:
            return 0.0
        return float(np.hypot(*np.diff(self.pos[:, :2], axis=0).T).sum())


def gt_trajectories(gt: list[GroundTruthRecord]) -> list[GtTrajectory]:
    by_id: dict[int, list[GroundTruthRecord]] = {}
    for r in gt:
        by_id.setdefault(r.actor_id, []).append(r)
    out = []
    for aid, recs in sorted(by_id.items()):
        recs.sort(key=lambda r: r.frame_index)
        out.append(
            GtTrajectory(
                actor_id=aid,
                cls=recs[0].cls,
                frame_indices=np.array([r.frame_index for r in recs]),
                pos=np.stack([r.box.center for r in recs]),
                vel=np.stack([r.velocity for r in recs]),
                acc=np.stack([r.acceleration for r in recs]),
            )
        )
    return out


def mae_deviation(trajs: list[Trajectory], gts: list[GtTrajectory],
                  l_t: float = 10.0, n_t: int = 50,
                  match_cap: float = 2.0) -> dict:
    """Frame-weighted mean deviations (position, velocity, acceleration).

    Only GT trajectories longer than l_t meters and with more than n_t
    frames are considered.  Each estimated trajectory is assigned to the GT
    trajectory with the largest frame overlap whose mean BEV distance over
    the overlap stays under match_cap; classification mismatches are
    ignored.  Deviations are averaged over all corresponding frames, i.e.
    weighted by frame count, not per trajectory.
    """
    selected = {g.actor_id: g for g in gts if g.length > l_t and g.n_frames > n_t}

    assignments: list[tuple[Trajectory, GtTrajectory, int]] = []
    for est in trajs:
        best, best_overlap = None, 0
        est_frames = {int(f): k for k, f in enumerate(est.frame_indices)}
        for g in selected.values():
            common = [(est_frames[int(f)], k) for k, f in enumerate(g.frame_indices)
                      if int(f) in est_frames]
            if len(common) <= best_overlap:
                continue
            ei = [c[0] for c in common]
            gi = [c[1] for c in common]
            d = np.hypot(*(est.pos[ei, :2] - g.pos[gi, :2]).T).mean()
            if d <= match_cap:
                best, best_overlap = g, len(common)
        if best is not None:
            assignments.append((est, best, best_overlap))

    # larger overlaps claim frames first when several tracks cover one GT
    assignments.sort(key=lambda a: -a[2])
    dev: dict[str, dict[str, float]] = {
        grp: {"pos": 0.0, "vel": 0.0, "acc": 0.0, "frames": 0}
        for grp in ("all", "vehicle", "vru")
    }
    claimed: set[tuple[int, int]] = set()
    for est, g, _ in assignments:
        est_frames = {int(f): k for k, f in enumerate(est.frame_indices)}
        groups = ("all", "vru" if is_vru(g.cls) else "vehicle")
        for k, f in enumerate(g.frame_indices):
            f = int(f)
            if f not in est_frames or (g.actor_id, f) in claimed:
                continue
            claimed.add((g.actor_id, f))
            ei = est_frames[f]
            dp = float(np.hypot(*(est.pos[ei, :2] - g.pos[k, :2])))
            dv = float(np.hypot(*(est.vel[ei, :2] - g.vel[k, :2])))
            da = float(np.hypot(*(est.acc[ei, :2] - g.acc[k, :2])))
            for grp in groups:
                dev[grp]["pos"] += dp
                dev[grp]["vel"] += dv
                dev[grp]["acc"] += da
                dev[grp]["frames"] += 1

    out = {}
    for grp, acc in dev.items():
        n = acc["frames"]
        out[grp] = {
            "pos": acc["pos"] / n if n else None,
            "vel": acc["vel"] / n if n else None,
            "acc": acc["acc"] / n if n else None,
            "frames": n,
        }
    out["n_selected_gt"] = len(selected)
    return out


def sync_error(v_max: float, dt: float) -> float:
    """Maximal additional synchronization error: v_max * dt."""
    if v_max < 0 or dt < 0:
        raise ValueError("v_max and dt must be >= 0")
    return v_max * dt
