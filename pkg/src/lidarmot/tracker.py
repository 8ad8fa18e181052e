"""Multi-object tracking: Kalman filter with a linear motion model,
Hungarian association and a birth/death memory.

State vector (10): [x, y, z, yaw, l, w, h, vx, vy, vz].  Measurements are
the first 7 components (an oriented box).  Yaw is treated as a slowly
varying measured quantity; the 180-degree ambiguity of fitted boxes is
resolved by flipping the measurement when the innovation exceeds pi/2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .detector import Detection
from .geometry import ObjectClass, OrientedBox, bev_iou, is_vru, wrap_angle

_DIM = 10
_MEAS = 7


@dataclass(frozen=True)
class TrackerParams:
    min_hits: int = 3
    max_age: int = 2
    match_metric: str = "centroid_distance"  # or "bev_iou"
    match_threshold: float = 2.0  # meters (or min IoU when match_metric is bev_iou)
    process_noise: tuple = (0.01,) * 7 + (0.25, 0.25, 0.25)
    measurement_noise: tuple = (0.09, 0.09, 0.09, 0.09, 0.04, 0.04, 0.04)
    initial_velocity_var: float = 100.0

    def __post_init__(self) -> None:
        if self.min_hits < 1 or self.max_age < 0:
            raise ValueError("min_hits >= 1 and max_age >= 0 required")
        if self.match_metric not in ("centroid_distance", "bev_iou"):
            raise ValueError(f"unknown match metric {self.match_metric!r}")


@dataclass
class TrackRecord:
    """One confirmed, measurement-updated track state at one frame."""

    frame_index: int
    track_id: int
    cls: ObjectClass
    state: np.ndarray  # copy of the 10-vector after update
    n_points: int


@dataclass
class TrackState:
    id: int
    cls: ObjectClass
    x: np.ndarray  # (10,)
    P: np.ndarray  # (10, 10)
    hits: int = 1
    age: int = 0
    time_since_update: int = 0
    history: list[TrackRecord] = field(default_factory=list)
    cls_counts: dict = field(default_factory=dict)

    def observe_class(self, cls: ObjectClass) -> None:
        """Count a detection's class; the track reports the majority class.

        Gate-based labels flicker between neighboring classes frame to
        frame, so a single odd detection must not relabel the track.
        """
        self.cls_counts[cls] = self.cls_counts.get(cls, 0) + 1
        self.cls = max(self.cls_counts, key=self.cls_counts.get)

    @property
    def box(self) -> OrientedBox:
        x = self.x
        return OrientedBox(x[:3].copy(), max(x[4], 0.05), max(x[5], 0.05),
                           max(x[6], 0.05), x[3])


def _transition(dt: float) -> np.ndarray:
    F = np.eye(_DIM)
    F[0, 7] = F[1, 8] = F[2, 9] = dt
    return F


def _measurement_matrix() -> np.ndarray:
    H = np.zeros((_MEAS, _DIM))
    H[:, :_MEAS] = np.eye(_MEAS)
    return H


def _ensure_pd(P: np.ndarray) -> np.ndarray:
    P = 0.5 * (P + P.T)
    eigval, eigvec = np.linalg.eigh(P)
    if eigval.min() < 1e-9:
        P = eigvec @ np.diag(np.maximum(eigval, 1e-9)) @ eigvec.T
    return P


def predict(track: TrackState, dt: float, params: TrackerParams) -> TrackState:
    """Constant-velocity propagation of mean and covariance."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    F = _transition(dt)
    Q = np.diag(params.process_noise)
    track.x = F @ track.x
    track.x[3] = wrap_angle(track.x[3])
    track.P = _ensure_pd(F @ track.P @ F.T + Q)
    return track


def update(track: TrackState, det: Detection, params: TrackerParams) -> TrackState:
    """Standard Kalman measurement update with yaw-flip correction."""
    H = _measurement_matrix()
    R = np.diag(params.measurement_noise)
    z = np.array([*det.box.center, det.box.yaw, det.box.l, det.box.w, det.box.h])
    innovation = z - H @ track.x
    innovation[3] = wrap_angle(innovation[3])
    if abs(innovation[3]) > 0.5 * math.pi:
        # fitted boxes are ambiguous mod pi: flip the measured heading
        innovation[3] = wrap_angle(innovation[3] + math.pi)
    S = H @ track.P @ H.T + R
    K = track.P @ H.T @ np.linalg.inv(S)
    track.x = track.x + K @ innovation
    track.x[3] = wrap_angle(track.x[3])
    track.P = _ensure_pd((np.eye(_DIM) - K @ H) @ track.P)
    track.hits += 1
    track.time_since_update = 0
    return track


def _pair_cost(track: TrackState, det: Detection, params: TrackerParams) -> float:
    # gate on category, not exact class: dimension-gate labels flicker
    # between neighboring classes and must not fragment the track
    if is_vru(track.cls) is not is_vru(det.cls):
        return np.inf
    if params.match_metric == "bev_iou":
        iou = bev_iou(track.box, det.box)
        return -iou if iou >= params.match_threshold else np.inf
    d = float(np.hypot(*(track.x[:2] - det.box.center[:2])))
    return d if d <= params.match_threshold else np.inf


def associate(tracks: list[TrackState], dets: list[Detection],
              params: TrackerParams):
    """Globally optimal assignment on the gated cost matrix.

    Returns (matches, unmatched_track_indices, unmatched_det_indices),
    matches as (track_idx, det_idx) pairs.  Class mismatches and pairs
    beyond the gate are forbidden.
    """
    if not tracks or not dets:
        return [], list(range(len(tracks))), list(range(len(dets)))
    cost = np.empty((len(tracks), len(dets)))
    for i, trk in enumerate(tracks):
        for j, det in enumerate(dets):
            cost[i, j] = _pair_cost(trk, det, params)
    finite = np.isfinite(cost)
    big = 1e9
    rows, cols = linear_sum_assignment(np.where(finite, cost, big))
    matches = [(int(i), int(j)) for i, j in zip(rows, cols) if finite[i, j]]
    mt = {i for i, _ in matches}
    md = {j for _, j in matches}
    return (matches,
            [i for i in range(len(tracks)) if i not in mt],
            [j for j in range(len(dets)) if j not in md])


class MultiObjectTracker:
    """Sequential per-stream tracker with birth/death lifecycle."""

    def __init__(self, params: TrackerParams | None = None, rate: float = 20.0):
        self.params = params or TrackerParams()
        self.rate = rate
        self.tracks: list[TrackState] = []
        self._next_id = 1
        self._last_frame: int | None = None
        self._frame_count = 0
        self.records: list[TrackRecord] = []

    def _spawn(self, det: Detection) -> TrackState:
        x = np.zeros(_DIM)
        x[:3] = det.box.center
        x[3] = det.box.yaw
        x[4:7] = (det.box.l, det.box.w, det.box.h)
        P = np.diag(list(self.params.measurement_noise)
                    + [self.params.initial_velocity_var] * 3)
        track = TrackState(id=self._next_id, cls=det.cls, x=x, P=P)
        self._next_id += 1
        return track

    def step(self, frame_index: int, dets: list[Detection]) -> list[TrackState]:
        """Advance one frame; returns the confirmed tracks updated this frame."""
        if self._last_frame is not None and frame_index <= self._last_frame:
            raise ValueError(
                f"frames must be strictly increasing (got {frame_index} after {self._last_frame})"
            )
        dt = (1.0 if self._last_frame is None
              else (frame_index - self._last_frame)) / self.rate
        self._last_frame = frame_index
        self._frame_count += 1

        for track in self.tracks:
            predict(track, dt, self.params)
            track.age += 1
            track.time_since_update += 1

        matches, _, unmatched_dets = associate(self.tracks, dets, self.params)
        for ti, di in matches:
            update(self.tracks[ti], dets[di], self.params)
            self.tracks[ti].observe_class(dets[di].cls)
            self.tracks[ti].history.append(
                TrackRecord(frame_index, self.tracks[ti].id, self.tracks[ti].cls,
                            self.tracks[ti].x.copy(), dets[di].n_points)
            )
        for di in unmatched_dets:
            track = self._spawn(dets[di])
            track.observe_class(dets[di].cls)
            track.history.append(
                TrackRecord(frame_index, track.id, track.cls, track.x.copy(),
                            dets[di].n_points)
            )
            self.tracks.append(track)

        self.tracks = [t for t in self.tracks
                       if t.time_since_update <= self.params.max_age]

        confirmed = [
            t for t in self.tracks
            if t.time_since_update == 0
            and (t.hits >= self.params.min_hits
                 or self._frame_count <= self.params.min_hits)
        ]
        for t in confirmed:
            self.records.append(t.history[-1])
        return confirmed
