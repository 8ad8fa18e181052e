"""Trajectory post-processing: fixed-interval smoothing, fixed box
dimensions from the best-covered frame, triangular-kernel heading smoothing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import ObjectClass, is_vru, wrap_angle
from .tracker import TrackRecord


@dataclass
class Trajectory:
    track_id: int
    cls: ObjectClass
    frame_indices: np.ndarray  # (n,) strictly increasing
    times: np.ndarray  # (n,) seconds
    pos: np.ndarray  # (n, 3)
    vel: np.ndarray  # (n, 3)
    acc: np.ndarray  # (n, 3)
    yaw: np.ndarray  # (n,)
    dims: np.ndarray  # (n, 3) l, w, h
    n_points: np.ndarray  # (n,) supporting points per frame

    def __post_init__(self) -> None:
        if np.any(np.diff(self.frame_indices) <= 0):
            raise ValueError("frame indices must be strictly increasing")

    @property
    def n_frames(self) -> int:
        return len(self.frame_indices)

    @property
    def length(self) -> float:
        """Polyline arc length of the positions, meters."""
        if self.n_frames < 2:
            return 0.0
        return float(np.hypot(*np.diff(self.pos[:, :2], axis=0).T).sum())


def trajectories_from_records(records: list[TrackRecord], rate: float) -> list[Trajectory]:
    """Group confirmed tracker output by track id."""
    by_id: dict[int, list[TrackRecord]] = {}
    for r in records:
        by_id.setdefault(r.track_id, []).append(r)
    out = []
    for tid, recs in sorted(by_id.items()):
        recs.sort(key=lambda r: r.frame_index)
        fi = np.array([r.frame_index for r in recs])
        states = np.stack([r.state for r in recs])
        out.append(
            Trajectory(
                track_id=tid,
                # the tracker revises a track's class as evidence accumulates;
                # the final record carries its settled majority label
                cls=recs[-1].cls,
                frame_indices=fi,
                times=fi / rate,
                pos=states[:, :3].copy(),
                vel=states[:, 7:10].copy(),
                acc=np.zeros((len(recs), 3)),
                yaw=states[:, 3].copy(),
                dims=states[:, 4:7].copy(),
                n_points=np.array([r.n_points for r in recs]),
            )
        )
    return out


# ---------------------------------------------------------------------------
# constant-acceleration fixed-interval smoother (per axis)

def _ca_matrices(dt: float, q: float):
    F = np.array([[1.0, dt, 0.5 * dt * dt], [0.0, 1.0, dt], [0.0, 0.0, 1.0]])
    # discrete white-jerk process noise
    Q = q * np.array(
        [
            [dt ** 5 / 20.0, dt ** 4 / 8.0, dt ** 3 / 6.0],
            [dt ** 4 / 8.0, dt ** 3 / 3.0, dt ** 2 / 2.0],
            [dt ** 3 / 6.0, dt ** 2 / 2.0, dt],
        ]
    )
    return F, Q


def ca_filter_smooth(times: np.ndarray, z: np.ndarray, q: float, r: float):
    """Forward Kalman + backward RTS pass over scalar position measurements.

    Returns (filtered, smoothed, P_filtered, P_smoothed) where the state
    arrays have shape (n, 3): position, velocity, acceleration.
    Handles non-uniform spacing via per-step transition matrices.
    """
    n = len(z)
    H = np.array([[1.0, 0.0, 0.0]])
    R = np.array([[r]])
    xs = np.zeros((n, 3))
    Ps = np.zeros((n, 3, 3))
    xp = np.zeros((n, 3))
    Pp = np.zeros((n, 3, 3))
    Fs = np.zeros((n, 3, 3))

    dt0 = times[1] - times[0] if n > 1 else 1.0
    x = np.array([z[0], (z[1] - z[0]) / dt0 if n > 1 else 0.0, 0.0])
    P = np.diag([r, 10.0, 10.0])
    xs[0], Ps[0] = x, P
    xp[0], Pp[0] = x, P
    for k in range(1, n):
        F, Q = _ca_matrices(times[k] - times[k - 1], q)
        Fs[k] = F
        x = F @ x
        P = F @ P @ F.T + Q
        xp[k], Pp[k] = x, P
        S = H @ P @ H.T + R
        K = P @ H.T / S
        x = x + (K * (z[k] - x[0])).ravel()
        P = (np.eye(3) - K @ H) @ P
        xs[k], Ps[k] = x, P

    xsm = xs.copy()
    Psm = Ps.copy()
    for k in range(n - 2, -1, -1):
        C = Ps[k] @ Fs[k + 1].T @ np.linalg.inv(Pp[k + 1])
        xsm[k] = xs[k] + C @ (xsm[k + 1] - xp[k + 1])
        Psm[k] = Ps[k] + C @ (Psm[k + 1] - Pp[k + 1]) @ C.T
    return xs, xsm, Ps, Psm


#: process-noise spectral density per class group (m^2 / s^5)
DEFAULT_SMOOTHER_Q = {"vehicle": 5.0, "vru": 1.5}


@dataclass(frozen=True)
class RefineParams:
    smoother_q: dict = field(default_factory=lambda: dict(DEFAULT_SMOOTHER_Q))
    measurement_var: float = 0.09  # m^2, matches the tracker default
    heading_window: int = 7
    heading_flip_speed: float = 0.5  # m/s


def smooth(traj: Trajectory, params: RefineParams | None = None) -> Trajectory:
    """Fixed-interval smoothing of position, velocity and acceleration.

    Each axis runs an independent constant-acceleration forward filter and
    backward pass, so every output state conditions on the whole interval.
    Single-frame trajectories are returned unchanged.
    """
    params = params or RefineParams()
    if traj.n_frames < 2:
        return traj
    q = params.smoother_q["vru" if is_vru(traj.cls) else "vehicle"]
    pos = np.empty_like(traj.pos)
    vel = np.empty_like(traj.vel)
    acc = np.empty_like(traj.acc)
    for axis in range(3):
        _, xsm, _, _ = ca_filter_smooth(traj.times, traj.pos[:, axis], q,
                                        params.measurement_var)
        pos[:, axis] = xsm[:, 0]
        vel[:, axis] = xsm[:, 1]
        acc[:, axis] = xsm[:, 2]
    return replace(traj, pos=pos, vel=vel, acc=acc)


def fix_dimensions(traj: Trajectory) -> tuple[float, float, float]:
    """Dimensions from the frame with the highest point coverage.

    Ties resolve to the earliest frame.  The chosen (l, w, h) is meant to be
    applied to every frame of the trajectory.
    """
    best = int(np.argmax(traj.n_points))
    return tuple(float(v) for v in traj.dims[best])


def apply_fixed_dimensions(traj: Trajectory) -> Trajectory:
    l, w, h = fix_dimensions(traj)
    return replace(traj, dims=np.tile([l, w, h], (traj.n_frames, 1)))


def _triangular_kernel(window: int) -> np.ndarray:
    half = (window + 1) // 2
    k = np.concatenate([np.arange(1, half + 1), np.arange(half - 1, 0, -1)]).astype(float)
    return k / k.sum()


def smooth_heading(traj: Trajectory, params: RefineParams | None = None) -> Trajectory:
    """Triangular-kernel smoothing of the heading angle.

    The yaw sequence is sign-disambiguated against the smoothed velocity,
    unwrapped, convolved with a normalized triangular kernel (truncated and
    renormalized at the ends) and re-wrapped to (-pi, pi].
    """
    params = params or RefineParams()
    window = params.heading_window
    if window % 2 != 1 or window < 1:
        raise ValueError("heading window must be odd and >= 1")
    yaw = traj.yaw.copy()
    # flip headings that oppose the direction of travel
    speed = np.hypot(traj.vel[:, 0], traj.vel[:, 1])
    moving = speed > params.heading_flip_speed
    if moving.any():
        travel = np.arctan2(traj.vel[:, 1], traj.vel[:, 0])
        flip = moving & (np.abs(wrap_angle(yaw - travel)) > 0.5 * math.pi)
        yaw[flip] = wrap_angle(yaw[flip] + math.pi)
    if window == 1 or traj.n_frames < 2:
        return replace(traj, yaw=wrap_angle(yaw))
    unwrapped = np.unwrap(yaw)
    kernel = _triangular_kernel(window)
    half = window // 2
    n = len(unwrapped)
    smoothed = np.empty(n)
    for i in range(n):
        lo = max(0, i - half)
        hi = min(n, i + half + 1)
        k = kernel[half - (i - lo): half + (hi - i)]
        smoothed[i] = np.dot(unwrapped[lo:hi], k / k.sum())
    return replace(traj, yaw=wrap_angle(smoothed))


def refine(traj: Trajectory, params: RefineParams | None = None) -> Trajectory:
    """Full post-processing: smoothing, fixed dims, heading smoothing."""
    params = params or RefineParams()
    out = smooth(traj, params)
    out = apply_fixed_dimensions(out)
    return smooth_heading(out, params)
