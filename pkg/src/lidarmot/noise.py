"""Gaussian point noise and pose-perturbation fusion noise.

All draws use counter-style keyed streams (SeedSequence spawn keys), so a
frame's noise depends only on (seed, sensor_id, frame_index) and parallel
generation is order-independent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

from .geometry import Pose, PointCloudFrame

_POINT_STREAM = 1
_POSE_STREAM = 2


@dataclass(frozen=True)
class NoiseSpec:
    """Defaults follow the noisy dataset family: point and position noise
    with variance 0.01 m^2 (sigma 0.1 m), rotation variance 2.5e-5 rad^2."""

    point_sigma: float = 0.1
    pos_sigma: float = 0.1
    rot_sigma: float = 5.0e-3
    seed: int = 0
    per_frame_pose: bool = False  # static miscalibration by default

    def __post_init__(self) -> None:
        if min(self.point_sigma, self.pos_sigma, self.rot_sigma) < 0:
            raise ValueError("noise sigmas must be >= 0")


def _rng(spec: NoiseSpec, stream: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence(spec.seed, spawn_key=(stream, *key))
    )


def perturb_points(frame: PointCloudFrame, spec: NoiseSpec) -> PointCloudFrame:
    """i.i.d. zero-mean Gaussian offsets on x, y, z of every point."""
    if spec.point_sigma == 0 or len(frame) == 0:
        return frame
    rng = _rng(spec, _POINT_STREAM, frame.sensor_id, frame.frame_index)
    out = frame.points.copy()
    out[:, :3] += rng.normal(0.0, spec.point_sigma, size=(len(frame), 3))
    return frame.with_points(out, frame.origins)


def perturb_pose(pose: Pose, spec: NoiseSpec, sensor_id: int = 0,
                 frame_index: int = 0) -> Pose:
    """Pose offset by Gaussian translation and a small random rotation.

    With per_frame_pose False (default) the draw depends only on the sensor,
    i.e. one static miscalibration per recording.
    """
    if spec.pos_sigma == 0 and spec.rot_sigma == 0:
        return pose
    key = (sensor_id, frame_index) if spec.per_frame_pose else (sensor_id,)
    rng = _rng(spec, _POSE_STREAM, *key)
    dt = rng.normal(0.0, spec.pos_sigma, size=3) if spec.pos_sigma > 0 else np.zeros(3)
    angles = rng.normal(0.0, spec.rot_sigma, size=3) if spec.rot_sigma > 0 else np.zeros(3)
    dR = Rotation.from_euler("xyz", angles).as_matrix()
    return Pose(pose.rotation @ dR, pose.translation + dt)
