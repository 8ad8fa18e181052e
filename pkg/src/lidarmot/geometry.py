"""Shared geometric vocabulary: points, rigid poses, upright oriented boxes.

Point clouds are stored as float64 arrays of shape (N, 4) with columns
x, y, z, intensity.  Boxes are upright cuboids with a yaw rotation about
the vertical axis, which keeps overlap computations in the ground plane
(BEV) plus a z interval.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from scipy.spatial.transform import Rotation


class ObjectClass(str, Enum):
    CAR = "car"
    TRUCK = "truck"
    PEDESTRIAN = "pedestrian"
    BICYCLE = "bicycle"
    MOTORCYCLE = "motorcycle"


VEHICLE_CLASSES = frozenset({ObjectClass.CAR, ObjectClass.TRUCK})
VRU_CLASSES = frozenset(
    {ObjectClass.PEDESTRIAN, ObjectClass.BICYCLE, ObjectClass.MOTORCYCLE}
)


def is_vru(cls: ObjectClass) -> bool:
    return cls in VRU_CLASSES


class ValidationError(ValueError):
    """Raised when an input violates a structural invariant."""


@dataclass
class PointCloudFrame:
    """One sensor's (or the fused, sensor_id 0) point set at one timestamp."""

    sensor_id: int
    frame_index: int
    timestamp: float
    points: np.ndarray  # (N, 4): x, y, z, intensity
    origins: np.ndarray | None = None  # per-point source sensor id (fused frames)

    def __post_init__(self) -> None:
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 4)

    @property
    def xyz(self) -> np.ndarray:
        return self.points[:, :3]

    @property
    def intensity(self) -> np.ndarray:
        return self.points[:, 3]

    def __len__(self) -> int:
        return self.points.shape[0]

    def with_points(self, points: np.ndarray, origins: np.ndarray | None = None) -> "PointCloudFrame":
        return replace(self, points=points, origins=origins)


@dataclass(frozen=True)
class Pose:
    """Rigid transform mapping local coordinates into the world frame."""

    rotation: np.ndarray  # (3, 3) orthonormal, det +1
    translation: np.ndarray  # (3,)

    def __post_init__(self) -> None:
        R = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        err = np.abs(R @ R.T - np.eye(3)).max()
        if err > 1e-8 or abs(np.linalg.det(R) - 1.0) > 1e-8:
            # Re-orthonormalize mild drift (e.g. after long compositions);
            # reject anything that is not close to a rotation.
            if err > 1e-6 or abs(np.linalg.det(R) - 1.0) > 1e-6:
                raise ValidationError("rotation is not orthonormal with det +1")
            U, _, Vt = np.linalg.svd(R)
            R = U @ Vt
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_quat(cls, qxyzw, translation) -> "Pose":
        q = np.asarray(qxyzw, dtype=np.float64)
        n = np.linalg.norm(q)
        if abs(n - 1.0) > 1e-9:
            q = q / n
        return cls(Rotation.from_quat(q).as_matrix(), translation)

    @classmethod
    def from_euler(cls, yaw: float, pitch: float = 0.0, roll: float = 0.0,
                   translation=(0.0, 0.0, 0.0)) -> "Pose":
        R = Rotation.from_euler("ZYX", [yaw, pitch, roll]).as_matrix()
        return cls(R, translation)

    def as_quat(self) -> np.ndarray:
        return Rotation.from_matrix(self.rotation).as_quat()

    def apply(self, xyz: np.ndarray) -> np.ndarray:
        xyz = np.asarray(xyz, dtype=np.float64)
        return xyz @ self.rotation.T + self.translation

    def inverse(self) -> "Pose":
        Rt = self.rotation.T
        return Pose(Rt, -Rt @ self.translation)


def compose(a: Pose, b: Pose) -> Pose:
    """Composition (a o b): maps x to a(b(x))."""
    return Pose(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def transform_points(pose: Pose, frame: PointCloudFrame) -> PointCloudFrame:
    """Rigidly map every point of a frame; intensity and ordering preserved."""
    if not np.isfinite(frame.points).all():
        raise ValidationError(
            f"frame s{frame.sensor_id} f{frame.frame_index} contains non-finite points"
        )
    out = frame.points.copy()
    out[:, :3] = pose.apply(frame.points[:, :3])
    return frame.with_points(out, frame.origins)


def wrap_angle(a):
    """Wrap angle(s) to the principal range (-pi, pi]."""
    a = np.asarray(a, dtype=np.float64)
    wrapped = -((-a + np.pi) % (2.0 * np.pi) - np.pi)
    return float(wrapped) if wrapped.ndim == 0 else wrapped


@dataclass(frozen=True)
class OrientedBox:
    """Upright cuboid: center, dimensions (l >= w by detector convention), yaw."""

    center: np.ndarray  # (3,)
    l: float
    w: float
    h: float
    yaw: float

    def __post_init__(self) -> None:
        c = np.asarray(self.center, dtype=np.float64).reshape(3)
        object.__setattr__(self, "center", c)
        if not (self.l > 0 and self.w > 0 and self.h > 0):
            raise ValidationError("box dimensions must be positive")
        object.__setattr__(self, "yaw", wrap_angle(self.yaw))

    def corners_bev(self) -> np.ndarray:
        """The 4 corners of the yaw-rotated footprint, counter-clockwise, (4, 2)."""
        hl, hw = 0.5 * self.l, 0.5 * self.w
        local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
        c, s = np.cos(self.yaw), np.sin(self.yaw)
        R = np.array([[c, -s], [s, c]])
        return local @ R.T + self.center[:2]

    def to_local(self, xyz: np.ndarray) -> np.ndarray:
        """Express world points in the box frame (x along l, y along w, z up)."""
        d = np.asarray(xyz, dtype=np.float64) - self.center
        c, s = np.cos(self.yaw), np.sin(self.yaw)
        x = c * d[..., 0] + s * d[..., 1]
        y = -s * d[..., 0] + c * d[..., 1]
        return np.stack([x, y, d[..., 2]], axis=-1)

    def contains(self, xyz: np.ndarray) -> np.ndarray:
        """Boolean mask of points inside the closed box (boundary inclusive)."""
        local = self.to_local(xyz)
        return (
            (np.abs(local[..., 0]) <= 0.5 * self.l)
            & (np.abs(local[..., 1]) <= 0.5 * self.w)
            & (np.abs(local[..., 2]) <= 0.5 * self.h)
        )


def _polygon_area(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _clip_polygon(subject: np.ndarray, clip: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman: clip a polygon by a convex polygon (both CCW)."""
    output = list(subject)
    n = len(clip)
    for i in range(n):
        a, b = clip[i], clip[(i + 1) % n]
        edge = b - a
        if not output:
            break
        inputs, output = output, []
        prev = inputs[-1]
        prev_in = edge[0] * (prev[1] - a[1]) - edge[1] * (prev[0] - a[0]) >= 0
        for cur in inputs:
            cur_in = edge[0] * (cur[1] - a[1]) - edge[1] * (cur[0] - a[0]) >= 0
            if cur_in != prev_in:
                d = cur - prev
                denom = edge[0] * d[1] - edge[1] * d[0]
                if abs(denom) > 1e-15:
                    s = (edge[0] * (a[1] - prev[1]) - edge[1] * (a[0] - prev[0])) / denom
                    output.append(prev + s * d)
            if cur_in:
                output.append(cur)
            prev, prev_in = cur, cur_in
    return np.asarray(output).reshape(-1, 2)


def bev_iou(a: OrientedBox, b: OrientedBox) -> float:
    """Intersection-over-union of the two footprints in the ground plane."""
    area_a = a.l * a.w
    area_b = b.l * b.w
    if area_a <= 0 or area_b <= 0:
        raise ValidationError("degenerate zero-area box")
    # cheap reject: footprints cannot overlap beyond circumradius sum
    r = 0.5 * np.hypot(a.l, a.w) + 0.5 * np.hypot(b.l, b.w)
    if np.hypot(*(a.center[:2] - b.center[:2])) > r:
        return 0.0
    inter_poly = _clip_polygon(a.corners_bev(), b.corners_bev())
    if len(inter_poly) < 3:
        return 0.0
    inter = _polygon_area(inter_poly)
    return float(inter / (area_a + area_b - inter))


def points_in_box(frame: PointCloudFrame, box: OrientedBox) -> np.ndarray:
    """Rows of the frame whose coordinates lie inside the closed box."""
    if len(frame) == 0:
        return frame.points[:0]
    # cheap axis-aligned pre-crop: the rotated footprint fits inside its
    # circumradius, so the exact test only runs on nearby points
    pts = frame.points
    r = 0.5 * np.hypot(box.l, box.w)
    near = (
        (np.abs(pts[:, 0] - box.center[0]) <= r)
        & (np.abs(pts[:, 1] - box.center[1]) <= r)
        & (np.abs(pts[:, 2] - box.center[2]) <= 0.5 * box.h)
    )
    cand = pts[near]
    if cand.shape[0] == 0:
        return cand
    return cand[box.contains(cand[:, :3])]


def min_box_dims(points: np.ndarray, gt: OrientedBox) -> tuple[float, float, float]:
    """Extent (h_m, w_m, l_m) of points expressed in the GT box's local frame.

    Empty input is defined as (0, 0, 0); a single point likewise has zero
    extent.  Each value is capped at the corresponding GT dimension so
    boundary points never yield a ratio above 1.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, points.shape[-1] if points.size else 3)
    if pts.shape[0] == 0:
        return (0.0, 0.0, 0.0)
    local = gt.to_local(pts[:, :3])
    ext = local.max(axis=0) - local.min(axis=0)
    l_m = float(min(ext[0], gt.l))
    w_m = float(min(ext[1], gt.w))
    h_m = float(min(ext[2], gt.h))
    return (h_m, w_m, l_m)
