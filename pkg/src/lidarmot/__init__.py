"""Multi-LiDAR infrastructure perception workbench: simulation, fusion,
detection, tracking and evaluation."""

from .geometry import (ObjectClass, OrientedBox, PointCloudFrame, Pose,
                       bev_iou, compose, min_box_dims, points_in_box,
                       transform_points)
from .raycast import BACKEND as RAYCAST_BACKEND

__version__ = "0.1.0"

__all__ = [
    "ObjectClass", "OrientedBox", "PointCloudFrame", "Pose",
    "bev_iou", "compose", "min_box_dims", "points_in_box",
    "transform_points", "RAYCAST_BACKEND", "__version__",
]
