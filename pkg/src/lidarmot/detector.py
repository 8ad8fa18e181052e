"""Deterministic geometric detector: radius clustering, minimum-area box
fitting and dimension-gate classification, plus score-based duplicate removal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .geometry import ObjectClass, OrientedBox, PointCloudFrame, bev_iou
from .preprocess import RoiSpec

#: per-class (min, max) gates on fitted l, w, h; precedence is the dict order
#: (larger classes first, so a partially observed large object is not
#: swallowed by a smaller gate; bicycle before motorcycle because it is
#: taller, not longer).  Gate widths allow for fusion-noise dilation of
#: the fitted boxes.
DEFAULT_GATES: dict[ObjectClass, tuple[tuple[float, float], ...]] = {
    ObjectClass.TRUCK: ((6.2, 11.0), (1.6, 3.8), (2.4, 4.2)),
    ObjectClass.CAR: ((2.9, 6.2), (1.4, 3.0), (1.1, 2.4)),
    ObjectClass.BICYCLE: ((1.3, 2.4), (0.2, 1.45), (1.62, 2.3)),
    ObjectClass.MOTORCYCLE: ((1.5, 2.9), (0.25, 1.5), (1.0, 1.85)),
    ObjectClass.PEDESTRIAN: ((0.05, 1.3), (0.05, 1.3), (1.0, 2.3)),
}


@dataclass(frozen=True)
class DetectorParams:
    cluster_radius: float = 0.7
    min_cluster_points: int = 5
    min_z: float = 0.5  # points below are treated as ground residue (keeps
    # the noisy tail of the downsampled ground band out of the clusters)
    duplicate_iou: float = 0.1
    gates: dict = field(default_factory=lambda: dict(DEFAULT_GATES))

    def __post_init__(self) -> None:
        if self.cluster_radius <= 0:
            raise ValueError("cluster_radius must be positive")


@dataclass
class Detection:
    box: OrientedBox
    cls: ObjectClass
    score: float
    frame_index: int
    n_points: int = 0


def cluster(frame: PointCloudFrame, params: DetectorParams) -> list[np.ndarray]:
    """Radius-connected components above the ground residue level.

    Returns point subsets (rows of the frame), canonically ordered by the
    minimal original point index, so results do not depend on traversal
    order.  Components smaller than min_cluster_points are discarded.
    """
    pts = frame.points
    mask = pts[:, 2] >= params.min_z
    xyz = pts[mask, :3]
    if xyz.shape[0] == 0:
        return []
    tree = cKDTree(xyz)
    pairs = tree.query_pairs(params.cluster_radius, output_type="ndarray")
    m = xyz.shape[0]
    graph = coo_matrix(
        (np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(m, m)
    ) if len(pairs) else coo_matrix((m, m))
    _, labels = connected_components(graph, directed=False)
    original = np.flatnonzero(mask)
    order = np.argsort(labels, kind="stable")
    bounds = np.flatnonzero(np.diff(labels[order])) + 1
    clusters = []
    for members in np.split(order, bounds):
        if members.size >= params.min_cluster_points:
            clusters.append(pts[original[np.sort(members)]])
    # label blocks come out ordered by first occurrence, i.e. by each
    # component's minimal point index: canonical, traversal-independent
    return clusters


def _convex_hull(xy: np.ndarray) -> np.ndarray:
    """Monotone-chain convex hull, counter-clockwise, (H, 2)."""
    pts = np.unique(xy, axis=0)
    if pts.shape[0] <= 2:
        return pts
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    seq = [(float(x), float(y)) for x, y in pts[order]]

    def half(points):
        chain: list[tuple[float, float]] = []
        for px, py in points:
            while len(chain) >= 2:
                ox, oy = chain[-2]
                ax, ay = chain[-1][0] - ox, chain[-1][1] - oy
                if ax * (py - oy) - ay * (px - ox) > 0:
                    break
                chain.pop()
            chain.append((px, py))
        return chain

    lower = half(seq)
    upper = half(seq[::-1])
    return np.asarray(lower[:-1] + upper[:-1])


_ROBUST_MIN_POINTS = 30
_TRIM = 0.02


def fit_box(cluster_points: np.ndarray, min_dim: float = 0.05) -> OrientedBox:
    """Minimum-area rotated rectangle in BEV plus the z extent.

    Rotating-calipers over the convex hull: the optimum rectangle has a
    side collinear with a hull edge, so each edge direction is tried.
    For well-populated clusters the extents along the chosen axes are
    re-measured with trimmed quantiles, which keeps fused multi-sensor
    clusters (noise-dilated shells) from inflating the dimensions.
    Height is measured from the ground (objects rest on z=0), which keeps
    the estimate stable when low points were downsampled away.
    l >= w by convention; yaw is the direction of the l axis.
    """
    pts = np.asarray(cluster_points, dtype=np.float64)
    xy = pts[:, :2]
    hull = _convex_hull(xy)
    if hull.shape[0] < 3:
        # collinear or single point: principal direction, clamped width
        d = xy.max(axis=0) - xy.min(axis=0)
        if hull.shape[0] == 2:
            edge = hull[1] - hull[0]
            yaw = math.atan2(edge[1], edge[0])
            length = float(np.hypot(*edge))
        else:
            yaw, length = 0.0, 0.0
        cx, cy = xy.mean(axis=0) if hull.shape[0] < 2 else hull.mean(axis=0)
        cx, cy = float(cx), float(cy)
        l = max(length, min_dim)
        w = min_dim
    else:
        best_area = np.inf
        best = None
        edges = np.roll(hull, -1, axis=0) - hull
        for e in edges:
            norm = np.hypot(e[0], e[1])
            if norm < 1e-12:
                continue
            c, s = e[0] / norm, e[1] / norm
            u = hull @ np.array([c, s])
            v = hull @ np.array([-s, c])
            du, dv = u.max() - u.min(), v.max() - v.min()
            area = du * dv
            if area < best_area - 1e-12:
                best_area = area
                best = (c, s)
        c, s = best
        u = xy @ np.array([c, s])
        v = xy @ np.array([-s, c])
        if xy.shape[0] >= _ROBUST_MIN_POINTS:
            u_lo, u_hi = np.quantile(u, (_TRIM, 1.0 - _TRIM))
            v_lo, v_hi = np.quantile(v, (_TRIM, 1.0 - _TRIM))
        else:
            u_lo, u_hi = u.min(), u.max()
            v_lo, v_hi = v.min(), v.max()
        du, dv = u_hi - u_lo, v_hi - v_lo
        cu, cv = 0.5 * (u_hi + u_lo), 0.5 * (v_hi + v_lo)
        cx = cu * c - cv * s
        cy = cu * s + cv * c
        if du >= dv:
            l, w, yaw = max(du, min_dim), max(dv, min_dim), math.atan2(s, c)
        else:
            l, w, yaw = max(dv, min_dim), max(du, min_dim), math.atan2(c, -s)
    if pts.shape[0] >= _ROBUST_MIN_POINTS:
        z_top = np.quantile(pts[:, 2], 1.0 - _TRIM)
    else:
        z_top = pts[:, 2].max()
    h = max(float(z_top), min_dim)
    return OrientedBox(np.array([cx, cy, 0.5 * h]), float(l), float(w), h, yaw)


def classify(box: OrientedBox, n_points: int,
             params: DetectorParams) -> tuple[ObjectClass, float] | None:
    """Dimension-gate classification with fixed precedence.

    Score combines how centered the dimensions sit in the gate with the
    supporting point count; both terms are monotone and bounded, so the
    score stays in [0, 1].  Returns None when no gate matches.
    """
    dims = (box.l, box.w, box.h)
    for cls, gate in params.gates.items():
        if all(lo <= d <= hi for d, (lo, hi) in zip(dims, gate)):
            margins = [
                min(d - lo, hi - d) / (0.5 * (hi - lo))
                for d, (lo, hi) in zip(dims, gate)
            ]
            fit = float(np.clip(np.mean(margins), 0.0, 1.0))
            support = 1.0 - math.exp(-n_points / 50.0)
            return cls, 0.5 * fit + 0.5 * support
    return None


def detect_frame(frame: PointCloudFrame, params: DetectorParams) -> list[Detection]:
    """Cluster, fit and classify one preprocessed frame."""
    # largest BEV extent any gate can accept: the axis-aligned span of a
    # rotated footprint never exceeds its diagonal, so bigger clusters
    # (building faces) are rejected before the box fit
    max_span = max(math.hypot(g[0][1], g[1][1]) for g in params.gates.values())
    dets = []
    for pts in cluster(frame, params):
        span = pts[:, :2].max(axis=0) - pts[:, :2].min(axis=0)
        if span.max() > max_span:
            continue
        box = fit_box(pts)
        result = classify(box, len(pts), params)
        if result is None:
            continue
        cls, score = result
        dets.append(Detection(box=box, cls=cls, score=score,
                              frame_index=frame.frame_index, n_points=len(pts)))
    return dets


def filter_detections(dets: list[Detection], roi: RoiSpec,
                      params: DetectorParams) -> list[Detection]:
    """Drop detections outside the ROI, then greedy score-descending
    suppression of duplicates overlapping a kept detection."""
    inside = [
        d for d in dets
        if roi.x_range[0] <= d.box.center[0] <= roi.x_range[1]
        and roi.y_range[0] <= d.box.center[1] <= roi.y_range[1]
    ]
    inside.sort(key=lambda d: -d.score)
    kept: list[Detection] = []
    for d in inside:
        if all(bev_iou(d.box, k.box) <= params.duplicate_iou for k in kept):
            kept.append(d)
    return kept
