"""Vectorized numpy ray caster, the fallback when the compiled kernel is absent.

Same contract as the Cython extension `_raycast`: nearest hit per ray
against a bounded ground plane, axis-aligned building boxes and upright
yaw-rotated actor boxes.
"""

from __future__ import annotations

import numpy as np

_EPS = 1e-9


def cast_rays(origin, dirs, max_range, ground_extent, aabbs, obbs,
              ground_refl, aabb_refl, obb_refl):
    """Nearest-hit distances and surface reflectance per ray.

    origin: (3,); dirs: (N, 3) unit vectors in world frame.
    ground_extent <= 0 disables the ground plane.
    aabbs: (B, 6) min/max corners.  obbs: (M, 7) cx,cy,cz,l,w,h,yaw.
    Returns (t, refl) with t = +inf where nothing is hit within max_range.
    """
    origin = np.asarray(origin, dtype=np.float64)
    dirs = np.asarray(dirs, dtype=np.float64)
    n = dirs.shape[0]
    best_t = np.full(n, np.inf)
    best_r = np.zeros(n)

    if ground_extent > 0:
        dz = dirs[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = -origin[2] / dz
        hit = (np.abs(dz) > _EPS) & (t > _EPS) & (t <= max_range)
        px = origin[0] + t * dirs[:, 0]
        py = origin[1] + t * dirs[:, 1]
        hit &= (np.abs(px) <= ground_extent) & (np.abs(py) <= ground_extent)
        upd = hit & (t < best_t)
        best_t[upd] = t[upd]
        best_r[upd] = ground_refl

    aabbs = np.asarray(aabbs, dtype=np.float64).reshape(-1, 6)
    for b in range(aabbs.shape[0]):
        lo, hi = aabbs[b, :3], aabbs[b, 3:]
        t = _slab(origin, dirs, lo, hi)
        upd = (t <= max_range) & (t < best_t)
        best_t[upd] = t[upd]
        best_r[upd] = aabb_refl[b]

    obbs = np.asarray(obbs, dtype=np.float64).reshape(-1, 7)
    for m in range(obbs.shape[0]):
        cx, cy, cz, l, w, h, yaw = obbs[m]
        c, s = np.cos(yaw), np.sin(yaw)
        # express ray in the box frame
        ox, oy, oz = origin[0] - cx, origin[1] - cy, origin[2] - cz
        o_local = np.array([c * ox + s * oy, -s * ox + c * oy, oz])
        d_local = np.empty_like(dirs)
        d_local[:, 0] = c * dirs[:, 0] + s * dirs[:, 1]
        d_local[:, 1] = -s * dirs[:, 0] + c * dirs[:, 1]
        d_local[:, 2] = dirs[:, 2]
        half = np.array([0.5 * l, 0.5 * w, 0.5 * h])
        t = _slab(o_local, d_local, -half, half)
        upd = (t <= max_range) & (t < best_t)
        best_t[upd] = t[upd]
        best_r[upd] = obb_refl[m]

    return best_t, best_r


def _slab(origin, dirs, lo, hi):
    """Entry distance of rays into an axis-aligned box, +inf on miss."""
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
    t0 = (lo - origin) * inv
    t1 = (hi - origin) * inv
    # where a direction component is ~0, the ray is parallel to that slab:
    # inside -> (-inf, inf), outside -> empty
    par = np.abs(dirs) <= _EPS
    inside = (origin >= lo) & (origin <= hi)
    tmin = np.where(par, np.where(inside, -np.inf, np.inf), np.minimum(t0, t1))
    tmax = np.where(par, np.where(inside, np.inf, -np.inf), np.maximum(t0, t1))
    tnear = tmin.max(axis=1)
    tfar = tmax.min(axis=1)
    t = np.where((tnear <= tfar) & (tfar > _EPS), np.maximum(tnear, _EPS), np.inf)
    return t
