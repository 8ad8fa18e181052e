# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled nearest-hit ray caster (hot kernel of the LiDAR simulator)."""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, cos, fabs, sin

cnp.import_array()

cdef double _EPS = 1e-9


cdef inline double _slab1(double o, double d, double lo, double hi,
                          double* tmin, double* tmax) noexcept nogil:
    # intersect one slab; returns 0.0 on definite miss, 1.0 otherwise
    cdef double inv, t0, t1, tmp
    if fabs(d) <= _EPS:
        if o < lo or o > hi:
            return 0.0
        return 1.0
    inv = 1.0 / d
    t0 = (lo - o) * inv
    t1 = (hi - o) * inv
    if t0 > t1:
        tmp = t0; t0 = t1; t1 = tmp
    if t0 > tmin[0]:
        tmin[0] = t0
    if t1 < tmax[0]:
        tmax[0] = t1
    if tmin[0] > tmax[0]:
        return 0.0
    return 1.0


cdef inline double _box_hit(double ox, double oy, double oz,
                            double dx, double dy, double dz,
                            double hx, double hy, double hz) noexcept nogil:
    cdef double tmin = -INFINITY
    cdef double tmax = INFINITY
    if _slab1(ox, dx, -hx, hx, &tmin, &tmax) == 0.0:
        return INFINITY
    if _slab1(oy, dy, -hy, hy, &tmin, &tmax) == 0.0:
        return INFINITY
    if _slab1(oz, dz, -hz, hz, &tmin, &tmax) == 0.0:
        return INFINITY
    if tmax <= _EPS:
        return INFINITY
    if tmin > _EPS:
        return tmin
    return _EPS


def cast_rays(cnp.ndarray[cnp.float64_t, ndim=1] origin,
              cnp.ndarray[cnp.float64_t, ndim=2] dirs,
              double max_range,
              double ground_extent,
              cnp.ndarray[cnp.float64_t, ndim=2] aabbs,
              cnp.ndarray[cnp.float64_t, ndim=2] obbs,
              double ground_refl,
              cnp.ndarray[cnp.float64_t, ndim=1] aabb_refl,
              cnp.ndarray[cnp.float64_t, ndim=1] obb_refl):
    """Nearest-hit distances and surface reflectance per ray.

    Mirrors lidarmot._raycast_np.cast_rays; see there for the contract.
    """
    cdef Py_ssize_t n = dirs.shape[0]
    cdef Py_ssize_t nb = aabbs.shape[0]
    cdef Py_ssize_t nm = obbs.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out_t = np.full(n, np.inf)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out_r = np.zeros(n)

    # precompute box-frame rotations for the oriented boxes
    cdef cnp.ndarray[cnp.float64_t, ndim=1] cy_ = np.cos(obbs[:, 6]) if nm else np.empty(0)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] sy_ = np.sin(obbs[:, 6]) if nm else np.empty(0)

    cdef double ox = origin[0], oy = origin[1], oz = origin[2]
    cdef double dx, dy, dz, t, best, refl
    cdef double c, s, lox, loy, loz, ldx, ldy, px, py
    cdef Py_ssize_t i, b, m

    with nogil:
        for i in range(n):
            dx = dirs[i, 0]; dy = dirs[i, 1]; dz = dirs[i, 2]
            best = INFINITY
            refl = 0.0
            if ground_extent > 0 and fabs(dz) > _EPS:
                t = -oz / dz
                if _EPS < t <= max_range and t < best:
                    px = ox + t * dx
                    py = oy + t * dy
                    if fabs(px) <= ground_extent and fabs(py) <= ground_extent:
                        best = t
                        refl = ground_refl
            for b in range(nb):
                t = _box_hit(ox - 0.5 * (aabbs[b, 0] + aabbs[b, 3]),
                             oy - 0.5 * (aabbs[b, 1] + aabbs[b, 4]),
                             oz - 0.5 * (aabbs[b, 2] + aabbs[b, 5]),
                             dx, dy, dz,
                             0.5 * (aabbs[b, 3] - aabbs[b, 0]),
                             0.5 * (aabbs[b, 4] - aabbs[b, 1]),
                             0.5 * (aabbs[b, 5] - aabbs[b, 2]))
                if t <= max_range and t < best:
                    best = t
                    refl = aabb_refl[b]
            for m in range(nm):
                c = cy_[m]; s = sy_[m]
                lox = ox - obbs[m, 0]
                loy = oy - obbs[m, 1]
                loz = oz - obbs[m, 2]
                ldx = c * dx + s * dy
                ldy = -s * dx + c * dy
                t = _box_hit(c * lox + s * loy, -s * lox + c * loy, loz,
                             ldx, ldy, dz,
                             0.5 * obbs[m, 3], 0.5 * obbs[m, 4], 0.5 * obbs[m, 5])
                if t <= max_range and t < best:
                    best = t
                    refl = obb_refl[m]
            out_t[i] = best
            out_r[i] = refl

    return out_t, out_r
