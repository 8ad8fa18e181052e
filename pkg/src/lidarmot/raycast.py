"""Backend selection for the ray-casting kernel.

The compiled Cython extension is preferred; the vectorized numpy fallback
is used when it is missing or when LIDARMOT_RAYCAST=python is set.
Both expose the same `cast_rays` contract.
"""

from __future__ import annotations

import os

from . import _raycast_np

if os.environ.get("LIDARMOT_RAYCAST", "").lower() == "python":
    _impl = _raycast_np
    BACKEND = "python"
else:
    try:
        from . import _raycast as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        _impl = _raycast_np
        BACKEND = "python"


def cast_rays(origin, dirs, max_range, ground_extent, aabbs, obbs,
              ground_refl, aabb_refl, obb_refl):
    import numpy as np

    return _impl.cast_rays(
        np.ascontiguousarray(origin, dtype=np.float64),
        np.ascontiguousarray(dirs, dtype=np.float64),
        float(max_range),
        float(ground_extent),
        np.ascontiguousarray(aabbs, dtype=np.float64).reshape(-1, 6),
        np.ascontiguousarray(obbs, dtype=np.float64).reshape(-1, 7),
        float(ground_refl),
        np.ascontiguousarray(aabb_refl, dtype=np.float64),
        np.ascontiguousarray(obb_refl, dtype=np.float64),
    )
