"""Benchmark the compiled ray-casting kernel against the numpy fallback.

Runs one full-resolution scan of a realistic intersection scene with both
backends, checks the outputs agree, and prints rays/second for each.

    python3 benchmarks/bench_raycast.py [--repeats 5] [--azimuth-steps 1024]
"""

import argparse
import time

import numpy as np

from lidarmot import _raycast_np
from lidarmot.raycast import BACKEND
from lidarmot.scenario import build_scenario, cast_scan


def run(scene, sensor, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        frame = cast_scan(scene, sensor, t=1.0, frame_index=20)
        best = min(best, time.perf_counter() - t0)
    return best, frame


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--azimuth-steps", type=int, default=1024)
    ap.add_argument("--layers", type=int, default=64)
    args = ap.parse_args()

    config = {
        "layout": "A", "n_actors": 12, "seed": 7,
        "sensor": {"azimuth_steps": args.azimuth_steps, "layers": args.layers},
    }
    scene = build_scenario(config)
    sensor = scene.sensors[0]
    n_rays = sensor.layers * sensor.azimuth_steps
    print(f"scene: {len(scene.actors)} actors, {len(scene.buildings)} buildings, "
          f"{n_rays} rays per scan, best of {args.repeats}")

    if BACKEND != "compiled":
        print("compiled extension not available; benchmarking fallback only")
        t, _ = run(scene, sensor, args.repeats)
        print(f"python   : {t * 1e3:8.1f} ms  ({n_rays / t / 1e6:6.2f} Mray/s)")
        return

    t_c, frame_c = run(scene, sensor, args.repeats)

    import lidarmot.raycast as rc
    impl, backend = rc._impl, rc.BACKEND
    rc._impl, rc.BACKEND = _raycast_np, "python"
    try:
        t_p, frame_p = run(scene, sensor, args.repeats)
    finally:
        rc._impl, rc.BACKEND = impl, backend

    if len(frame_c) != len(frame_p) or not np.allclose(
            frame_c.points, frame_p.points, atol=1e-9):
        raise SystemExit("backend outputs disagree")

    print(f"compiled : {t_c * 1e3:8.1f} ms  ({n_rays / t_c / 1e6:6.2f} Mray/s)")
    print(f"python   : {t_p * 1e3:8.1f} ms  ({n_rays / t_p / 1e6:6.2f} Mray/s)")
    print(f"speedup  : {t_p / t_c:8.2f}x")


if __name__ == "__main__":
    main()
