"""Simulation: ray casting oracles, occlusion, actor kinematics, layouts."""

import math

import numpy as np
import pytest

from lidarmot import raycast
from lidarmot._raycast_np import cast_rays as cast_rays_py
from lidarmot.geometry import ObjectClass, Pose, ValidationError
from lidarmot.scenario import (Actor, CLASS_REFLECTANCE, DEFAULT_DIMS,
                               GROUND_REFLECTANCE, Scene, SensorSpec,
                               build_scenario, build_sensors, cast_scan,
                               export_gt, generate_actors, step_actors)


def empty_scene(extent=100.0, buildings=None, actors=None, sensors=None):
    return Scene(
        ground_extent=extent,
        buildings=np.empty((0, 6)) if buildings is None else np.asarray(buildings),
        sensors=sensors or [],
        actors=actors or [],
    )


def simple_sensor(x=0.0, y=0.0, z=5.0, yaw=0.0, pitch=0.0, **kw):
    return SensorSpec(id=1, pose=Pose.from_euler(yaw=yaw, pitch=pitch,
                                                 translation=(x, y, z)), **kw)


class TestRaycastKernels:
    def test_ground_plane_analytic_distance(self):
        # from height 2, a ray at 45 degrees down hits the ground at 2*sqrt(2)
        origin = np.array([0.0, 0.0, 2.0])
        dirs = np.array([[1.0, 0.0, -1.0]]) / math.sqrt(2.0)
        t, r = raycast.cast_rays(origin, dirs, 100.0, 50.0, np.empty((0, 6)),
                                 np.empty((0, 7)), 0.2, np.empty(0), np.empty(0))
        assert t[0] == pytest.approx(2.0 * math.sqrt(2.0), abs=1e-9)
        assert r[0] == pytest.approx(0.2)

    def test_upward_ray_misses(self):
        t, _ = raycast.cast_rays(np.array([0.0, 0.0, 2.0]),
                                 np.array([[0.0, 0.0, 1.0]]), 100.0, 50.0,
                                 np.empty((0, 6)), np.empty((0, 7)),
                                 0.2, np.empty(0), np.empty(0))
        assert np.isinf(t[0])

    def test_ground_extent_limits_hits(self):
        # a shallow ray lands beyond the ground plane edge: no return
        origin = np.array([0.0, 0.0, 1.0])
        dirs = np.array([[1.0, 0.0, -0.01]])
        dirs = dirs / np.linalg.norm(dirs)
        t, _ = raycast.cast_rays(origin, dirs, 500.0, 20.0, np.empty((0, 6)),
                                 np.empty((0, 7)), 0.2, np.empty(0), np.empty(0))
        assert np.isinf(t[0])

    def test_aabb_front_face_distance(self):
        origin = np.zeros(3)
        dirs = np.array([[1.0, 0.0, 0.0]])
        aabbs = np.array([[5.0, -1.0, -1.0, 7.0, 1.0, 1.0]])
        t, r = raycast.cast_rays(origin, dirs, 100.0, 0.0, aabbs,
                                 np.empty((0, 7)), 0.2, np.array([0.4]), np.empty(0))
        assert t[0] == pytest.approx(5.0, abs=1e-9)
        assert r[0] == pytest.approx(0.4)

    def test_obb_rotated_hit_distance(self):
        # box of half-length 1 rotated 45 degrees; ray along +x from origin
        # hits the corner-forward face at cx - sqrt(2)/2 * l
        obbs = np.array([[4.0, 0.0, 0.0, 2.0, 2.0, 2.0, 0.25 * math.pi]])
        t, r = raycast.cast_rays(np.zeros(3), np.array([[1.0, 0.0, 0.0]]),
                                 100.0, 0.0, np.empty((0, 6)), obbs,
                                 0.2, np.empty(0), np.array([0.8]))
        assert t[0] == pytest.approx(4.0 - math.sqrt(2.0), abs=1e-9)
        assert r[0] == pytest.approx(0.8)

    def test_occlusion_nearest_surface_wins(self):
        origin = np.zeros(3)
        dirs = np.array([[1.0, 0.0, 0.0]])
        aabbs = np.array([[10.0, -1.0, -1.0, 12.0, 1.0, 1.0]])
        obbs = np.array([[5.0, 0.0, 0.0, 2.0, 2.0, 2.0, 0.0]])
        t, r = raycast.cast_rays(origin, dirs, 100.0, 0.0, aabbs, obbs,
                                 0.2, np.array([0.4]), np.array([0.8]))
        assert t[0] == pytest.approx(4.0, abs=1e-9)
        assert r[0] == pytest.approx(0.8)  # the near box, not the far one

    def test_max_range_cutoff(self):
        aabbs = np.array([[50.0, -1.0, -1.0, 52.0, 1.0, 1.0]])
        t, _ = raycast.cast_rays(np.zeros(3), np.array([[1.0, 0.0, 0.0]]),
                                 30.0, 0.0, aabbs, np.empty((0, 7)),
                                 0.2, np.array([0.4]), np.empty(0))
        assert np.isinf(t[0])

    def test_ray_parallel_to_slab_inside(self):
        # ray running along the box axis while inside its y/z slabs
        aabbs = np.array([[2.0, -1.0, -1.0, 4.0, 1.0, 1.0]])
        t, _ = raycast.cast_rays(np.zeros(3), np.array([[1.0, 0.0, 0.0]]),
                                 100.0, 0.0, aabbs, np.empty((0, 7)),
                                 0.2, np.array([0.4]), np.empty(0))
        assert t[0] == pytest.approx(2.0, abs=1e-9)

    def test_backends_agree(self):
        rng = np.random.default_rng(42)
        origin = np.array([1.0, -2.0, 6.0])
        dirs = rng.normal(size=(500, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        aabbs = np.array([[5.0, 5.0, 0.0, 12.0, 12.0, 8.0],
                          [-15.0, -9.0, 0.0, -6.0, -2.0, 4.0]])
        obbs = np.array([[3.0, -4.0, 0.8, 4.5, 1.8, 1.6, 0.7],
                         [-5.0, 6.0, 0.9, 8.0, 2.5, 1.8, -1.2]])
        args = (origin, dirs, 80.0, 40.0, aabbs, obbs,
                0.2, np.array([0.4, 0.4]), np.array([0.8, 0.7]))
        t_sel, r_sel = raycast.cast_rays(*args)
        t_py, r_py = cast_rays_py(*args)
        assert np.allclose(t_sel, t_py, atol=1e-9, equal_nan=True)
        assert np.allclose(r_sel, r_py, atol=1e-12)


class TestSensorSpec:
    def test_ray_directions_unit_and_count(self):
        s = simple_sensor(layers=8, azimuth_steps=16)
        dirs = s.ray_directions()
        assert dirs.shape == (8 * 16, 3)
        assert np.allclose(np.linalg.norm(dirs, axis=1), 1.0, atol=1e-12)

    def test_vertical_fov_span(self):
        s = simple_sensor(layers=3, azimuth_steps=4, vertical_fov=math.radians(30))
        el = np.arcsin(s.ray_directions()[:, 2])
        assert el.min() == pytest.approx(-math.radians(15), abs=1e-9)
        assert el.max() == pytest.approx(math.radians(15), abs=1e-9)

    def test_invalid_spec_rejected(self):
        with pytest.raises(ValidationError):
            simple_sensor(layers=0)


class TestActorMotion:
    def test_position_along_segment_oracle(self):
        a = Actor(id=1, cls=ObjectClass.CAR, dims=(4.5, 1.8, 1.6),
                  waypoints=[[0.0, 0.0], [10.0, 0.0]], speeds=[2.0])
        pos, yaw, vel, acc = a.state_at(3.0)
        assert np.allclose(pos, [6.0, 0.0, 0.8])
        assert yaw == pytest.approx(0.0)
        assert np.allclose(vel, [2.0, 0.0, 0.0])
        assert np.allclose(acc, 0.0)

    def test_spawn_time_shift(self):
        a = Actor(id=1, cls=ObjectClass.CAR, dims=(4.5, 1.8, 1.6),
                  waypoints=[[0.0, 0.0], [10.0, 0.0]], speeds=[2.0], spawn_time=1.5)
        assert a.state_at(1.0) is None
        pos, _, _, _ = a.state_at(2.5)
        assert pos[0] == pytest.approx(2.0)

    def test_inactive_after_path_end(self):
        a = Actor(id=1, cls=ObjectClass.PEDESTRIAN, dims=(0.5, 0.5, 1.8),
                  waypoints=[[0.0, 0.0], [3.0, 0.0]], speeds=[1.0])
        assert a.state_at(3.0) is not None
        assert a.state_at(3.01) is None

    def test_multi_segment_turn(self):
        a = Actor(id=1, cls=ObjectClass.BICYCLE, dims=(1.8, 0.6, 1.7),
                  waypoints=[[0.0, 0.0], [4.0, 0.0], [4.0, 4.0]], speeds=[2.0, 1.0])
        pos, yaw, vel, _ = a.state_at(3.0)  # 2 s on segment 1, 1 s on segment 2
        assert np.allclose(pos[:2], [4.0, 1.0])
        assert yaw == pytest.approx(0.5 * math.pi)
        assert np.allclose(vel[:2], [0.0, 1.0])

    def test_gt_velocity_matches_finite_difference(self):
        a = Actor(id=1, cls=ObjectClass.CAR, dims=(4.5, 1.8, 1.6),
                  waypoints=[[0.0, 0.0], [30.0, 0.0]], speeds=[7.3])
        eps = 1e-5
        p1 = a.state_at(2.0 - eps)[0]
        p2 = a.state_at(2.0 + eps)[0]
        fd = (p2 - p1) / (2 * eps)
        assert np.allclose(a.state_at(2.0)[2], fd, atol=1e-6)

    def test_invalid_actor_rejected(self):
        with pytest.raises(ValidationError):
            Actor(id=1, cls=ObjectClass.CAR, dims=(4.5, 1.8, 1.6),
                  waypoints=[[0.0, 0.0]], speeds=[])


class TestStepActors:
    def test_box_center_at_half_height(self):
        a = Actor(id=1, cls=ObjectClass.TRUCK, dims=DEFAULT_DIMS[ObjectClass.TRUCK],
                  waypoints=[[0.0, 0.0], [10.0, 0.0]], speeds=[5.0])
        rec = step_actors(empty_scene(actors=[a]), 0.0, frame_index=7)[0]
        assert rec.frame_index == 7
        assert rec.box.center[2] == pytest.approx(1.6)  # half of 3.2
        assert rec.cls is ObjectClass.TRUCK

    def test_inactive_actor_excluded(self):
        a = Actor(id=1, cls=ObjectClass.CAR, dims=(4.5, 1.8, 1.6),
                  waypoints=[[0.0, 0.0], [1.0, 0.0]], speeds=[1.0], spawn_time=5.0)
        assert step_actors(empty_scene(actors=[a]), 0.0) == []

    def test_export_gt_covers_range(self):
        a = Actor(id=1, cls=ObjectClass.CAR, dims=(4.5, 1.8, 1.6),
                  waypoints=[[0.0, 0.0], [100.0, 0.0]], speeds=[5.0])
        recs = export_gt(empty_scene(actors=[a]), range(10), rate=20.0)
        assert [r.frame_index for r in recs] == list(range(10))


class TestCastScan:
    def test_points_in_sensor_frame(self):
        # sensor looking straight down the x axis from 5 m above a car
        sensor = simple_sensor(x=-20.0, z=5.0, layers=16, azimuth_steps=64)
        car = Actor(id=1, cls=ObjectClass.CAR, dims=(4.5, 1.8, 1.6),
                    waypoints=[[0.0, 0.0], [10.0, 0.0]], speeds=[1.0])
        scene = empty_scene(extent=60.0, actors=[car])
        frame = cast_scan(scene, sensor, 0.0, frame_index=3)
        assert frame.sensor_id == 1 and frame.frame_index == 3
        assert len(frame) > 0
        # ranges must respect max_range; world z of any point >= ground
        ranges = np.linalg.norm(frame.points[:, :3], axis=1)
        assert (ranges <= sensor.max_range + 1e-9).all()
        world = sensor.pose.apply(frame.points[:, :3])
        assert (world[:, 2] >= -1e-9).all()

    def test_car_returns_carry_car_reflectance(self):
        sensor = simple_sensor(x=-15.0, z=4.0, layers=32, azimuth_steps=256)
        car = Actor(id=1, cls=ObjectClass.CAR, dims=(4.5, 1.8, 1.6),
                    waypoints=[[0.0, 0.0], [10.0, 0.0]], speeds=[1.0])
        frame = cast_scan(empty_scene(extent=60.0, actors=[car]), sensor, 0.0)
        refl = set(np.round(np.unique(frame.points[:, 3]), 6))
        assert CLASS_REFLECTANCE[ObjectClass.CAR] in refl
        assert GROUND_REFLECTANCE in refl

    def test_occluded_actor_yields_no_returns(self):
        # a wall between sensor and pedestrian blocks every ray
        sensor = simple_sensor(x=-20.0, z=2.0, layers=32, azimuth_steps=256)
        ped = Actor(id=1, cls=ObjectClass.PEDESTRIAN, dims=(0.5, 0.5, 1.8),
                    waypoints=[[0.0, 0.0], [5.0, 0.0]], speeds=[0.5])
        wall = [[-10.0, -8.0, 0.0, -9.0, 8.0, 10.0]]
        frame = cast_scan(empty_scene(extent=60.0, buildings=wall, actors=[ped]),
                          sensor, 0.0)
        refl = np.unique(frame.points[:, 3])
        assert CLASS_REFLECTANCE[ObjectClass.PEDESTRIAN] not in np.round(refl, 6)

    def test_deterministic(self):
        sensor = simple_sensor(layers=8, azimuth_steps=64)
        scene = empty_scene(extent=30.0)
        a = cast_scan(scene, sensor, 0.0)
        b = cast_scan(scene, sensor, 0.0)
        assert np.array_equal(a.points, b.points)


class TestLayouts:
    def test_a_has_8_elevated_sensors(self):
        sensors = build_sensors("A")
        assert len(sensors) == 8
        assert all(s.pose.translation[2] == pytest.approx(6.0) for s in sensors)
        # pairwise at 4 distinct positions
        positions = {tuple(np.round(s.pose.translation[:2], 3)) for s in sensors}
        assert len(positions) == 4

    def test_b_relocates_one_position(self):
        pa = {tuple(s.pose.translation[:2]) for s in build_sensors("A")}
        pb = {tuple(s.pose.translation[:2]) for s in build_sensors("B")}
        assert len(pa ^ pb) == 2  # one position moved, the rest shared

    def test_e_is_low_and_horizontal(self):
        sensors = build_sensors("E")
        assert len(sensors) == 4
        for s in sensors:
            assert s.pose.translation[2] == pytest.approx(2.0)
            # horizontal: local +z stays +z in the world
            assert s.pose.rotation[2, 2] == pytest.approx(1.0)

    def test_sensors_aim_at_center(self):
        for s in build_sensors("A"):
            fwd = s.pose.rotation[:, 0]  # local +x in world coordinates
            to_center = -s.pose.translation
            cos = np.dot(fwd, to_center) / (np.linalg.norm(fwd) * np.linalg.norm(to_center))
            assert cos > 0.9

    def test_unknown_layout_rejected(self):
        with pytest.raises(ValidationError):
            build_sensors("Z")


class TestGenerateActors:
    def test_all_five_classes_present(self):
        actors = generate_actors("A", 10, 60.0, seed=0)
        classes = {a.cls for a in actors}
        assert classes == set(ObjectClass)

    def test_actor_count_and_unique_ids(self):
        actors = generate_actors("A", 14, 60.0, seed=1)
        assert len(actors) == 14
        assert len({a.id for a in actors}) == 14

    def test_parallel_corridor_separation(self):
        # concurrent actors on parallel corridors stay separated by more
        # than the detector cluster radius plus both half-widths; crossing
        # corridors can only touch transiently, checked separately below
        actors = generate_actors("A", 12, 60.0, seed=3)

        def axis(a):
            return "h" if a.waypoints[0][1] == a.waypoints[1][1] else "v"

        for t in np.arange(0.0, 60.0, 1.0):
            states = [(a, a.state_at(t)) for a in actors]
            states = [(a, s) for a, s in states if s is not None]
            for i in range(len(states)):
                for j in range(i + 1, len(states)):
                    ai, si = states[i]
                    aj, sj = states[j]
                    if axis(ai) != axis(aj):
                        continue
                    d = np.hypot(*(si[0][:2] - sj[0][:2]))
                    min_gap = 0.5 * ai.dims[1] + 0.5 * aj.dims[1] + 0.7
                    assert d > min_gap, (ai.id, aj.id, t, d)

    def test_crossing_encounters_are_transient(self):
        actors = generate_actors("A", 12, 60.0, seed=3)
        close = total = 0
        for t in np.arange(0.0, 60.0, 0.05):
            states = [a.state_at(t) for a in actors]
            pts = np.array([s[0][:2] for s in states if s is not None])
            for i in range(len(pts)):
                for j in range(i + 1, len(pts)):
                    total += 1
                    if np.hypot(*(pts[i] - pts[j])) < 1.5:
                        close += 1
        assert close / max(total, 1) < 0.02

    def test_deterministic_for_seed(self):
        a = generate_actors("A", 8, 30.0, seed=5)
        b = generate_actors("A", 8, 30.0, seed=5)
        assert all(np.array_equal(x.waypoints, y.waypoints)
                   and np.array_equal(x.speeds, y.speeds)
                   and x.spawn_time == y.spawn_time for x, y in zip(a, b))

    def test_no_cross_traffic_on_straight_road(self):
        for a in generate_actors("C", 10, 60.0, seed=0):
            if a.cls is not ObjectClass.PEDESTRIAN:
                assert a.waypoints[0][1] == a.waypoints[1][1]  # horizontal only


class TestBuildScenario:
    def test_explicit_actors_override_generation(self):
        config = {
            "layout": "A",
            "actors": [{"id": 1, "class": "car",
                        "waypoints": [[0, 0], [10, 0]], "speeds": [5.0]}],
        }
        scene = build_scenario(config)
        assert len(scene.actors) == 1
        assert scene.actors[0].dims == DEFAULT_DIMS[ObjectClass.CAR]

    def test_sensor_overrides(self):
        scene = build_scenario({"layout": "E", "sensor": {"azimuth_steps": 128}})
        assert all(s.azimuth_steps == 128 for s in scene.sensors)

    def test_duplicate_actor_ids_rejected(self):
        config = {
            "layout": "A",
            "actors": [
                {"id": 1, "class": "car", "waypoints": [[0, 0], [10, 0]], "speeds": [5.0]},
                {"id": 1, "class": "truck", "waypoints": [[0, 5], [10, 5]], "speeds": [5.0]},
            ],
        }
        with pytest.raises(ValidationError):
            build_scenario(config)
