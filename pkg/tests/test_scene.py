import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coopsense.scene import (CLASSES, BoundingBox, LidarConfig, ObjectSpec, Scenario, extract_all_objects,
                             extract_object_points, load_scenario, make_cav, make_default_scenario,
                             make_object, random_scenario, save_scenario, scenario_from_dict,
                             scenario_to_dict, simulate_lidar, surface_area)

FAR_ROI = BoundingBox((0, 0, 2), (200, 200, 10))


def scene(cavs, objects):
    return Scenario(tuple(cavs), tuple(objects), (0, -20, 6), FAR_ROI)


def on_face(points, box, axis, side):
    value = box.lower[axis] if side < 0 else box.upper[axis]
    return np.isclose(points[:, axis], value, atol=1e-9)


def test_box_validation():
    with pytest.raises(ValueError):
        BoundingBox((0, 0, 0), (1, 0, 1))
    with pytest.raises(ValueError):
        BoundingBox((0, np.nan, 0), (1, 1, 1))
    box = BoundingBox((1, 2, 3), (2, 4, 6))
    assert np.allclose(box.lower, [0, 0, 0]) and np.allclose(box.upper, [2, 4, 6])
    assert surface_area(box) == pytest.approx(2 * (8 + 12 + 24))


def test_scenario_invariants():
    cav = make_cav(0, 0, 0)
    with pytest.raises(ValueError, match="RoI"):
        Scenario((cav,), (make_object(0, "car", 500, 0),), (0, 0, 5), FAR_ROI)
    with pytest.raises(ValueError):
        Scenario((), (make_object(0, "car", 5, 0),), (0, 0, 5), FAR_ROI)
    with pytest.raises(ValueError):
        make_object(0, "bus", 5, 0)
    with pytest.raises(ValueError):
        LidarConfig(azimuth_steps=3)


def test_single_box_hits_only_nearest_face():
    cav = make_cav(0, 0, 0)
    obj = make_object(0, "car", 15, 0)
    sc = scene([cav], [obj])
    pts = extract_object_points(simulate_lidar(sc, cav), obj.box)
    assert len(pts) > 50
    # sensor sits above the car top, so the back face and the top are visible
    visible = on_face(pts, obj.box, 0, -1) | on_face(pts, obj.box, 2, +1)
    assert visible.all()
    assert on_face(pts, obj.box, 0, -1).sum() > 0
    assert not on_face(pts, obj.box, 0, +1).any()


def test_object_behind_cav_is_occluded():
    ego = make_cav(0, 0, 0)
    blocker = make_cav(1, 6, 0, lengths=(4.5, 3.0, 3.5))
    ped = make_object(0, "pedestrian", 12.0, 0)
    sc = scene([ego, blocker], [ped])
    assert len(extract_object_points(simulate_lidar(sc, ego), ped.box)) == 0
    # the blocker itself sees the pedestrian
    assert len(extract_object_points(simulate_lidar(sc, blocker), ped.box)) > 0


def test_opposite_views_hit_opposite_faces():
    a = make_cav(0, 0, 0)
    b = make_cav(1, 30, 0)
    truck = make_object(0, "truck", 15, 0)
    sc = scene([a, b], [truck])
    pa = extract_object_points(simulate_lidar(sc, a), truck.box)
    pb = extract_object_points(simulate_lidar(sc, b), truck.box)
    assert on_face(pa, truck.box, 0, -1).sum() > 0.5 * len(pa)
    assert on_face(pb, truck.box, 0, +1).sum() > 0.5 * len(pb)
    assert not on_face(pa, truck.box, 0, +1).any()
    assert not on_face(pb, truck.box, 0, -1).any()


def test_points_within_range_and_on_surfaces():
    sc = make_default_scenario(0)
    cfg = LidarConfig(azimuth_steps=240, max_range=30.0)
    for cav in sc.cavs:
        cloud = simulate_lidar(sc, cav, cfg)
        r = np.linalg.norm(cloud - np.asarray(cav.sensor_origin), axis=1)
        assert np.all(r <= 30.0 + 1e-9)
        # every hit is on the ground or on the surface of some box
        boxes = [o.box for o in sc.objects] + [c.body_box for c in sc.cavs if c.id != cav.id]
        ground = np.isclose(cloud[:, 2], sc.ground_z)
        surf = np.zeros(len(cloud), bool)
        for box in boxes:
            inside = np.all((cloud >= box.lower - 1e-9) & (cloud <= box.upper + 1e-9), axis=1)
            face = np.any(np.isclose(cloud, box.lower, atol=1e-9) | np.isclose(cloud, box.upper, atol=1e-9), axis=1)
            surf |= inside & face
        assert np.all(ground | surf)


def test_ray_hits_match_brute_force_marching():
    # independent check: march each ray in small steps and find the first box entry
    cav = make_cav(0, 0, 0)
    obj = make_object(0, "truck", 12, 1.0)
    sc = scene([cav], [obj])
    cfg = LidarConfig(azimuth_steps=64, elevation_angles=(-0.05, -0.1, 0.0))
    cloud = simulate_lidar(sc, cav, cfg)
    origin = np.asarray(cav.sensor_origin)
    hits_obj = extract_object_points(cloud, obj.box)
    dirs = (hits_obj - origin) / np.linalg.norm(hits_obj - origin, axis=1)[:, None]
    for d, hit in zip(dirs, hits_obj):
        t = np.arange(0, 40, 0.005)
        p = origin + t[:, None] * d
        inside = np.all((p >= obj.box.lower) & (p <= obj.box.upper), axis=1)
        first = t[np.argmax(inside)]
        assert abs(first - np.linalg.norm(hit - origin)) < 0.01


def test_shared_face_point_goes_to_lower_index():
    a = make_object(0, "car", 0, 0)
    b = BoundingBox((4.5, 0, 0.8), (4.5, 1.9, 1.6))
    objs = [a, ObjectSpec(1, "car", b)]
    cloud = np.array([[2.25, 0.0, 0.5]])
    parts = extract_all_objects(cloud, objs)
    assert len(parts[0]) == 1 and len(parts[1]) == 0


def test_default_scenario():
    sc = make_default_scenario(0)
    assert sc.n_cavs == 4 and sc.n_objects == 6
    assert {o.class_label for o in sc.objects} == set(CLASSES)
    assert [o.class_label for o in sc.objects].count("truck") == 2
    assert [o.class_label for o in sc.objects].count("car") == 2
    for o in sc.objects:
        assert o.box.intersects(sc.roi)
    other = make_default_scenario(1)
    assert other.objects[0].box.center != sc.objects[0].box.center
    assert make_default_scenario(1) == other


@given(st.integers(0, 10_000))
@settings(max_examples=25, deadline=None)
def test_random_scenarios_are_valid(seed):
    sc = random_scenario(np.random.default_rng(seed))
    boxes = [c.body_box for c in sc.cavs] + [o.box for o in sc.objects]
    for i in range(len(boxes)):
        for j in range(i + 1, len(boxes)):
            assert not boxes[i].intersects(boxes[j])


def test_json_roundtrip(tmp_path):
    sc = make_default_scenario(3)
    path = tmp_path / "scene.json"
    save_scenario(sc, path, params={"epsilon": 20000})
    loaded, params = load_scenario(path)
    assert loaded == sc and params == {"epsilon": 20000}
    assert scenario_from_dict(scenario_to_dict(sc)) == sc


def test_json_errors(tmp_path):
    with pytest.raises(FileNotFoundError, match="nowhere.json"):
        load_scenario(tmp_path / "nowhere.json")
    doc = scenario_to_dict(make_default_scenario(0))
    del doc["rsu_position"]
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(ValueError, match="rsu_position"):
        load_scenario(path)
