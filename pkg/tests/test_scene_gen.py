import json

import numpy as np
import pytest

from conftest import half_occlusion_scene, tree_bytes
from desk import manifest_dict, write_assets
from oracles import in_convex_hull, project_pinhole
from splatsynth import quat
from splatsynth.compose import RigidTransform, merge_clouds
from splatsynth.errors import ConfigurationError, SceneError
from splatsynth.geometry import TriangleMesh
from splatsynth.raster import CameraView, render, render_silhouette
from splatsynth.scene_gen import (
    ENV_LABEL,
    HemispherePoses,
    annotate_frame,
    box_corners,
    build_scene,
    chain_nearest,
    generate,
    hemisphere_poses,
    load_manifest,
    load_pose_file,
    look_at,
    mask_bbox,
    parse_manifest,
    render_frame,
    sample_trajectory,
    scene_cloud,
)

CAM = CameraView(200.0, 200.0, 80.0, 60.0, 160, 120)


def _ring_poses(n=12, radius=0.5, z=0.3):
    t = 2 * np.pi * np.arange(n) / n
    return [look_at([radius * np.cos(a), radius * np.sin(a), z], [0, 0, 0]) for a in t]


# ------------------------------------------------------------------ manifest


def _minimal(**over):
    m = {
        "environment": {"splat": "env.ply"},
        "camera": {"fx": 100, "fy": 100, "cx": 50, "cy": 40, "width": 100, "height": 80,
                   "poses": {"kind": "hemisphere", "radius": 0.5}},
        "scenes": 1,
        "views_per_scene": 2,
        "seed": 1,
    }
    m.update(over)
    return m


def test_manifest_minimal_defaults(tmp_path):
    m = parse_manifest(_minimal(), tmp_path)
    assert m.k_keys == 4 and m.mode.kind == "static" and m.depth_scale == 0.1 and m.objects == []
    assert m.environment.splat == str((tmp_path / "env.ply").resolve())


def test_manifest_unknown_key_named(tmp_path):
    with pytest.raises(ConfigurationError, match="colour"):
        parse_manifest(_minimal(colour="red"), tmp_path)
    bad = _minimal()
    bad["camera"]["poses"]["radious"] = 1
    with pytest.raises(ConfigurationError, match="radious"):
        parse_manifest(bad, tmp_path)


@pytest.mark.parametrize("objects", [
    [{"asset": {"splat": "a.ply"}, "object_id": 1}, {"asset": {"splat": "b.ply"}, "object_id": 1}],
    [{"asset": {"splat": "a.ply"}, "object_id": 0}],
    [{"asset": {"splat": "a.ply"}, "object_id": 1, "count_min": 0}],
    [{"asset": {"splat": "a.ply"}, "object_id": 1, "count_min": 3, "count_max": 2}],
])
def test_manifest_object_invariants(tmp_path, objects):
    with pytest.raises(ConfigurationError):
        parse_manifest(_minimal(objects=objects), tmp_path)


def test_manifest_seed_required_and_ranged(tmp_path):
    m = _minimal()
    del m["seed"]
    with pytest.raises(ConfigurationError, match="seed"):
        parse_manifest(m, tmp_path)
    with pytest.raises(ConfigurationError, match="seed"):
        parse_manifest(_minimal(seed=-1), tmp_path)
    assert parse_manifest(_minimal(seed=2**64 - 1), tmp_path).seed == 2**64 - 1


def test_manifest_missing_file(tmp_path):
    with pytest.raises(ConfigurationError, match="nope.json"):
        load_manifest(tmp_path / "nope.json")


def test_physics_overrides_apply(tmp_path):
    m = parse_manifest(_minimal(physics={"friction": 0.9, "max_time": 2.0}), tmp_path)
    p = m.physics_params()
    assert p.friction == 0.9 and p.max_time == 2.0 and p.restitution == 0.1


# ------------------------------------------------------------------ poses


def test_look_at_points_at_target():
    eye, target = np.array([0.4, -0.3, 0.5]), np.array([0.05, 0.02, 0.0])
    pose = look_at(eye, target)
    r = pose.rotation_matrix
    np.testing.assert_allclose(r @ r.T, np.eye(3), atol=1e-12)
    assert np.linalg.det(r) == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(CAM.with_pose(pose).project_points(target[None])[0], [CAM.cx, CAM.cy], atol=1e-9)
    np.testing.assert_allclose(pose.inverse().translation, eye, atol=1e-12)
    # world up projects upward in the image (negative v)
    above = CAM.with_pose(pose).project_points((target + [0, 0, 0.05])[None])[0]
    assert above[1] < CAM.cy


def test_look_at_straight_down():
    pose = look_at([0, 0, 1.0], [0, 0, 0])
    np.testing.assert_allclose(pose.apply([[0, 0, 0.0]])[0], [0, 0, 1.0], atol=1e-12)


def test_hemisphere_band_and_radius():
    spec = HemispherePoses(radius=0.6, elevation_deg=(30, 60), center=(0.1, 0.0, 0.0))
    poses = hemisphere_poses(spec)
    assert len(poses) >= 10
    for p in poses:
        c = p.inverse().translation - np.array(spec.center)
        assert np.linalg.norm(c) == pytest.approx(0.6, abs=1e-12)
        assert 30 - 1e-9 <= np.degrees(np.arcsin(c[2] / 0.6)) <= 60 + 1e-9
    assert len(hemisphere_poses(spec.model_copy(update={"count": 5}))) == 5


def test_pose_file_formats(tmp_path):
    poses = _ring_poses(4)
    bop = {str(k): {"cam_R_w2c": p.rotation_matrix.ravel().tolist(), "cam_t_w2c": (p.translation * 1000).tolist()}
           for k, p in enumerate(poses)}
    (tmp_path / "bop.json").write_text(json.dumps(bop))
    (tmp_path / "qt.json").write_text(json.dumps([p.to_dict() for p in poses]))
    for name in ("bop.json", "qt.json"):
        back = load_pose_file(tmp_path / name)
        assert len(back) == 4 and all(a.allclose(b, 1e-12) for a, b in zip(back, poses))
    (tmp_path / "bad.json").write_text(json.dumps([{"x": 1}]))
    with pytest.raises(ConfigurationError, match="malformed"):
        load_pose_file(tmp_path / "bad.json")


# ------------------------------------------------------------------ trajectory


def test_slerp_half_way_is_45_degrees():
    q = quat.slerp([1.0, 0, 0, 0], quat.from_axis_angle([0, 0, 1], np.pi / 2), 0.5)
    np.testing.assert_allclose(q, quat.from_axis_angle([0, 0, 1], np.pi / 4), atol=1e-12)


def test_two_keys_two_frames_are_the_keys():
    poses = _ring_poses(10)
    views = sample_trajectory(poses, 2, 2, np.random.default_rng(0), CAM)
    hits = [[k for k, p in enumerate(poses) if p is v.world_to_camera] for v in views]
    assert all(len(h) == 1 for h in hits) and hits[0] != hits[1]


@pytest.mark.parametrize("seed", range(8))
def test_trajectory_evenly_spaced_by_arc_length(seed):
    k, n = 4, 25
    views = sample_trajectory(_ring_poses(12), k, n, np.random.default_rng(seed), CAM)
    centres = np.array([v.center for v in views])
    step = np.linalg.norm(np.diff(centres, axis=0), axis=1)
    delta = step.max()
    assert np.all(step <= delta + 1e-12)
    # only steps that straddle a key corner can be shorter than the arc spacing
    assert np.sum(np.abs(step - delta) <= 1e-9) >= (n - 1) - (k - 2)
    for v in views:
        assert (v.fx, v.fy, v.cx, v.cy, v.width, v.height) == (CAM.fx, CAM.fy, CAM.cx, CAM.cy, CAM.width, CAM.height)


@pytest.mark.parametrize("seed", range(5))
def test_trajectory_positions_in_hull_of_selected_keys(seed):
    # replay the selection the sampler makes to recover its keys
    poses = _ring_poses(9)
    views = sample_trajectory(poses, 3, 12, np.random.default_rng(seed), CAM)
    picked = np.random.default_rng(seed).choice(len(poses), size=3, replace=False)
    keys = np.array([poses[i].inverse().translation for i in picked])
    for v in views:
        assert in_convex_hull(keys, v.center)


def test_trajectory_orientations_are_unit_and_endpoints_match_keys():
    poses = _ring_poses(8)
    views = sample_trajectory(poses, 3, 10, np.random.default_rng(4), CAM)
    for v in views:
        assert abs(np.linalg.norm(v.world_to_camera.rotation) - 1) < 1e-12
    assert any(views[0].world_to_camera is p for p in poses)
    assert any(views[-1].world_to_camera is p for p in poses)


def test_chain_nearest_greedy():
    pts = np.array([[0.0, 0, 0], [5, 0, 0], [1, 0, 0], [3, 0, 0], [-4, 0, 0]])
    assert chain_nearest(pts, 0) == [0, 2, 3, 1, 4]
    assert chain_nearest(pts, 4) == [4, 0, 2, 3, 1]


@pytest.mark.parametrize("k, n, size", [(2, 5, 1), (1, 5, 5), (4, 3, 10), (6, 8, 5)])
def test_trajectory_preconditions(k, n, size):
    with pytest.raises(ConfigurationError):
        sample_trajectory(_ring_poses(size) if size > 1 else _ring_poses(1), k, n, np.random.default_rng(0), CAM)


# ------------------------------------------------------------------ annotation


def _mesh_box(lo, hi):
    return TriangleMesh(np.array([[x, y, z] for x in (lo[0], hi[0]) for y in (lo[1], hi[1]) for z in (lo[2], hi[2])]),
                        np.array([[0, 1, 2]]))


def test_half_occlusion_annotation():
    view, front, back = half_occlusion_scene()
    out = render(merge_clouds([(front, 1), (back, 2)]), view)
    sils = {1: render_silhouette(front, view), 2: render_silhouette(back, view)}
    poses = {1: (5, RigidTransform.identity()), 2: (6, RigidTransform.identity())}
    meshes = {1: _mesh_box((-0.3, -0.2, 0.995), (0.0, 0.2, 1.005)), 2: _mesh_box((-0.2, -0.2, 1.995), (0.2, 0.2, 2.005))}
    ann = annotate_frame(out, sils, poses, view, meshes)
    objs = {o.obj_id: o for o in ann.objects}
    assert abs(objs[6].visib_fract - 0.5) <= 0.02
    # unoccluded front card
    assert objs[5].visib_fract == 1.0 and objs[5].bbox_visible == objs[5].bbox_amodal
    for o in ann.objects:
        assert not np.any(o.mask_visib & ~o.mask)
        assert o.visib_fract == o.px_count_visib / o.px_count_all
        assert o.px_count_all == int(o.mask.sum()) and o.px_count_visib == int(o.mask_visib.sum())


def test_fully_occluded_object_omitted():
    from conftest import box_cloud

    view = CameraView(100.0, 100.0, 64.0, 64.0, 128, 128)
    front = box_cloud((0, 0, 1.5), (0.6, 0.6, 0.05), 6000, 1, 0)
    back = box_cloud((0, 0, 3.0), (0.3, 0.3, 0.05), 2000, 2, 1)
    out = render(merge_clouds([(front, 1), (back, 2)]), view)
    sils = {1: render_silhouette(front, view), 2: render_silhouette(back, view)}
    mesh = _mesh_box((-0.1, -0.1, -0.1), (0.1, 0.1, 0.1))
    ann = annotate_frame(out, sils, {1: (1, RigidTransform.identity()), 2: (2, RigidTransform.identity())},
                         view, {1: mesh, 2: mesh})
    assert sils[2].sum() > 0
    assert [o.obj_id for o in ann.objects] == [1]


def test_mask_bbox():
    m = np.zeros((10, 12), dtype=bool)
    m[2:5, 3:9] = True
    assert mask_bbox(m) == [3, 2, 6, 3]
    assert mask_bbox(np.zeros((4, 4), dtype=bool)) == [-1, -1, -1, -1]


# ------------------------------------------------------------------ scenes


def test_build_scene_deterministic(desk):
    m, assets = desk
    a, b = build_scene(m, 1, assets), build_scene(m, 1, assets)
    assert [i.label for i in a.instances] == [i.label for i in b.instances]
    for x, y in zip(a.instances, b.instances):
        assert np.array_equal(np.array(x.trajectory.positions), np.array(y.trajectory.positions))
        assert np.array_equal(np.array(x.trajectory.orientations), np.array(y.trajectory.orientations))
    for v, w in zip(a.views, b.views):
        assert np.array_equal(v.world_to_camera.matrix(), w.world_to_camera.matrix())


def test_build_scene_counts_and_settling(desk):
    m, assets = desk
    s = build_scene(m, 0, assets)
    per_obj = {}
    for inst in s.instances:
        per_obj[inst.obj_id] = per_obj.get(inst.obj_id, 0) + 1
        assert inst.trajectory.settled
    for spec in m.objects:
        assert spec.count_min <= per_obj.get(spec.object_id, 0) <= spec.count_max
    assert len({i.label for i in s.instances}) == len(s.instances) and ENV_LABEL not in {i.label for i in s.instances}
    assert len(s.views) == m.views_per_scene


def test_settled_poses_are_trajectory_final_samples(desk):
    m, assets = desk
    s = build_scene(m, 0, assets)
    for f in range(len(s.views)):
        for inst in s.instances:
            pose = s.object_poses(f)[inst.label]
            assert np.array_equal(pose.translation, inst.trajectory.positions[-1])
            assert np.array_equal(pose.rotation, inst.trajectory.orientations[-1])


def test_dynamic_mode_follows_trajectory_stride(desk):
    m, assets = desk
    dyn = m.model_copy(update={"mode": m.mode.model_copy(update={"kind": "dynamic", "frame_stride": 5})})
    s = build_scene(dyn, 0, assets)
    for f in range(len(s.views)):
        for inst in s.instances:
            k = min(5 * f, len(inst.trajectory.times) - 1)
            assert np.array_equal(s.object_poses(f)[inst.label].translation, inst.trajectory.positions[k])


def test_zero_objects_scene_is_environment(desk):
    m, assets = desk
    empty = m.model_copy(update={"objects": []})
    s = build_scene(empty, 0, type(assets)(assets.env_cloud, assets.env_mesh, []))
    assert s.instances == []
    assert scene_cloud(s, 0, assets).equals(assets.env_cloud)


def test_scene_index_out_of_range(desk):
    m, assets = desk
    with pytest.raises(ConfigurationError):
        build_scene(m, m.scenes, assets)


def test_rendered_annotation_invariants(desk):
    m, assets = desk
    s = build_scene(m, 1, assets)
    checked_boxes = 0
    for f in range(len(s.views)):
        rf = render_frame(s, f, assets)
        view = rf.view
        assert rf.annotation.objects
        for o in rf.annotation.objects:
            assert o.model_to_camera.allclose(view.world_to_camera @ o.object_to_world, 1e-9)
            assert not np.any(o.mask_visib & ~o.mask)
            assert 0 < o.visib_fract <= 1
            mesh = assets.meshes_by_obj_id()[o.obj_id]
            r, t = o.model_to_camera.rotation_matrix, o.model_to_camera.translation
            np.testing.assert_allclose(o.bbox3d, project_pinhole(view.K, r, t, box_corners(mesh)), atol=1e-9)
            x, y, w, h = o.bbox_amodal
            c = o.bbox3d
            # silhouette box never exceeds the projected 3D box by more than 2 px
            assert c[:, 0].min() - 2 <= x and x + w - 1 <= c[:, 0].max() + 2
            assert c[:, 1].min() - 2 <= y and y + h - 1 <= c[:, 1].max() + 2
            # box-shaped assets: corners project inside the dilated silhouette box (away from image borders)
            on_border = x == 0 or y == 0 or x + w == view.width or y + h == view.height
            if o.obj_id in (2, 3) and not on_border:
                assert x - 2 <= c[:, 0].min() and c[:, 0].max() <= x + w - 1 + 2
                assert y - 2 <= c[:, 1].min() and c[:, 1].max() <= y + h - 1 + 2
                checked_boxes += 1
    assert checked_boxes > 0


def test_unknown_scene_error_carries_index(desk, monkeypatch, tmp_path):
    import splatsynth.scene_gen as sg

    m, assets = desk
    real = sg.build_scene

    def flaky(manifest, index, a):
        if index == 1:
            raise SceneError(index, "injected")
        return real(manifest, index, a)

    monkeypatch.setattr(sg, "build_scene", flaky)
    report = generate(m.model_copy(update={"views_per_scene": 2}), tmp_path / "out", assets=assets)
    assert [s["ok"] for s in report.scenes] == [True, False]
    assert "scene 1" in report.failed[0]["error"]
    assert (tmp_path / "out" / "000000").is_dir() and not (tmp_path / "out" / "000001").exists()


# ------------------------------------------------------------------ generation


def test_generate_counts_and_report(desk_dataset, desk):
    m, _ = desk
    rgb = sorted(desk_dataset.glob("*/rgb/*.png"))
    assert len(rgb) == m.scenes * m.views_per_scene == 6
    rep = json.loads((desk_dataset / "generation_report.json").read_text())
    assert rep["frames"] == 6 and rep["n_failed"] == 0
    cfg = json.loads((desk_dataset / "config.json").read_text())
    assert cfg["seed"] == m.seed and "workers" not in cfg["render"]


def test_rerun_byte_identical(desk_dataset, desk, tmp_path):
    m, assets = desk
    generate(m, tmp_path / "again", assets=assets)
    assert tree_bytes(tmp_path / "again") == tree_bytes(desk_dataset)


def test_worker_count_byte_identical(desk_dataset, desk, tmp_path):
    m, assets = desk
    generate(m, tmp_path / "par", workers=2, assets=assets)
    assert tree_bytes(tmp_path / "par") == tree_bytes(desk_dataset)


def test_scene_independence(desk_dataset, desk, tmp_path):
    m, assets = desk
    generate(m, tmp_path / "one", scene_indices=[1], assets=assets)
    one = {k: v for k, v in tree_bytes(tmp_path / "one").items() if k.startswith("000001")}
    full = {k: v for k, v in tree_bytes(desk_dataset).items() if k.startswith("000001")}
    assert one and one == full


def test_seed_changes_output(desk, tmp_path):
    m, assets = desk
    a = build_scene(m, 0, assets)
    b = build_scene(m.model_copy(update={"seed": m.seed + 1}), 0, assets)
    pa = np.concatenate([i.trajectory.positions[-1] for i in a.instances])
    pb = np.concatenate([i.trajectory.positions[-1] for i in b.instances])
    assert len(pa) != len(pb) or not np.array_equal(pa, pb)


def test_placement_failure_reported_per_scene(tmp_path):
    refs = write_assets(tmp_path / "a", table_n=3000, object_n=300)
    raw = manifest_dict(refs, scenes=2, views=2, drop_region=[5.0, 5.0, 6.0, 6.0])
    m = parse_manifest(raw, tmp_path / "a")
    report = generate(m, tmp_path / "out")
    assert len(report.failed) == 2
    assert all("drop region" in s["error"] for s in report.failed)
    assert not any((tmp_path / "out").glob("0000*"))
