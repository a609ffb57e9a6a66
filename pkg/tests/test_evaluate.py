"""Holdout splitting, PCC scoring, rotation errors, and the BA baseline."""

import numpy as np
import pytest
from dataclasses import replace

from warpsfm.camera import CameraParams, LossWeights
from warpsfm.evaluate import (
    HoldoutError,
    holdout_split,
    loss_2d,
    mesh_warp_points,
    pair_rotation_errors,
    pcc,
    pcc_ba,
    relative_rotation_error,
    traditional_ba,
)
from warpsfm.mesh import build_scene_meshes
from warpsfm.objective import EvaluationError
from warpsfm.optimize import AlignmentState, OptimizerConfig
from warpsfm.scene import CorrespondenceSet, ImageRecord, Scene
from warpsfm.synthetic import SyntheticSpec, generate_scene


def _qmul(a, b):
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def _rot_quat(axis, deg):
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    half = np.deg2rad(deg) / 2.0
    return np.concatenate([[np.cos(half)], np.sin(half) * axis])


def _full_visibility_corrs(n_images=3, n_points=20, seed=0):
    rng = np.random.default_rng(seed)
    pixels = np.empty((n_images, n_points, 2))
    for c in range(n_points):
        # Distinctive u coordinate so split outputs can be traced back.
        pixels[:, c, 0] = c
        pixels[:, c, 1] = rng.uniform(0, 50, size=n_images)
    vis = np.ones((n_images, n_points), dtype=bool)
    return CorrespondenceSet(pixels, vis)


def _consistent_scene(seed=0, n_points=20):
    spec = SyntheticSpec(
        seed=seed, n_cameras=3, n_points=n_points, image_size=(160, 120)
    )
    return generate_scene(spec)


def _normalized_cams(scene, cams_px):
    """Pixel-unit cameras rescaled to the normalized units states carry."""
    out = []
    for rec, cam in zip(scene.images, cams_px):
        s = 1.0 / rec.max_dim
        out.append(replace(cam, fx=cam.fx * s, fy=cam.fy * s,
                           cx=cam.cx * s, cy=cam.cy * s))
    return out


def _state_for(scene, cams, stage="camera"):
    meshes, corr_vertex = build_scene_meshes(scene)
    return AlignmentState(cams=cams, meshes=meshes, corr_vertex=corr_vertex,
                          weights=LossWeights(), stage=stage)


def _flat_pair_scene(offset_px=0.0):
    """Two identical identity cameras looking at a constant-depth plane.

    Labels: one shared point (offset by offset_px between the views along u)
    plus three single-view anchors per image so each mesh can triangulate.
    """
    rng = np.random.default_rng(7)
    images = []
    for i in range(2):
        images.append(ImageRecord(
            id=i,
            rgb=rng.integers(0, 256, size=(32, 32, 3), dtype=np.uint8),
            depth=np.full((32, 32), 2.0, dtype=np.float64),
            mask=np.ones((32, 32), dtype=bool),
        ))
    pixels = np.zeros((2, 7, 2))
    vis = np.zeros((2, 7), dtype=bool)
    pixels[0, 0] = [16.0, 16.0]
    pixels[1, 0] = [16.0 + offset_px, 16.0]
    vis[:, 0] = True
    anchors = [[6.0, 6.0], [26.0, 8.0], [10.0, 26.0]]
    for a, xy in enumerate(anchors):
        pixels[0, 1 + a] = xy
        vis[0, 1 + a] = True
        pixels[1, 4 + a] = [xy[0] + 1.0, xy[1] + 1.0]
        vis[1, 4 + a] = True
    scene = Scene(images=images, correspondences=CorrespondenceSet(pixels, vis))
    cam = CameraParams(rotation=np.array([1.0, 0, 0, 0]),
                       translation=np.zeros(3),
                       fx=0.5, fy=0.5, cx=0.5, cy=0.5)
    cams = [cam, replace(cam)]
    return scene, cams


# -- holdout_split -----------------------------------------------------------------


def test_holdout_zero_is_noop():
    corrs = _full_visibility_corrs()
    split = holdout_split(corrs, 0, seed=3)
    assert split.train.n_points == corrs.n_points
    assert split.holdout.n_points == 0
    assert np.array_equal(split.train.pixels, corrs.pixels)


def test_holdout_negative_k_rejected():
    with pytest.raises(HoldoutError, match="must be >= 0"):
        holdout_split(_full_visibility_corrs(), -1)


def test_holdout_deterministic_per_seed():
    corrs = _full_visibility_corrs()
    a = holdout_split(corrs, 5, seed=11)
    b = holdout_split(corrs, 5, seed=11)
    assert np.array_equal(a.holdout.pixels, b.holdout.pixels)
    assert np.array_equal(a.train.pixels, b.train.pixels)


def test_holdout_seeds_vary():
    corrs = _full_visibility_corrs()
    picks = {
        holdout_split(corrs, 5, seed=s).holdout.pixels.tobytes()
        for s in range(100)
    }
    assert len(picks) > 1


def test_holdout_partition_is_exact():
    corrs = _full_visibility_corrs(n_points=20)
    split = holdout_split(corrs, 5, seed=2)
    assert split.train.n_points == 15
    assert split.holdout.n_points == 5
    # The u coordinate encodes the original point index.
    train_ids = set(split.train.pixels[0, :, 0].astype(int))
    hold_ids = set(split.holdout.pixels[0, :, 0].astype(int))
    assert train_ids | hold_ids == set(range(20))
    assert train_ids & hold_ids == set()


def test_holdout_only_covisible_points_eligible():
    corrs = _full_visibility_corrs(n_images=3, n_points=12)
    vis = corrs.visibility.copy()
    vis[1:, 3:] = False  # points 3..11 become single-view
    corrs = CorrespondenceSet(corrs.pixels, vis)
    with pytest.raises(HoldoutError, match="only 3 are visible"):
        holdout_split(corrs, 4, seed=0)


def test_holdout_keeps_minimum_labels_per_image():
    corrs = _full_visibility_corrs(n_points=8)
    with pytest.raises(HoldoutError, match="would keep only 5"):
        holdout_split(corrs, 3, seed=0)


def test_holdout_points_visible_twice():
    scene, _ = _consistent_scene(seed=1)
    split = holdout_split(scene.correspondences, 5, seed=1)
    assert (split.holdout.visible_counts() >= 2).all()


# -- mesh_warp_points --------------------------------------------------------------


def test_warp_points_identity_mesh():
    scene, cams = _flat_pair_scene()
    meshes, _ = build_scene_meshes(scene)
    pix = np.array([[8.25, 9.5], [20.0, 14.75]])
    xy, z = mesh_warp_points(meshes[0], scene.images[0].depth, pix)
    assert np.allclose(xy, pix, atol=1e-9)
    assert np.allclose(z, 2.0, atol=1e-12)


def test_warp_points_follows_mesh_motion():
    scene, cams = _flat_pair_scene()
    meshes, _ = build_scene_meshes(scene)
    mesh = meshes[0]
    moved = replace(mesh, positions=mesh.positions + np.array([2.0, 3.0, 0.5]))
    pix = np.array([[8.25, 9.5], [20.0, 14.75]])
    xy, z = mesh_warp_points(moved, scene.images[0].depth, pix)
    assert np.allclose(xy, pix + [2.0, 3.0], atol=1e-9)
    assert np.allclose(z, 2.5, atol=1e-12)


def test_warp_points_outside_mesh_rejected():
    scene, cams = _flat_pair_scene()
    meshes, _ = build_scene_meshes(scene)
    with pytest.raises(HoldoutError, match="outside the mesh"):
        mesh_warp_points(meshes[0], scene.images[0].depth, np.array([[-5.0, -5.0]]))


# -- pcc ---------------------------------------------------------------------------


def test_pcc_exact_cameras_score_one():
    scene, gt = _consistent_scene(seed=0)
    split = holdout_split(scene.correspondences, 5, seed=0)
    train_scene = replace(scene, correspondences=split.train)
    state = _state_for(train_scene, _normalized_cams(scene, gt.cams))
    result = pcc(train_scene, state, split.holdout, alpha=0.03)
    assert result.n_pairs > 0
    assert result.fraction == 1.0
    assert np.all(np.isfinite(result.distances_px))


def test_pcc_broken_cameras_score_zero():
    scene, gt = _consistent_scene(seed=0)
    split = holdout_split(scene.correspondences, 5, seed=0)
    train_scene = replace(scene, correspondences=split.train)
    cams = _normalized_cams(scene, gt.cams)
    cams = [
        replace(c, translation=c.translation + np.array([1e3 * (i + 1), 0.0, 0.0]))
        for i, c in enumerate(cams)
    ]
    result = pcc(train_scene, _state_for(train_scene, cams), split.holdout, alpha=0.03)
    assert result.fraction == 0.0


def test_pcc_hand_case_half_correct():
    scene, cams = _flat_pair_scene()
    # Holdout: one point labeled identically, one offset by 10 px.
    pixels = np.array([
        [[12.0, 12.0], [20.0, 20.0]],
        [[12.0, 12.0], [30.0, 20.0]],
    ])
    holdout = CorrespondenceSet(pixels, np.ones((2, 2), dtype=bool))
    result = pcc(scene, _state_for(scene, cams), holdout, alpha=0.03)
    assert result.n_pairs == 4
    assert result.n_correct == 2
    assert result.fraction == 0.5
    assert np.allclose(np.sort(result.distances_px), [0.0, 0.0, 10.0, 10.0], atol=1e-9)


def test_pcc_monotone_in_alpha():
    scene, gt = _consistent_scene(seed=2)
    split = holdout_split(scene.correspondences, 5, seed=2)
    train_scene = replace(scene, correspondences=split.train)
    rng = np.random.default_rng(5)
    cams = []
    for cam in _normalized_cams(scene, gt.cams):
        jitter = _rot_quat(rng.normal(size=3), rng.uniform(0.5, 4.0))
        cams.append(replace(cam, rotation=_qmul(jitter, cam.rotation)))
    state = _state_for(train_scene, cams)
    fracs = [
        pcc(train_scene, state, split.holdout, alpha=a).fraction
        for a in (0.001, 0.01, 0.05, 0.5)
    ]
    assert all(a <= b for a, b in zip(fracs, fracs[1:]))


def test_pcc_no_covisible_pairs_rejected():
    scene, cams = _flat_pair_scene()
    pixels = np.array([
        [[12.0, 12.0], [20.0, 20.0]],
        [[12.0, 12.0], [30.0, 20.0]],
    ])
    vis = np.array([[True, False], [False, True]])
    with pytest.raises(HoldoutError, match="no co-visible"):
        pcc(scene, _state_for(scene, cams), CorrespondenceSet(pixels, vis))


def test_pcc_behind_camera_counts_as_miss():
    scene, cams = _flat_pair_scene()
    pixels = np.array([[[12.0, 12.0]], [[12.0, 12.0]]])
    holdout = CorrespondenceSet(pixels, np.ones((2, 1), dtype=bool))
    # Point the second camera the other way: everything lands behind it.
    cams = [cams[0], replace(cams[1], rotation=_rot_quat([0, 1, 0], 180.0))]
    result = pcc(scene, _state_for(scene, cams), holdout, alpha=0.03)
    assert np.isinf(result.distances_px).any()
    assert result.fraction < 1.0


# -- rotation errors ---------------------------------------------------------------


def test_rotation_errors_zero_for_identical():
    _, gt = _consistent_scene(seed=3)
    errs = pair_rotation_errors(gt.cams, gt.cams)
    assert errs.shape == (3,)
    assert np.allclose(errs, 0.0, atol=1e-9)


def test_rotation_errors_ignore_global_frame():
    _, gt = _consistent_scene(seed=3)
    g = _rot_quat([0.3, -1.0, 0.7], 73.0)
    rotated = [replace(c, rotation=_qmul(g, c.rotation)) for c in gt.cams]
    assert relative_rotation_error(gt.cams, rotated) == pytest.approx(0.0, abs=1e-7)


def test_rotation_errors_measure_single_offset():
    base = CameraParams(rotation=np.array([1.0, 0, 0, 0]), translation=np.zeros(3),
                        fx=1.0, fy=1.0, cx=0.5, cy=0.5)
    cams_a = [base, replace(base)]
    cams_b = [base, replace(base, rotation=_rot_quat([0, 0, 1], 10.0))]
    errs = pair_rotation_errors(cams_a, cams_b)
    assert errs == pytest.approx([10.0], abs=1e-9)


def test_rotation_errors_symmetric():
    _, gt_a = _consistent_scene(seed=4)
    _, gt_b = _consistent_scene(seed=5)
    ab = pair_rotation_errors(gt_a.cams, gt_b.cams)
    ba = pair_rotation_errors(gt_b.cams, gt_a.cams)
    assert np.allclose(ab, ba, atol=1e-9)


def test_rotation_errors_length_mismatch():
    _, gt = _consistent_scene(seed=3)
    with pytest.raises(ValueError, match="differ in length"):
        pair_rotation_errors(gt.cams, gt.cams[:2])


# -- traditional bundle adjustment ---------------------------------------------------


def test_ba_recovers_consistent_scene():
    scene, gt = _consistent_scene(seed=6, n_points=16)
    result = traditional_ba(scene)
    assert relative_rotation_error(result.cams, gt.cams) < 2.0
    assert result.points.shape == (16, 3)
    assert result.trace[-1]["reproj"] < result.trace[0]["reproj"]
    assert result.trace[-1]["reproj"] < 1e-7


def test_ba_rejects_single_view_points():
    scene, _ = _consistent_scene(seed=6)
    vis = scene.correspondences.visibility.copy()
    vis[1:, 0] = False
    corrs = CorrespondenceSet(scene.correspondences.pixels, vis)
    with pytest.raises(EvaluationError, match="needs every point in >= 2 views"):
        traditional_ba(replace(scene, correspondences=corrs))


def test_pcc_ba_consistent_scene():
    scene, _ = _consistent_scene(seed=7, n_points=20)
    split = holdout_split(scene.correspondences, 5, seed=7)
    train_scene = replace(scene, correspondences=split.train)
    result = traditional_ba(train_scene)
    score = pcc_ba(train_scene, result, split.holdout, alpha=0.03)
    assert score.fraction >= 0.9


# -- 2D reprojection objective -------------------------------------------------------


def test_loss_2d_consistent_scene_near_zero():
    scene, gt = _consistent_scene(seed=8)
    state = _state_for(scene, _normalized_cams(scene, gt.cams))
    assert loss_2d(scene, state) < 1e-3


def test_loss_2d_hand_case():
    scene, cams = _flat_pair_scene(offset_px=3.0)
    state = _state_for(scene, cams)
    assert loss_2d(scene, state) == pytest.approx(9.0, rel=1e-12)


def test_loss_2d_no_pairs_is_zero():
    scene, cams = _flat_pair_scene()
    vis = scene.correspondences.visibility.copy()
    vis[1, 0] = False
    lonely = replace(scene, correspondences=CorrespondenceSet(
        scene.correspondences.pixels, vis))
    state = _state_for(lonely, [cams[0], cams[1]])
    assert loss_2d(lonely, state) == 0.0
