import numpy as np
import pytest

from _oracles import (
    make_random_scene,
    max_rel_grad_err,
    perturbed_align_problem,
    perturbed_ba_problem,
)
from warpsfm.camera import LossWeights, camera_regularizers, loss_3d
from warpsfm.mesh import DeformableMesh, build_scene_meshes, loss_arap2d, loss_flip, loss_z
from warpsfm.objective import (
    ALIGN_GROUPS,
    BA_GROUPS,
    CAMERA_TERMS,
    DEFORM_TERMS,
    AlignProblem,
    BAProblem,
    EvaluationError,
)
from warpsfm.optimize import OptimizerConfig, initial_cameras
from warpsfm.scene import sampled_correspondence_depths

# Every regularizer gets a nonzero weight here so the weighted gradients the
# finite differences see are nontrivial.
FD_WEIGHTS = LossWeights(scale=1.3, aspect=0.7, focal=0.5, neg=100.0,
                         arap2d=1.1, flip=10.0, z=0.1)

ALL_TERMS = CAMERA_TERMS + DEFORM_TERMS


def _fd_check(problem, theta, terms, rng, n_coords=40):
    f = lambda x: problem.value(x, terms=terms)
    _, grad, _ = problem.value_and_grad(theta, terms=terms)
    return max_rel_grad_err(f, grad, theta, rng, n_coords=n_coords)


# -- per-term finite differences ------------------------------------------------


@pytest.mark.parametrize("term", ALL_TERMS)
def test_term_gradients_match_fd(term):
    for seed in (0, 1, 2):
        problem, theta = perturbed_align_problem(seed, FD_WEIGHTS)
        rng = np.random.default_rng(100 + seed)
        err = _fd_check(problem, theta, (term,), rng)
        assert err < 1e-4, f"{term} seed {seed}: max rel grad err {err:.3e}"


def test_l2d_gradient_matches_fd():
    for seed in (0, 1, 2):
        problem, theta = perturbed_align_problem(seed, FD_WEIGHTS, use_l2d=True)
        rng = np.random.default_rng(200 + seed)
        err = _fd_check(problem, theta, ("l2d",), rng)
        assert err < 1e-4, f"l2d seed {seed}: max rel grad err {err:.3e}"


def test_stage_objective_gradients_match_fd():
    for seed in (3, 4):
        problem, theta = perturbed_align_problem(seed, FD_WEIGHTS)
        for stage in ("camera", "full"):
            rng = np.random.default_rng(300 + seed)
            err = _fd_check(problem, theta, problem.stage_terms(stage), rng)
            assert err < 1e-4, f"{stage} seed {seed}: max rel grad err {err:.3e}"


def test_ba_gradient_matches_fd():
    for seed in (0, 1, 2):
        problem, theta = perturbed_ba_problem(seed)
        rng = np.random.default_rng(400 + seed)
        f = lambda x: problem.value(x)
        _, grad = problem.value_and_grad(theta)
        err = max_rel_grad_err(f, grad, theta, rng, n_coords=40)
        assert err < 1e-4, f"BA seed {seed}: max rel grad err {err:.3e}"


# -- structure -------------------------------------------------------------------


def test_layout_covers_all_groups():
    problem, theta = perturbed_align_problem(0, FD_WEIGHTS)
    lay = problem.layout
    sizes = [lay.group_of(g).stop - lay.group_of(g).start for g in ALIGN_GROUPS]
    assert sum(sizes) == theta.size
    assert lay.group_of("rotation").start == 0

    ba, theta_ba = perturbed_ba_problem(0)
    sizes = [ba.layout.group_of(g).stop - ba.layout.group_of(g).start for g in BA_GROUPS]
    assert sum(sizes) == theta_ba.size


def test_pack_cameras_roundtrip():
    problem, theta = perturbed_align_problem(1, FD_WEIGHTS)
    cams = problem.cameras(theta)
    verts = problem.vertex_positions(theta)
    theta2 = problem.pack(cams, verts)
    # Quaternions were renormalized by cameras(); everything else is exact.
    assert np.allclose(theta2[problem.layout.group_of("translation")],
                       theta[problem.layout.group_of("translation")], atol=0)
    assert np.allclose(theta2[problem.layout.group_of("vertices")],
                       theta[problem.layout.group_of("vertices")], atol=0)
    c2 = problem.cameras(theta2)
    for a, b in zip(cams, c2):
        assert np.allclose(a.rotation, b.rotation, atol=1e-15)


def test_value_and_grad_reports_terms():
    problem, theta = perturbed_align_problem(2, FD_WEIGHTS)
    total, grad, terms = problem.value_and_grad(theta)
    assert set(terms) == set(ALL_TERMS)
    assert grad.shape == theta.shape
    wmap = problem.weight_map()
    assert total == pytest.approx(sum(wmap[k] * v for k, v in terms.items()), rel=1e-12)


def test_scale_gradient_closed_form():
    # L_scale = (1 - mean s)^2; at s = (2, 2) each dL/ds_i = 2(mean-1)/n = 1.
    problem, theta = perturbed_align_problem(5, LossWeights(scale=1.0), n_images=2)
    theta = theta.copy()
    ss = problem.layout.group_of("scale_shift")
    theta[ss] = np.tile([2.0, 0.0], problem.n_images)
    _, grad, terms = problem.value_and_grad(theta, terms=("scale",))
    assert terms["scale"] == pytest.approx(1.0, rel=1e-15)
    g = grad[ss].reshape(-1, 2)
    assert np.allclose(g[:, 0], 1.0, rtol=1e-15)
    assert np.allclose(g[:, 1], 0.0)


def test_non_finite_input_raises():
    problem, theta = perturbed_align_problem(0, FD_WEIGHTS)
    theta = theta.copy()
    theta[problem.layout.group_of("translation").start] = np.nan
    with pytest.raises(EvaluationError, match="non-finite"):
        problem.value_and_grad(theta)


def test_ba_non_finite_raises():
    problem, theta = perturbed_ba_problem(1)
    theta = theta.copy()
    theta[problem.layout.group_of("points").start + 2] = np.inf
    with pytest.raises(EvaluationError, match="non-finite"):
        problem.value_and_grad(theta)


# -- parity with the standalone loss functions ------------------------------------


def test_camera_terms_match_standalone_losses():
    """The packed objective and the free functions are the same math.

    Cameras come out of the problem in normalized units; the standalone
    loss_3d needs pixel-unit cameras with pixel coordinates, so the focals
    and centers are rescaled by max(w, h) before comparing.
    """
    scene = make_random_scene(12, n_images=3, n_points=8, size=(64, 48))
    meshes, corr_vertex = build_scene_meshes(scene)
    problem = AlignProblem(scene, meshes, corr_vertex, FD_WEIGHTS)
    cams = initial_cameras(scene, OptimizerConfig(seed=5))
    for k, c in enumerate(cams):
        c.depth_scale = 1.0 + 0.1 * k
        c.depth_shift = 0.02 * k
        c.fx *= 1.05
    theta = problem.pack(
        cams,
        [
            np.concatenate([m.topology.vertices0 / rec.max_dim, m.z0[:, None]], axis=1)
            for m, rec in zip(meshes, scene.images)
        ],
    )
    got = problem.term_values(theta, problem.stage_terms("camera"))

    m = 64.0
    pixel_cams = []
    for c in problem.cameras(theta):
        import dataclasses

        pixel_cams.append(
            dataclasses.replace(c, fx=c.fx * m, fy=c.fy * m, cx=c.cx * m, cy=c.cy * m)
        )
    depths = sampled_correspondence_depths(scene)
    assert got["l3d"] == pytest.approx(loss_3d(scene, pixel_cams, depths), rel=1e-9)

    reg = camera_regularizers(problem.cameras(theta), [(64, 48)] * 3)
    for k in ("scale", "aspect", "focal", "neg"):
        assert got[k] == pytest.approx(reg[k], rel=1e-12), k


def test_mesh_terms_match_standalone_losses():
    """ARAP and flip scale by the unit change (m^2 and m^4); z is unit-free."""
    scene = make_random_scene(13, n_images=2, n_points=7, size=(64, 48))
    meshes, corr_vertex = build_scene_meshes(scene)
    problem = AlignProblem(scene, meshes, corr_vertex, FD_WEIGHTS)
    cams = initial_cameras(scene, OptimizerConfig(seed=6))
    rng = np.random.default_rng(14)
    m = 64.0
    deformed = []
    for mesh, rec in zip(meshes, scene.images):
        pos = np.concatenate(
            [mesh.topology.vertices0 / rec.max_dim, mesh.z0[:, None]], axis=1
        )
        pos[:, :2] += 0.003 * rng.standard_normal(pos[:, :2].shape)
        pos[:, 2] += 0.05 * rng.standard_normal(pos.shape[0])
        deformed.append(pos)
    theta = problem.pack(cams, deformed)
    got = problem.term_values(theta, DEFORM_TERMS)

    pixel_meshes = []
    for mesh, pos in zip(meshes, deformed):
        positions = np.column_stack([pos[:, :2] * m, pos[:, 2]])
        pixel_meshes.append(
            DeformableMesh(topology=mesh.topology, z0=mesh.z0, positions=positions)
        )
    assert got["arap2d"] == pytest.approx(loss_arap2d(pixel_meshes) / m**2, rel=1e-9)
    assert got["flip"] == pytest.approx(loss_flip(pixel_meshes) / m**4, rel=1e-9)
    assert got["z"] == pytest.approx(loss_z(pixel_meshes), rel=1e-12)


def test_l2d_zero_when_vertices_project_exactly():
    """With vertices at the labels and cameras reprojecting them exactly, L2D = 0.

    Realized by a single camera pair with identical parameters: both images'
    vertices backproject to the same world points only if the scene says so;
    instead drive it the other way - identical images, identity cameras, same
    labels - so each vertex projects onto itself in the other view.
    """
    scene = make_random_scene(20, n_images=2, n_points=6, size=(40, 40))
    scene.correspondences.pixels[1] = scene.correspondences.pixels[0]
    scene.correspondences.visibility[:] = True
    scene.images[1].depth = scene.images[0].depth.copy()
    meshes, corr_vertex = build_scene_meshes(scene)
    problem = AlignProblem(scene, meshes, corr_vertex, FD_WEIGHTS, use_l2d=True)
    cams = initial_cameras(scene, OptimizerConfig(init_jitter_deg=0.0))
    theta = problem.pack(
        cams,
        [
            np.concatenate([m.topology.vertices0 / rec.max_dim, m.z0[:, None]], axis=1)
            for m, rec in zip(meshes, scene.images)
        ],
    )
    vals = problem.term_values(theta, ("l2d",))
    assert vals["l2d"] == pytest.approx(0.0, abs=1e-18)
