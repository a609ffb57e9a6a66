"""Shared test oracles: finite differences, random scenes, brute-force checks.

Everything here is deliberately independent of the library's own gradient and
geometry code paths: finite differences run in longdouble through the pure
numpy kernels, and the geometric checkers (point-in-triangle, circumcircle)
are written from the textbook formulas.
"""

from __future__ import annotations

import numpy as np

from warpsfm.camera import quat_from_axis_angle
from warpsfm.mesh import build_scene_meshes
from warpsfm.objective import AlignProblem, BAProblem
from warpsfm.optimize import initial_cameras, OptimizerConfig
from warpsfm.scene import CorrespondenceSet, ImageRecord, Scene


def fd_gradient(f, x, idx, step=1e-5):
    """Five-point central finite difference of f at x along coordinates idx.

    x is promoted to longdouble so the library's dtype-generic evaluation
    runs its pure-numpy path at extended precision.
    """
    x = np.asarray(x, dtype=np.longdouble)
    out = np.empty(len(idx), dtype=np.longdouble)
    for k, i in enumerate(idx):
        e = np.zeros_like(x)
        e[i] = step
        f1 = f(x - 2 * e)
        f2 = f(x - e)
        f3 = f(x + e)
        f4 = f(x + 2 * e)
        out[k] = (f1 - 8 * f2 + 8 * f3 - f4) / (12 * step)
    return out


def max_rel_grad_err(f, grad, x, rng=None, n_coords=None, step=1e-5,
                     g_floor=1e-8):
    """Worst relative disagreement between analytic grad and FD.

    Checks every coordinate when n_coords is None, otherwise a random
    subset (always including the largest-magnitude entries). Coordinates
    where both gradients are below g_floor are skipped, matching the
    contract that only meaningfully nonzero entries are held to the
    relative tolerance.
    """
    grad = np.asarray(grad, dtype=np.float64)
    if n_coords is None or n_coords >= grad.size:
        idx = np.arange(grad.size)
    else:
        rng = rng or np.random.default_rng(0)
        top = np.argsort(-np.abs(grad))[: n_coords // 2]
        rest = rng.choice(grad.size, size=n_coords // 2, replace=False)
        idx = np.unique(np.concatenate([top, rest]))
    fd = fd_gradient(f, x, idx, step=step)
    worst = 0.0
    for k, i in enumerate(idx):
        a, n = float(grad[i]), float(fd[k])
        if abs(a) <= g_floor and abs(n) <= g_floor:
            continue
        worst = max(worst, abs(a - n) / max(abs(n), g_floor))
    return worst


def smooth_depth(h, w, rng, base=2.0, amp=0.5):
    """A strictly positive, gently varying depth raster."""
    ys, xs = np.mgrid[0:h, 0:w]
    field = (
        base
        + amp * np.sin(2.5 * xs / w + rng.uniform(0, 6))
        + amp * np.cos(1.5 * ys / h + rng.uniform(0, 6))
    )
    return field.astype(np.float32)


def make_random_scene(seed, n_images=3, n_points=8, size=(64, 48)):
    """In-memory scene with every point visible in >= 2 views."""
    rng = np.random.default_rng(seed)
    w, h = size
    images = [
        ImageRecord(
            id=i,
            rgb=rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8),
            depth=smooth_depth(h, w, rng),
            mask=np.ones((h, w), dtype=bool),
        )
        for i in range(n_images)
    ]
    pixels = np.zeros((n_images, n_points, 2))
    visibility = np.zeros((n_images, n_points), dtype=bool)
    for c in range(n_points):
        k = int(rng.integers(2, n_images + 1))
        views = rng.choice(n_images, size=k, replace=False)
        for i in views:
            pixels[i, c] = (rng.uniform(3, w - 4), rng.uniform(3, h - 4))
            visibility[i, c] = True
    return Scene(
        images=images,
        correspondences=CorrespondenceSet(pixels=pixels, visibility=visibility),
    )


def perturbed_align_problem(seed, weights, n_images=3, n_points=8, use_l2d=False):
    """(problem, theta) with every parameter group nudged off its symmetry point.

    Rotations get a few degrees of jitter, scale/shift move away from (1, 0)
    with one negative entry so the hinge term is active, vertices move in all
    three coordinates so |z - z0| has no kink at zero anywhere.
    """
    rng = np.random.default_rng(seed)
    scene = make_random_scene(seed, n_images=n_images, n_points=n_points)
    meshes, corr_vertex = build_scene_meshes(scene)
    problem = AlignProblem(scene, meshes, corr_vertex, weights, use_l2d=use_l2d)
    cams = initial_cameras(scene, OptimizerConfig(seed=seed))
    theta = problem.pack(
        cams,
        [
            np.concatenate(
                [m.topology.vertices0 / rec.max_dim, m.z0[:, None]], axis=1
            )
            for m, rec in zip(meshes, scene.images)
        ],
    )
    lay = problem.layout
    theta[lay.group_of("rotation")] += 0.02 * rng.standard_normal(4 * n_images)
    theta[lay.group_of("translation")] += 0.05 * rng.standard_normal(3 * n_images)
    theta[lay.group_of("intrinsics")] += rng.uniform(-0.1, 0.1, 2 * n_images)
    ss = rng.uniform(0.7, 1.3, 2 * n_images)
    ss[1] = -0.2  # one negative scale/shift entry keeps L_neg active
    theta[lay.group_of("scale_shift")] = ss
    verts = theta[lay.group_of("vertices")].reshape(-1, 3)
    verts[:, :2] += 0.01 * rng.standard_normal(verts[:, :2].shape)
    dz = rng.uniform(0.01, 0.05, verts.shape[0]) * rng.choice([-1.0, 1.0], verts.shape[0])
    verts[:, 2] += dz
    theta[lay.group_of("vertices")] = verts.ravel()
    return problem, theta


def perturbed_ba_problem(seed, n_images=3, n_points=8):
    rng = np.random.default_rng(seed)
    scene = make_random_scene(seed, n_images=n_images, n_points=n_points)
    problem = BAProblem(scene)
    cams = initial_cameras(scene, OptimizerConfig(seed=seed))
    pts = np.stack(
        [
            rng.uniform(-0.5, 0.5, n_points),
            rng.uniform(-0.5, 0.5, n_points),
            rng.uniform(1.0, 3.0, n_points),
        ],
        axis=1,
    )
    theta = problem.pack(cams, pts)
    lay = problem.layout
    theta[lay.group_of("rotation")] += 0.02 * rng.standard_normal(4 * n_images)
    theta[lay.group_of("translation")] += 0.05 * rng.standard_normal(3 * n_images)
    theta[lay.group_of("intrinsics")] += rng.uniform(-0.1, 0.1, 2 * n_images)
    return problem, theta


def point_in_triangle(p, a, b, c, eps=1e-12):
    """Sign-based inclusion test, inclusive of edges."""
    def cross(o, u, v):
        return (u[0] - o[0]) * (v[1] - o[1]) - (v[0] - o[0]) * (u[1] - o[1])

    d1 = cross(a, b, p)
    d2 = cross(b, c, p)
    d3 = cross(c, a, p)
    has_neg = (d1 < -eps) or (d2 < -eps) or (d3 < -eps)
    has_pos = (d1 > eps) or (d2 > eps) or (d3 > eps)
    return not (has_neg and has_pos)


def circumcircle_contains(a, b, c, p, tol=1e-9):
    """True when p lies strictly inside the circumcircle of CCW triangle abc."""
    m = np.array(
        [
            [a[0] - p[0], a[1] - p[1], (a[0] - p[0]) ** 2 + (a[1] - p[1]) ** 2],
            [b[0] - p[0], b[1] - p[1], (b[0] - p[0]) ** 2 + (b[1] - p[1]) ** 2],
            [c[0] - p[0], c[1] - p[1], (c[0] - p[0]) ** 2 + (c[1] - p[1]) ** 2],
        ],
        dtype=np.longdouble,
    )
    scale = max(1.0, float(np.max(np.abs(m[:, :2]))))
    return float(np.linalg.det(m.astype(np.float64))) > tol * scale**4


def tilted_quat(rng, max_deg):
    axis = rng.standard_normal(3)
    return quat_from_axis_angle(axis, np.radians(rng.uniform(0.0, max_deg)))
