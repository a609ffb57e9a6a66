"""Holdout evaluation: correspondence consistency, pose error, BA baseline.

The headline metric counts held-out correspondence pairs whose backprojected
source point lands within a pixel radius of the labeled target. Both sides
are read through the recovered meshes, so a deformed solution is scored on
the same footing as a camera-only one (for which the meshes are untouched and
the warp is the identity).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import kernels
from .camera import CameraParams, backproject, project, rotation_angle_deg
from .objective import BA_GROUPS, BAProblem, EvaluationError
from .optimize import AlignmentState, OptimizerConfig, initial_cameras, run_stage
from .scene import CorrespondenceSet, Scene, sampled_correspondence_depths


class HoldoutError(RuntimeError):
    pass


MIN_TRAIN_PER_IMAGE = 6


@dataclass
class HoldoutSplit:
    train: CorrespondenceSet
    holdout: CorrespondenceSet
    seed: int


def holdout_split(corrs: CorrespondenceSet, k: int, seed: int = 0) -> HoldoutSplit:
    """Move k random correspondences (whole points, all views) to a holdout.

    Only points visible in at least two images are eligible (a single-view
    point cannot be scored). Every image must keep at least
    MIN_TRAIN_PER_IMAGE visible labels, otherwise the scene is too sparse to
    both align and evaluate. k=0 is a no-op split with an empty holdout.
    """
    if k < 0:
        raise HoldoutError("holdout count must be >= 0")
    n_points = corrs.n_points
    all_idx = np.arange(n_points)
    if k == 0:
        return HoldoutSplit(
            train=corrs.subset(all_idx), holdout=corrs.subset(all_idx[:0]), seed=seed
        )
    eligible = np.nonzero(corrs.visibility.sum(axis=0) >= 2)[0]
    if k > eligible.size:
        raise HoldoutError(
            f"cannot hold out {k} points: only {eligible.size} are visible in "
            f">= 2 images"
        )
    rng = np.random.default_rng(seed)
    hold = np.sort(eligible[rng.permutation(eligible.size)[:k]])
    keep = np.setdiff1d(all_idx, hold)

    counts = corrs.visibility[:, keep].sum(axis=1)
    if np.any(counts < MIN_TRAIN_PER_IMAGE):
        bad = int(np.argmin(counts))
        raise HoldoutError(
            f"image {bad} would keep only {int(counts[bad])} labeled points "
            f"(need >= {MIN_TRAIN_PER_IMAGE}); hold out fewer points"
        )
    return HoldoutSplit(train=corrs.subset(keep), holdout=corrs.subset(hold), seed=seed)


# ---------------------------------------------------------------------------
# correspondence consistency


@dataclass
class PccResult:
    alpha: float
    n_pairs: int
    n_correct: int
    distances_px: np.ndarray  # (n_pairs,) in target-image pixels; inf if behind camera

    @property
    def fraction(self) -> float:
        return self.n_correct / self.n_pairs if self.n_pairs else float("nan")


def mesh_warp_points(mesh, depth_raster, pixels):
    """Carry pixel positions (and raster depth) through a mesh deformation.

    Each pixel is located in the undeformed mesh; its deformed position is
    the barycentric combination of the moved vertices, and its depth is the
    raster value plus the interpolated per-vertex depth change. Returns
    (positions (K, 2), depths (K,)).
    """
    pixels = np.asarray(pixels, dtype=np.float64).reshape(-1, 2)
    topo = mesh.topology
    face_idx, bary = kernels.locate_points(pixels, topo.vertices0, topo.faces)
    if np.any(face_idx < 0):
        bad = pixels[face_idx < 0][0]
        raise HoldoutError(f"pixel ({bad[0]:.2f}, {bad[1]:.2f}) is outside the mesh")
    tri = topo.faces[face_idx]
    xy = np.einsum("kf,kfd->kd", bary, mesh.positions[tri][:, :, :2])
    dz = np.einsum("kf,kf->k", bary, mesh.positions[tri][:, :, 2] - mesh.z0[tri])
    base = kernels.bilinear_sample(
        np.asarray(depth_raster, dtype=np.float64), pixels[:, 0], pixels[:, 1]
    )
    return xy, base + dz


def _ordered_pairs(visibility):
    n = visibility.shape[0]
    out = []
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            for c in np.nonzero(visibility[i] & visibility[j])[0]:
                out.append((i, j, c))
    return out


def pcc(scene: Scene, state: AlignmentState, holdout: CorrespondenceSet,
        alpha: float = 0.03) -> PccResult:
    """Fraction of ordered holdout pairs that land within alpha * max(w, h).

    `scene` must be the (normalized) scene the state was aligned on;
    `holdout` holds the labels that were withheld from alignment, in original
    pixel coordinates.
    """
    pixels, visibility = holdout.pixels, holdout.visibility
    pairs = _ordered_pairs(np.asarray(visibility, dtype=bool))
    if not pairs:
        raise HoldoutError("holdout has no co-visible correspondence pairs")
    sigma = np.array([1.0 / rec.max_dim for rec in scene.images])
    warped = [
        mesh_warp_points(state.meshes[i], scene.images[i].depth, pixels[i])
        for i in range(scene.n_images)
    ]
    dists = np.empty(len(pairs))
    for e, (i, j, c) in enumerate(pairs):
        src_xy, src_z = warped[i][0][c], warped[i][1][c]
        tgt_xy = warped[j][0][c]
        world = backproject(src_xy * sigma[i], src_z, state.cams[i])
        uv, z = project(world, state.cams[j])
        if z <= 0:
            dists[e] = np.inf
            continue
        dists[e] = np.linalg.norm(uv / sigma[j] - tgt_xy)
    radii = np.array([alpha * scene.images[j].max_dim for _, j, _ in pairs])
    n_correct = int(np.sum(dists <= radii))
    return PccResult(alpha=alpha, n_pairs=len(pairs), n_correct=n_correct,
                     distances_px=dists)


# ---------------------------------------------------------------------------
# pose accuracy


def pair_rotation_errors(cams_a, cams_b) -> np.ndarray:
    """Geodesic angle between relative rotations, every unordered pair (deg).

    Relative rotations R_i^T R_j are invariant to the global world frame, so
    two reconstructions are comparable without registration.
    """
    n = len(cams_a)
    if n != len(cams_b):
        raise ValueError("camera lists differ in length")
    Ra = [c.matrix() for c in cams_a]
    Rb = [c.matrix() for c in cams_b]
    errs = []
    for i in range(n):
        for j in range(i + 1, n):
            errs.append(rotation_angle_deg(Ra[i].T @ Ra[j], Rb[i].T @ Rb[j]))
    return np.array(errs)


def relative_rotation_error(cams_a, cams_b) -> float:
    """Mean pairwise relative-rotation error in degrees."""
    return float(np.mean(pair_rotation_errors(cams_a, cams_b)))


# ---------------------------------------------------------------------------
# traditional bundle-adjustment baseline


@dataclass
class BaResult:
    cams: list            # normalized units, like AlignmentState.cams
    points: np.ndarray    # (C, 3) world points
    trace: list


def traditional_ba(scene: Scene, config: OptimizerConfig | None = None) -> BaResult:
    """Cameras + rigid world points fit to the labels by reprojection alone.

    The classic model: no depth maps, no deformation. On consistent input it
    recovers poses to high accuracy; on warped drawings it has no slack to
    absorb the inconsistency, which is the point of the comparison.
    """
    config = config or OptimizerConfig()
    corrs = scene.correspondences
    counts = corrs.visible_counts()
    if (counts < 2).any():
        bad = int(np.argmin(counts))
        raise EvaluationError(
            f"bundle adjustment needs every point in >= 2 views; "
            f"point {bad} is visible in {int(counts[bad])}"
        )
    cams0 = initial_cameras(scene, config)
    sigma = np.array([1.0 / rec.max_dim for rec in scene.images])
    depths = sampled_correspondence_depths(scene)

    pts0 = np.zeros((corrs.n_points, 3))
    for c in range(corrs.n_points):
        vis = np.nonzero(corrs.visibility[:, c])[0]
        acc = [
            backproject(corrs.pixels[i, c] * sigma[i], depths[i, c], cams0[i])
            for i in vis
        ]
        pts0[c] = np.mean(acc, axis=0)

    ba = BAProblem(scene)
    theta0 = ba.pack(cams0, pts0)

    def eval_fn(theta):
        val, grad = ba.value_and_grad(theta)
        return val, grad, {"reproj": val}

    ba_config = replace(config, lr_intrinsics=config.lr_intrinsics_ba)
    theta, trace = run_stage(
        eval_fn, theta0, ba.layout, scene.n_images, BA_GROUPS,
        config.iterations_ba, ba_config,
    )
    return BaResult(cams=ba.cameras(theta), points=ba.points(theta), trace=trace)


def pcc_ba(scene: Scene, ba: BaResult, holdout: CorrespondenceSet,
           alpha: float = 0.03) -> PccResult:
    """Holdout consistency for the BA baseline, on the method's footing.

    Every baseline is scored by the same transfer: backproject the held-out
    pixel from the source view at its depth-map depth, reproject into the
    target view. BA fits cameras to the labels alone — it neither aligns the
    depth maps (no scale/shift) nor bends the images — so the raw depths are
    used with its cameras. Its world scale is commensurate because its points
    were initialized from the same depth maps.
    """
    pixels, visibility = holdout.pixels, holdout.visibility
    pairs = _ordered_pairs(np.asarray(visibility, dtype=bool))
    if not pairs:
        raise HoldoutError("holdout has no co-visible correspondence pairs")
    sigma = np.array([1.0 / rec.max_dim for rec in scene.images])
    depth = [
        kernels.bilinear_sample(
            np.asarray(scene.images[i].depth, dtype=np.float64),
            np.ascontiguousarray(pixels[i, :, 0]),
            np.ascontiguousarray(pixels[i, :, 1]),
        )
        for i in range(scene.n_images)
    ]
    dists = np.empty(len(pairs))
    for e, (i, j, c) in enumerate(pairs):
        world = backproject(pixels[i][c] * sigma[i], depth[i][c], ba.cams[i])
        uv, z = project(world, ba.cams[j])
        dists[e] = np.inf if z <= 0 else np.linalg.norm(uv / sigma[j] - pixels[j][c])
    radii = np.array([alpha * scene.images[j].max_dim for _, j, _ in pairs])
    return PccResult(alpha=alpha, n_pairs=len(pairs),
                     n_correct=int(np.sum(dists <= radii)), distances_px=dists)


# ---------------------------------------------------------------------------
# reprojection gap


def loss_2d(scene: Scene, state: AlignmentState) -> float:
    """Mean squared reprojection gap over ordered visible pairs, in px^2.

    Each correspondence is backprojected from its source mesh vertex and
    reprojected into the target image, where it is compared against the
    target's (possibly moved) vertex position.
    """
    vis = scene.correspondences.visibility
    pairs = _ordered_pairs(vis)
    if not pairs:
        return 0.0
    sigma = np.array([1.0 / rec.max_dim for rec in scene.images])
    total = 0.0
    for i, j, c in pairs:
        vi = state.corr_vertex[i, c]
        vj = state.corr_vertex[j, c]
        src = state.meshes[i].positions[vi]
        world = backproject(src[:2] * sigma[i], src[2], state.cams[i])
        uv, _ = project(world, state.cams[j])
        tgt = state.meshes[j].positions[vj, :2]
        total += float(np.sum((uv / sigma[j] - tgt) ** 2))
    return total / len(pairs)
