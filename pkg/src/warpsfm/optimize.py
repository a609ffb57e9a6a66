"""Adam optimization of the packed alignment parameters, in two stages.

Stage one ("camera") freezes mesh vertices and fits cameras + depth
scale/shift against the 3D consistency loss and its regularizers. Stage two
("deform") frees the vertices so the per-image meshes can bend the images
into agreement, while cameras keep updating. Every run is deterministic
given the seed: initialization jitter is the only randomness.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .camera import CameraParams, LossWeights, quat_from_axis_angle
from .mesh import DeformableMesh, MeshTopology, build_scene_meshes
from .objective import AlignProblem


class DivergenceError(RuntimeError):
    pass


@dataclass
class OptimizerConfig:
    lr_rotation: float = 5e-3
    lr_translation: float = 1e-2
    lr_intrinsics: float = 1e-3
    lr_scale_shift: float = 1e-3
    lr_vertices: float = 1e-2
    lr_points: float = 1e-2
    # The BA baseline has no depth term anchoring its focals, so they crawl;
    # it gets a faster intrinsics rate and a longer run to reach convergence.
    lr_intrinsics_ba: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    iterations_camera: int = 2000
    iterations_deform: int = 2000
    iterations_ba: int = 8000
    init_jitter_deg: float = 2.0
    seed: int = 0

    def group_lrs(self) -> dict:
        return {
            "rotation": self.lr_rotation,
            "translation": self.lr_translation,
            "intrinsics": self.lr_intrinsics,
            "scale_shift": self.lr_scale_shift,
            "vertices": self.lr_vertices,
            "points": self.lr_points,
        }


@dataclass
class AlignmentState:
    """Cameras (normalized units) + live meshes (pixel-unit positions)."""

    cams: list
    meshes: list
    corr_vertex: np.ndarray
    weights: LossWeights
    stage: str  # "camera" or "deform"

    def cameras_pixel_units(self, scene) -> list:
        """Equivalent cameras with focal/principal point in pixel units.

        Rotation, translation and the depth scale/shift are unit-free, so
        only fx, fy, cx, cy rescale by max(w, h).
        """
        out = []
        for cam, rec in zip(self.cams, scene.images):
            m = rec.max_dim
            out.append(
                replace(cam, fx=cam.fx * m, fy=cam.fy * m, cx=cam.cx * m, cy=cam.cy * m)
            )
        return out


@dataclass
class AlignResult:
    state: AlignmentState
    camera_state: AlignmentState  # snapshot after the camera-only stage
    trace_camera: list
    trace_deform: list


def adam_step(params, grads, moments, t: int, lrs, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update; functional, bit-reproducible.

    moments is (m, v) or None for a fresh start; lrs is a per-parameter
    learning-rate vector (zero entries freeze parameters exactly).
    """
    if moments is None:
        moments = (np.zeros_like(params), np.zeros_like(params))
    m, v = moments
    m = beta1 * m + (1.0 - beta1) * grads
    v = beta2 * v + (1.0 - beta2) * grads * grads
    m_hat = m / (1.0 - beta1**t)
    v_hat = v / (1.0 - beta2**t)
    new_params = params - lrs * m_hat / (np.sqrt(v_hat) + eps)
    return new_params, (m, v)


def _lr_vector(layout, config: OptimizerConfig, free_groups) -> np.ndarray:
    lrs = np.zeros(layout.size)
    for name, lr in config.group_lrs().items():
        if name in layout.groups and name in free_groups:
            lrs[layout.group_of(name)] = lr
    return lrs


def _renormalize_quats(theta, layout, n_images: int) -> None:
    block = theta[layout.group_of("rotation")].reshape(n_images, 4)
    block /= np.sqrt(np.sum(block * block, axis=1))[:, None]


def run_stage(eval_fn, theta0, layout, n_images, free_groups, iterations, config: OptimizerConfig):
    """Run Adam with fresh moments; returns (theta, per-iteration trace).

    eval_fn(theta) -> (total, grad, raw term dict). Quaternions are
    renormalized after every step. Aborts if the total exceeds 1e6 x its
    initial value (divergence guard).
    """
    theta = np.array(theta0, dtype=np.float64)
    trace = []
    if iterations <= 0:
        return theta, trace
    lrs = _lr_vector(layout, config, free_groups)
    free_mask = layout.mask([g for g in free_groups if g in layout.groups])
    moments = None
    guard = None
    for it in range(1, iterations + 1):
        total, grad, terms = eval_fn(theta)
        if guard is None:
            guard = 1e6 * max(abs(total), 1e-12)
        if not np.isfinite(total) or abs(total) > guard:
            raise DivergenceError(
                f"objective diverged at iteration {it}: total={total:.6g} "
                f"(guard {guard:.6g}); terms={terms}"
            )
        grad = np.where(free_mask, grad, 0.0)
        theta, moments = adam_step(
            theta, grad, moments, it, lrs, config.beta1, config.beta2, config.eps
        )
        if "rotation" in layout.groups:
            _renormalize_quats(theta, layout, n_images)
        trace.append({"total": total, **terms})
    return theta, trace


def initial_cameras(scene, config: OptimizerConfig) -> list:
    """Identity cameras with seeded small rotation jitter (normalized units).

    A single-image scene gets an exact identity camera (nothing to align
    against, so it is kept fixed).
    """
    rng = np.random.default_rng(config.seed)
    cams = []
    for rec in scene.images:
        if scene.n_images == 1:
            q = np.array([1.0, 0.0, 0.0, 0.0])
        else:
            axis = rng.normal(size=3)
            angle = np.radians(rng.uniform(0.0, config.init_jitter_deg))
            q = quat_from_axis_angle(axis, angle)
        m = rec.max_dim
        cams.append(
            CameraParams(
                rotation=q,
                translation=np.zeros(3),
                fx=1.0,
                fy=1.0,
                cx=rec.width / 2.0 / m,
                cy=rec.height / 2.0 / m,
            )
        )
    return cams


def _normalized_positions(problem: AlignProblem, meshes) -> list:
    out = []
    for i, mesh in enumerate(meshes):
        pos = mesh.positions.copy()
        pos[:, :2] *= problem.sigma[i]
        out.append(pos)
    return out


def _write_back(problem: AlignProblem, theta, meshes) -> list:
    """New DeformableMesh list with pixel-unit positions from a packed vector."""
    out = []
    for i, (mesh, pos) in enumerate(zip(meshes, problem.vertex_positions(theta))):
        px = pos.copy()
        px[:, :2] /= problem.sigma[i]
        out.append(replace(mesh, positions=px))
    return out


def align(scene, config: OptimizerConfig | None = None, weights: LossWeights | None = None,
          use_l2d: bool = False) -> AlignResult:
    """Two-stage alignment of a normalized scene; deterministic given seed."""
    config = config or OptimizerConfig()
    weights = weights or LossWeights()
    meshes, corr_vertex = build_scene_meshes(scene)
    problem = AlignProblem(scene, meshes, corr_vertex, weights, use_l2d=use_l2d)
    cams0 = initial_cameras(scene, config)
    theta0 = problem.pack(cams0, _normalized_positions(problem, meshes))

    single = scene.n_images == 1
    camera_groups = () if single else ("rotation", "translation", "intrinsics", "scale_shift")
    deform_groups = () if single else camera_groups + ("vertices",)

    camera_terms = problem.stage_terms("camera")
    full_terms = problem.stage_terms("full")
    theta1, trace1 = run_stage(
        lambda th: problem.value_and_grad(th, camera_terms),
        theta0, problem.layout, scene.n_images, camera_groups,
        config.iterations_camera, config,
    )
    # The camera stage freezes the vertices group, so the snapshot meshes are
    # the initial ones by construction (a unit round-trip through the pixel
    # normalizer could otherwise flip the last bit).
    camera_state = AlignmentState(
        cams=problem.cameras(theta1),
        meshes=[replace(m, positions=m.positions.copy()) for m in meshes],
        corr_vertex=corr_vertex,
        weights=weights,
        stage="camera",
    )
    theta2, trace2 = run_stage(
        lambda th: problem.value_and_grad(th, full_terms),
        theta1, problem.layout, scene.n_images, deform_groups,
        config.iterations_deform, config,
    )
    state = AlignmentState(
        cams=problem.cameras(theta2),
        meshes=[replace(m, positions=m.positions.copy()) for m in meshes]
        if single
        else _write_back(problem, theta2, meshes),
        corr_vertex=corr_vertex,
        weights=weights,
        stage="deform",
    )
    return AlignResult(
        state=state, camera_state=camera_state, trace_camera=trace1, trace_deform=trace2
    )


_WEIGHT_FIELDS = ("scale", "aspect", "focal", "neg", "arap2d", "flip", "z")


def save_state(path, state: AlignmentState, depth_normalizer: float = 1.0) -> None:
    """Checkpoint an alignment state as a .npz (re-exportable without rerunning)."""
    arrays = {
        "stage": np.array(state.stage),
        "depth_normalizer": np.array(depth_normalizer),
        "corr_vertex": state.corr_vertex,
        "weights": np.array([getattr(state.weights, f) for f in _WEIGHT_FIELDS]),
        "rotations": np.stack([c.rotation for c in state.cams]),
        "translations": np.stack([c.translation for c in state.cams]),
        "intrinsics": np.array([[c.fx, c.fy, c.cx, c.cy] for c in state.cams]),
        "scale_shift": np.array([[c.depth_scale, c.depth_shift] for c in state.cams]),
    }
    for i, mesh in enumerate(state.meshes):
        arrays[f"mesh{i}_vertices0"] = mesh.topology.vertices0
        arrays[f"mesh{i}_faces"] = mesh.topology.faces
        arrays[f"mesh{i}_areas0"] = mesh.topology.areas0
        arrays[f"mesh{i}_boundary"] = mesh.topology.boundary_flags
        arrays[f"mesh{i}_z0"] = mesh.z0
        arrays[f"mesh{i}_positions"] = mesh.positions
    np.savez(path, **arrays)


def load_state(path):
    """Inverse of save_state; returns (AlignmentState, depth_normalizer)."""
    with np.load(path, allow_pickle=False) as data:
        n = data["rotations"].shape[0]
        cams = []
        for i in range(n):
            fx, fy, cx, cy = data["intrinsics"][i]
            s, eta = data["scale_shift"][i]
            cams.append(
                CameraParams(
                    rotation=data["rotations"][i],
                    translation=data["translations"][i],
                    fx=float(fx), fy=float(fy), cx=float(cx), cy=float(cy),
                    depth_scale=float(s), depth_shift=float(eta),
                )
            )
        meshes = []
        for i in range(n):
            topo = MeshTopology(
                vertices0=data[f"mesh{i}_vertices0"],
                faces=data[f"mesh{i}_faces"],
                areas0=data[f"mesh{i}_areas0"],
                boundary_flags=data[f"mesh{i}_boundary"],
            )
            meshes.append(
                DeformableMesh(
                    topology=topo, z0=data[f"mesh{i}_z0"],
                    positions=data[f"mesh{i}_positions"],
                )
            )
        w = data["weights"]
        state = AlignmentState(
            cams=cams,
            meshes=meshes,
            corr_vertex=data["corr_vertex"],
            weights=LossWeights(**{f: float(w[k]) for k, f in enumerate(_WEIGHT_FIELDS)}),
            stage=str(data["stage"]),
        )
        return state, float(data["depth_normalizer"])
