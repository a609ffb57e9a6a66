"""Pinhole cameras with per-image depth scale/shift, and alignment losses.

A camera stores a world-from-camera rotation (unit quaternion, (w, x, y, z)
order), a world translation, focal lengths and a fixed principal point, plus
an affine depth correction (scale s, shift eta) applied to sampled depth
before backprojection. All loss functions are unit-agnostic: they evaluate
the same formulas whether coordinates are in pixels or normalized units, as
long as cameras and pixels agree.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import kernels


@dataclass
class CameraParams:
    rotation: np.ndarray     # (4,) unit quaternion (w, x, y, z), world-from-camera
    translation: np.ndarray  # (3,)
    fx: float
    fy: float
    cx: float
    cy: float
    depth_scale: float = 1.0
    depth_shift: float = 0.0

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64)
        self.translation = np.asarray(self.translation, dtype=np.float64)

    def matrix(self) -> np.ndarray:
        return quat_to_matrix(self.rotation)


@dataclass
class LossWeights:
    """Multipliers for every regularization term (the 3D term has weight 1).

    The aspect and focal penalties default to 0: their gradients keep a
    constant sign, and under Adam's scale-free steps any nonzero weight makes
    the intrinsics drift at the full learning rate once the mesh stage opens
    up gauge directions. Square-pixel inputs don't need the nudge; set them
    nonzero only for footage with genuinely unknown pixel aspect.
    """

    scale: float = 1.0
    aspect: float = 0.0
    focal: float = 0.0
    neg: float = 100.0
    arap2d: float = 1.0
    flip: float = 10.0
    z: float = 0.1


@dataclass
class LossBreakdown:
    """Raw term values, the weights applied, and the weighted total."""

    terms: dict = field(default_factory=dict)
    weights: dict = field(default_factory=dict)
    total: float = 0.0

    @classmethod
    def build(cls, terms: dict, weights: dict) -> "LossBreakdown":
        total = float(sum(weights.get(k, 1.0) * v for k, v in terms.items()))
        return cls(terms=dict(terms), weights=dict(weights), total=total)

    def weighted(self, name: str) -> float:
        return self.weights.get(name, 1.0) * self.terms[name]


# ---------------------------------------------------------------------------
# quaternions


def quat_normalize(q):
    q = np.asarray(q)
    return q / np.sqrt(np.sum(q * q))


def quat_to_matrix(q) -> np.ndarray:
    """Rotation matrix of a unit quaternion (w, x, y, z)."""
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def matrix_to_quat(R) -> np.ndarray:
    """Unit quaternion (w, x, y, z) of a rotation matrix, w >= 0."""
    R = np.asarray(R, dtype=np.float64)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0:
        s = np.sqrt(tr + 1.0) * 2
        q = np.array(
            [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
        )
    elif R[0, 0] >= R[1, 1] and R[0, 0] >= R[2, 2]:
        s = np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2
        q = np.array(
            [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
        )
    elif R[1, 1] >= R[2, 2]:
        s = np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2]) * 2
        q = np.array(
            [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
        )
    else:
        s = np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1]) * 2
        q = np.array(
            [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
        )
    if q[0] < 0:
        q = -q
    return quat_normalize(q)


def quat_from_axis_angle(axis, angle_rad) -> np.ndarray:
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    half = 0.5 * angle_rad
    return np.concatenate([[np.cos(half)], np.sin(half) * axis])


def rotation_angle_deg(Ra, Rb) -> float:
    """Geodesic angle in degrees between two rotation matrices."""
    c = (np.trace(np.asarray(Ra).T @ np.asarray(Rb)) - 1.0) / 2.0
    return float(np.degrees(np.arccos(np.clip(c, -1.0, 1.0))))


# ---------------------------------------------------------------------------
# projection model


def backproject(pixel, depth, cam: CameraParams) -> np.ndarray:
    """World point of a pixel at (scale-shifted) depth: R (K^-1 x~ (s d + eta)) + t."""
    u, v = pixel
    d = cam.depth_scale * depth + cam.depth_shift
    ray = np.array([(u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, 1.0])
    return cam.matrix() @ (ray * d) + cam.translation


def project(point, cam: CameraParams):
    """Pixel position and camera-frame depth of a world point."""
    pc = cam.matrix().T @ (np.asarray(point, dtype=np.float64) - cam.translation)
    u = cam.fx * pc[0] / pc[2] + cam.cx
    v = cam.fy * pc[1] / pc[2] + cam.cy
    return np.array([u, v]), float(pc[2])


# ---------------------------------------------------------------------------
# losses


def visible_pair_triples(visibility) -> np.ndarray:
    """All (i, j, c) with i > j and correspondence c visible in both images."""
    n, _ = visibility.shape
    triples = []
    for i in range(n):
        for j in range(i):
            both = np.nonzero(visibility[i] & visibility[j])[0]
            for c in both:
                triples.append((i, j, c))
    return np.array(triples, dtype=np.int64).reshape(-1, 3)


def backproject_visible(scene, cams, depths_at_points) -> np.ndarray:
    """Backprojected world point for every visible (image, correspondence).

    Returns a dense (n_images, n_points, 3) array, zeros where not visible.
    """
    corrs = scene.correspondences
    out = np.zeros((scene.n_images, corrs.n_points, 3))
    for i, cam in enumerate(cams):
        vis = np.nonzero(corrs.visibility[i])[0]
        if vis.size == 0:
            continue
        d = cam.depth_scale * depths_at_points[i, vis] + cam.depth_shift
        uv = corrs.pixels[i, vis]
        rays = np.stack(
            [(uv[:, 0] - cam.cx) / cam.fx, (uv[:, 1] - cam.cy) / cam.fy, np.ones(vis.size)],
            axis=1,
        )
        out[i, vis] = (rays * d[:, None]) @ cam.matrix().T + cam.translation
    return out


def loss_3d(scene, cams, depths_at_points) -> float:
    """Mean squared 3D gap between backprojections over co-visible pairs."""
    corrs = scene.correspondences
    triples = visible_pair_triples(corrs.visibility)
    if triples.shape[0] == 0:
        return 0.0
    pts = backproject_visible(scene, cams, depths_at_points)
    n_pts = corrs.n_points
    flat = pts.reshape(-1, 3)
    pa = triples[:, 0] * n_pts + triples[:, 2]
    pb = triples[:, 1] * n_pts + triples[:, 2]
    total, _ = kernels.loss3d_pairs(flat, pa, pb)
    return float(total) / triples.shape[0]


def camera_regularizers(cams, image_dims) -> dict:
    """Raw values of the scale / aspect / focal / negativity regularizers."""
    s = np.array([c.depth_scale for c in cams])
    eta = np.array([c.depth_shift for c in cams])
    l_scale = float((1.0 - s.mean()) ** 2)
    l_aspect = 0.0
    l_focal = 0.0
    for cam, (w, h) in zip(cams, image_dims):
        l_aspect += (cam.fx / cam.fy - h / w) ** 2
        l_focal += cam.fx + cam.fy
    l_neg = float(np.maximum(0.0, -s).mean() ** 2 + np.maximum(0.0, -eta).mean() ** 2)
    return {"scale": l_scale, "aspect": float(l_aspect), "focal": float(l_focal), "neg": l_neg}


def camera_objective(scene, cams, weights: LossWeights, depths_at_points=None) -> LossBreakdown:
    """Weighted camera-stage objective: 3D consistency plus regularizers."""
    from .scene import sampled_correspondence_depths

    if depths_at_points is None:
        depths_at_points = sampled_correspondence_depths(scene)
    dims = [(rec.width, rec.height) for rec in scene.images]
    terms = {"l3d": loss_3d(scene, cams, depths_at_points)}
    terms.update(camera_regularizers(cams, dims))
    wmap = {
        "l3d": 1.0,
        "scale": weights.scale,
        "aspect": weights.aspect,
        "focal": weights.focal,
        "neg": weights.neg,
    }
    return LossBreakdown.build(terms, wmap)


# ---------------------------------------------------------------------------
# cameras.json


def cameras_json_text(cams, depth_normalizer: float) -> str:
    entries = []
    for i, cam in enumerate(cams):
        entries.append(
            {
                "image": i,
                "rotation": [[float(x) for x in row] for row in cam.matrix()],
                "translation": [float(x) for x in cam.translation],
                "fx": float(cam.fx),
                "fy": float(cam.fy),
                "cx": float(cam.cx),
                "cy": float(cam.cy),
                "depth_scale": float(cam.depth_scale),
                "depth_shift": float(cam.depth_shift),
            }
        )
    doc = {"depth_normalizer": float(depth_normalizer), "cameras": entries}
    return json.dumps(doc, indent=1)


def save_cameras_json(path, cams, depth_normalizer: float) -> None:
    Path(path).write_text(cameras_json_text(cams, depth_normalizer))


def load_cameras_json(path):
    doc = json.loads(Path(path).read_text())
    cams = []
    for e in doc["cameras"]:
        cams.append(
            CameraParams(
                rotation=matrix_to_quat(np.array(e["rotation"])),
                translation=np.array(e["translation"], dtype=np.float64),
                fx=e["fx"],
                fy=e["fy"],
                cx=e["cx"],
                cy=e["cy"],
                depth_scale=e["depth_scale"],
                depth_shift=e["depth_shift"],
            )
        )
    return cams, float(doc["depth_normalizer"])
