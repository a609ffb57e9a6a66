"""Synthetic box-room scenes with exact ground-truth cameras.

A textured axis-aligned box room is rendered from cameras on an arc via ray
casting (one ray per pixel, depth = camera-frame z, exact pinhole geometry).
Labeled correspondences are true 3D wall points projected into every view
where they pass visibility and raster-accuracy checks. Scenes can then be
made geometrically inconsistent with a smooth per-image displacement field,
mimicking hand-drawn geometry while keeping each image internally coherent.

Axes: x right, y down, z forward; cameras look toward the +z wall.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .camera import CameraParams, matrix_to_quat
from .scene import CorrespondenceSet, ImageRecord, Scene


class SynthesisError(RuntimeError):
    pass


@dataclass
class SyntheticSpec:
    room_size: tuple = (4.0, 3.0, 5.0)  # full extents (x, y, z)
    texture: str = "checkerboard"       # "checkerboard" | "gradient"
    n_cameras: int = 5
    image_size: tuple = (400, 300)      # (w, h)
    ring_radius: float = 0.3            # fraction of min(x, z) half-extent
    ring_center_z: float = -0.4         # arc center, fraction of z half-extent
    arc_deg: float = 50.0               # angular spread of the camera arc
    height_jitter: float = 0.1          # camera y offset, fraction of y half-extent
    focal_frac: float = 0.7             # fx = fy = focal_frac * width
    n_points: int = 24
    margin_px: float = 12.0             # in-bounds margin for labeled pixels
    delta: float = 0.0                  # inconsistency magnitude (see perturb_scene)
    depth_noise: float = 0.0            # multiplicative smooth depth error amplitude
    seed: int = 0

    def __post_init__(self):
        if self.n_cameras < 2:
            raise SynthesisError("need at least 2 cameras")
        if self.delta < 0 or self.depth_noise < 0:
            raise SynthesisError("delta and depth_noise must be >= 0")
        if self.texture not in ("checkerboard", "gradient"):
            raise SynthesisError(f"unknown texture style: {self.texture}")


@dataclass
class GroundTruth:
    cams: list                 # CameraParams in pixel units, world-from-camera
    points_world: np.ndarray   # (C, 3)
    point_faces: np.ndarray    # (C,) wall id of each point
    spec: SyntheticSpec = field(repr=False, default=None)


def _look_at(position, target):
    """World-from-camera rotation: z toward target, y as world-down as possible."""
    fwd = np.asarray(target, dtype=np.float64) - position
    fwd = fwd / np.linalg.norm(fwd)
    right = np.cross([0.0, 1.0, 0.0], fwd)
    right = right / np.linalg.norm(right)
    down = np.cross(fwd, right)
    return np.stack([right, down, fwd], axis=1)


def ground_truth_cameras(spec: SyntheticSpec, rng) -> list:
    """Pixel-unit cameras on an arc, all looking at a point on the far wall."""
    w, h = spec.image_size
    hx, hy, hz = np.asarray(spec.room_size) / 2.0
    r = spec.ring_radius * min(hx, hz)
    center_z = spec.ring_center_z * hz
    target = np.array([0.0, 0.0, 0.6 * hz])
    f = spec.focal_frac * w
    cams = []
    for i in range(spec.n_cameras):
        frac = i / (spec.n_cameras - 1) if spec.n_cameras > 1 else 0.5
        alpha = np.radians((frac - 0.5) * spec.arc_deg)
        y = rng.uniform(-spec.height_jitter, spec.height_jitter) * hy
        pos = np.array([r * np.sin(alpha), y, center_z - r * np.cos(alpha)])
        R = _look_at(pos, target)
        cams.append(
            CameraParams(
                rotation=matrix_to_quat(R),
                translation=pos,
                fx=f,
                fy=f,
                cx=w / 2.0,
                cy=h / 2.0,
            )
        )
    return cams


def _wall_coords(points, face):
    """The two in-plane coordinates of points on a given wall."""
    axis = face // 2
    others = [a for a in range(3) if a != axis]
    return points[:, others[0]], points[:, others[1]]


_FACE_BASE = np.array(
    [
        [200, 120, 110],
        [120, 200, 130],
        [130, 140, 210],
        [210, 200, 120],
        [190, 130, 200],
        [120, 200, 200],
    ],
    dtype=np.float64,
)


def _shade(points, faces, spec: SyntheticSpec) -> np.ndarray:
    """Flat-shaded wall color at hit points; (n, 3) float in [0, 255]."""
    rgb = np.zeros((points.shape[0], 3))
    tile = max(spec.room_size) / 8.0
    for fid in range(6):
        sel = faces == fid
        if not np.any(sel):
            continue
        a, b = _wall_coords(points[sel], fid)
        base = _FACE_BASE[fid]
        if spec.texture == "checkerboard":
            parity = (np.floor(a / tile) + np.floor(b / tile)) % 2
            shadefac = np.where(parity > 0.5, 1.0, 0.55)
            rgb[sel] = base[None, :] * shadefac[:, None]
        else:
            ext = max(spec.room_size)
            fa = 0.5 + 0.5 * np.clip(a / ext, -1.0, 1.0)
            fb = 0.5 + 0.5 * np.clip(b / ext, -1.0, 1.0)
            rgb[sel] = base[None, :] * (0.4 + 0.3 * fa + 0.3 * fb)[:, None]
    return rgb


def render_view(cam: CameraParams, spec: SyntheticSpec):
    """Ray-cast one view; returns (rgb uint8, depth float32, face_id int64).

    The depth raster stores camera-frame z, which for rays with unit
    z-component in the camera frame is exactly the ray parameter.
    """
    w, h = spec.image_size
    half = np.asarray(spec.room_size) / 2.0
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    rays_cam = np.stack(
        [(xs - cam.cx) / cam.fx, (ys - cam.cy) / cam.fy, np.ones_like(xs)], axis=-1
    ).reshape(-1, 3)
    dirs = rays_cam @ cam.matrix().T
    t, fid = kernels.raycast_box(cam.translation, dirs, half)
    if np.any(fid < 0):
        raise SynthesisError("camera ray escaped the room (camera outside the box?)")
    hits = cam.translation + t[:, None] * dirs
    rgb = _shade(hits, fid, spec)
    rgb_u8 = np.rint(np.clip(rgb, 0, 255)).astype(np.uint8).reshape(h, w, 3)
    return rgb_u8, t.reshape(h, w).astype(np.float32), fid.reshape(h, w)


def _project(cam: CameraParams, point):
    pc = cam.matrix().T @ (point - cam.translation)
    return np.array([cam.fx * pc[0] / pc[2] + cam.cx, cam.fy * pc[1] / pc[2] + cam.cy]), pc[2]


def _sample_wall_point(rng, spec: SyntheticSpec):
    """Random point on a wall interior (15% margin from wall edges)."""
    half = np.asarray(spec.room_size) / 2.0
    # Spread points over all five walls the cameras can see (never the one
    # behind them): depth variation across walls is what makes camera
    # recovery well-posed, a single dominant plane is a degenerate scene.
    fid = int(rng.choice([4, 0, 1, 2, 3]))
    axis = fid // 2
    others = [a for a in range(3) if a != axis]
    p = np.zeros(3)
    p[axis] = half[axis] if fid % 2 == 0 else -half[axis]
    for o in others:
        p[o] = rng.uniform(-0.85, 0.85) * half[o]
    return p, fid


def _point_visibility(point, fid, cams, face_rasters, spec: SyntheticSpec):
    """Views where the point projects in-bounds (with margin) onto its own wall.

    The 2x2 raster neighborhood of the projection must belong to the same
    wall, which keeps bilinear depth sampling accurate (no gradient kinks
    from wall seams) for every labeled pixel.
    """
    w, h = spec.image_size
    m = spec.margin_px
    vis = []
    pix = []
    for i, cam in enumerate(cams):
        uv, z = _project(cam, point)
        if z <= 0.1:
            continue
        if not (m <= uv[0] <= w - 1 - m and m <= uv[1] <= h - 1 - m):
            continue
        x0, y0 = int(np.floor(uv[0])), int(np.floor(uv[1]))
        if not np.all(face_rasters[i][y0 : y0 + 2, x0 : x0 + 2] == fid):
            continue
        vis.append(i)
        pix.append(uv)
    return vis, pix


def _smooth_field(coeff, us, vs, w, h):
    """Low-frequency cosine-basis field evaluated at continuous pixel coords."""
    out = np.zeros_like(us, dtype=np.float64)
    k = coeff.shape[0]
    for a in range(k):
        for b in range(k):
            out += coeff[a, b] * np.cos(np.pi * a * us / (w - 1)) * np.cos(
                np.pi * b * vs / (h - 1)
            )
    return out


def generate_scene(spec: SyntheticSpec):
    """Render a synthetic scene; returns (Scene, GroundTruth).

    Deterministic given the SyntheticSpec (including its seed). Depth rasters carry
    optional smooth multiplicative noise; labeled pixels are exact pinhole
    projections of the stored ground-truth 3D points.
    """
    rng = np.random.default_rng(spec.seed)
    cams = ground_truth_cameras(spec, rng)
    w, h = spec.image_size

    rgbs, depths, face_rasters = [], [], []
    for cam in cams:
        rgb, depth, fid = render_view(cam, spec)
        rgbs.append(rgb)
        depths.append(depth.astype(np.float64))
        face_rasters.append(fid)

    points_world, point_faces, observations = [], [], []
    for c in range(spec.n_points):
        for attempt in range(1000):
            p, fid = _sample_wall_point(rng, spec)
            vis, pix = _point_visibility(p, fid, cams, face_rasters, spec)
            if len(vis) >= 2:
                points_world.append(p)
                point_faces.append(fid)
                observations.append((vis, pix))
                break
        else:
            raise SynthesisError(
                f"could not sample a point visible in >= 2 views after 1000 attempts "
                f"(point {c})"
            )

    pixels = np.zeros((spec.n_cameras, spec.n_points, 2))
    visibility = np.zeros((spec.n_cameras, spec.n_points), dtype=bool)
    for c, (vis, pix) in enumerate(observations):
        for i, uv in zip(vis, pix):
            pixels[i, c] = uv
            visibility[i, c] = True

    if spec.depth_noise > 0:
        ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
        for i in range(spec.n_cameras):
            coeff = rng.normal(size=(3, 3))
            g = _smooth_field(coeff, xs, ys, w, h)
            g /= max(np.abs(g).max(), 1e-12)
            depths[i] = depths[i] * (1.0 + spec.depth_noise * g)

    images = [
        ImageRecord(id=i, rgb=rgbs[i], depth=depths[i].astype(np.float32),
                    mask=np.ones((h, w), dtype=bool))
        for i in range(spec.n_cameras)
    ]
    scene = Scene(
        images=images,
        correspondences=CorrespondenceSet(pixels=pixels, visibility=visibility),
    )
    gt = GroundTruth(
        cams=cams,
        points_world=np.array(points_world),
        point_faces=np.array(point_faces, dtype=np.int64),
        spec=spec,
    )
    return scene, gt


def exact_point_depths(gt: GroundTruth) -> np.ndarray:
    """Camera-frame depth of every ground-truth point in every view.

    These are the analytically exact values the depth rasters hold at the
    labeled pixels (before any depth noise); entries for views that do not
    actually see a point are still computed and only meaningful to callers
    that consult the scene's visibility.
    """
    n, c = len(gt.cams), gt.points_world.shape[0]
    out = np.full((n, c), np.nan)
    for i, cam in enumerate(gt.cams):
        for k in range(c):
            _, z = _project(cam, gt.points_world[k])
            out[i, k] = z
    return out


def perturb_scene(scene: Scene, delta: float, seed: int) -> Scene:
    """Apply a smooth per-image 2D displacement with max |d| = delta*max(w,h).

    RGB, depth and mask rasters are resampled through the exact inverse of
    x -> x + d(x) (fixed-point iteration), and labeled pixels move forward by
    exactly d(x). delta = 0 returns the scene unchanged.
    """
    if delta < 0:
        raise ValueError("delta must be >= 0")
    if delta == 0:
        return scene
    rng = np.random.default_rng(seed)
    corrs = scene.correspondences
    new_images = []
    new_pixels = corrs.pixels.copy()
    # Emphasize the oscillatory modes: the constant term is a global
    # translation and the linear-ish modes are nearly affine, both of which a
    # camera change could explain away. Inconsistency that no camera can
    # absorb is the regime of interest.
    mode_weight = np.array([[a * a + b * b for b in range(3)] for a in range(3)],
                           dtype=np.float64)
    for i, rec in enumerate(scene.images):
        w, h = rec.width, rec.height
        cdx = rng.normal(size=(3, 3)) * mode_weight
        cdy = rng.normal(size=(3, 3)) * mode_weight
        ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
        dx = _smooth_field(cdx, xs, ys, w, h)
        dy = _smooth_field(cdy, xs, ys, w, h)
        mag = np.sqrt(dx * dx + dy * dy).max()
        scale = delta * rec.max_dim / max(mag, 1e-12)
        cdx *= scale
        cdy *= scale

        # Inverse warp: find x with x + d(x) = y for every pixel center y.
        sx, sy = xs.copy(), ys.copy()
        for _ in range(30):
            sx = xs - _smooth_field(cdx, sx, sy, w, h)
            sy = ys - _smooth_field(cdy, sx, sy, w, h)
        sxf, syf = sx.ravel(), sy.ravel()
        rgb = np.stack(
            [
                kernels.bilinear_sample(rec.rgb[:, :, ch].astype(np.float64), sxf, syf)
                for ch in range(3)
            ],
            axis=-1,
        ).reshape(h, w, 3)
        depth = kernels.bilinear_sample(rec.depth.astype(np.float64), sxf, syf).reshape(h, w)
        mask = kernels.bilinear_sample(rec.mask.astype(np.float64), sxf, syf).reshape(h, w)
        new_images.append(
            ImageRecord(
                id=rec.id,
                rgb=np.rint(np.clip(rgb, 0, 255)).astype(np.uint8),
                depth=depth.astype(np.float32),
                mask=mask > 0.5,
            )
        )

        vis = np.nonzero(corrs.visibility[i])[0]
        if vis.size:
            u, v = corrs.pixels[i, vis, 0], corrs.pixels[i, vis, 1]
            nu = u + _smooth_field(cdx, u, v, w, h)
            nv = v + _smooth_field(cdy, u, v, w, h)
            new_pixels[i, vis, 0] = np.clip(nu, 0.0, w - 1.0)
            new_pixels[i, vis, 1] = np.clip(nv, 0.0, h - 1.0)

    return Scene(
        images=new_images,
        correspondences=CorrespondenceSet(pixels=new_pixels, visibility=corrs.visibility.copy()),
        depth_normalizer=scene.depth_normalizer,
    )


def load_ground_truth(path) -> list:
    """True cameras from a ground_truth.json, as pixel-unit CameraParams."""
    doc = json.loads(Path(path).read_text())
    cams = []
    for e in doc["cameras"]:
        cams.append(
            CameraParams(
                rotation=matrix_to_quat(np.array(e["rotation"], dtype=np.float64)),
                translation=np.array(e["translation"], dtype=np.float64),
                fx=float(e["fx"]),
                fy=float(e["fy"]),
                cx=float(e["cx"]),
                cy=float(e["cy"]),
            )
        )
    return cams


def ground_truth_json_text(gt: GroundTruth) -> str:
    cams = []
    for i, cam in enumerate(gt.cams):
        cams.append(
            {
                "image": i,
                "rotation": [[float(x) for x in row] for row in cam.matrix()],
                "translation": [float(x) for x in cam.translation],
                "fx": float(cam.fx),
                "fy": float(cam.fy),
                "cx": float(cam.cx),
                "cy": float(cam.cy),
            }
        )
    doc = {
        "cameras": cams,
        "points_world": [[float(x) for x in p] for p in gt.points_world],
    }
    return json.dumps(doc, indent=1)
