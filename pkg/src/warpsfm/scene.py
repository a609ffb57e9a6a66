"""Scene data model: images, depth maps, transient masks, point correspondences.

A scene directory looks like:

    scene/
      images/<id>.png   8-bit RGB, zero-padded integer ids starting at 0
      depths/<id>.pfm   grayscale float32 PFM, same dims as the image
      masks/<id>.png    8-bit gray, 255 = static scene, 0 = transient (optional)
      points.json       correspondence annotations (schema below)

points.json:

    { "version": 1,
      "images": ["0.png", "1.png", ...],
      "points": [ { "id": 0,
                    "obs": [ {"image": 0, "u": 312.5, "v": 118.0, "visible": true},
                             {"image": 1, "visible": false} ] } ] }

u, v are in pixel units, origin at the top-left corner, u rightward, v
downward. Visible pixels must lie in [0, w-1] x [0, h-1] so depth can be
sampled bilinearly.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from PIL import Image

from . import kernels
from .pfm import read_pfm, write_pfm


class SceneError(Exception):
    """Base class for scene loading/validation failures."""


class SceneLoadError(SceneError):
    pass


class SceneStructureError(SceneError):
    pass


class NormalizationError(SceneError):
    pass


class PixelOutOfRange(SceneError):
    pass


@dataclass
class ImageRecord:
    """One image with its depth map and transient mask."""

    id: int
    rgb: np.ndarray    # (H, W, 3) uint8
    depth: np.ndarray  # (H, W) float, nonnegative (float32 on disk, float64 once normalized)
    mask: np.ndarray   # (H, W) bool, True = static scene

    @property
    def height(self) -> int:
        return self.rgb.shape[0]

    @property
    def width(self) -> int:
        return self.rgb.shape[1]

    @property
    def max_dim(self) -> int:
        return max(self.width, self.height)


@dataclass
class CorrespondenceSet:
    """Labeled multi-view point correspondences.

    pixels[i, c] is the (u, v) position of correspondence c in image i;
    its value is only meaningful where visibility[i, c] is True.
    """

    pixels: np.ndarray      # (n_images, n_points, 2) float64
    visibility: np.ndarray  # (n_images, n_points) bool

    @property
    def n_images(self) -> int:
        return self.pixels.shape[0]

    @property
    def n_points(self) -> int:
        return self.pixels.shape[1]

    def visible_counts(self) -> np.ndarray:
        """Number of images each correspondence is visible in."""
        return self.visibility.sum(axis=0)

    def subset(self, point_idx) -> "CorrespondenceSet":
        idx = np.asarray(point_idx, dtype=int)
        return CorrespondenceSet(self.pixels[:, idx].copy(), self.visibility[:, idx].copy())


@dataclass
class Scene:
    """All inputs for one reconstruction problem."""

    images: list[ImageRecord]
    correspondences: CorrespondenceSet
    depth_normalizer: float = 1.0

    @property
    def n_images(self) -> int:
        return len(self.images)


@dataclass
class ValidationReport:
    errors: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    stats: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.errors


_IMG_RE = re.compile(r"^(\d+)\.png$")


def _read_image(path: Path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("RGB"), dtype=np.uint8)
    except FileNotFoundError:
        raise SceneLoadError(f"missing image file: {path}")
    except OSError as exc:
        raise SceneLoadError(f"corrupt image file {path}: {exc}")


def _read_mask(path: Path, shape) -> np.ndarray:
    if not path.exists():
        return np.ones(shape, dtype=bool)
    try:
        with Image.open(path) as im:
            mask = np.asarray(im.convert("L"))
    except OSError as exc:
        raise SceneLoadError(f"corrupt mask file {path}: {exc}")
    if mask.shape != shape:
        raise SceneStructureError(
            f"mask {path} has shape {mask.shape}, image is {shape}"
        )
    return mask > 127


def load_scene(scene_dir) -> Scene:
    """Load and structurally check a scene directory.

    Depths are returned as stored; call normalize_depths() before alignment.
    """
    root = Path(scene_dir)
    if not root.is_dir():
        raise SceneLoadError(f"scene directory not found: {root}")
    image_dir = root / "images"
    if not image_dir.is_dir():
        raise SceneLoadError(f"missing images/ directory in {root}")

    stems = sorted(
        (int(m.group(1)), p.stem)
        for p in image_dir.iterdir()
        if (m := _IMG_RE.match(p.name))
    )
    ids = [i for i, _ in stems]
    if not ids:
        raise SceneLoadError(f"no image files found in {image_dir}")
    if ids != list(range(len(ids))):
        raise SceneLoadError(f"image ids in {image_dir} are not contiguous from 0: {ids}")

    images = []
    for i, stem in stems:
        rgb = _read_image(image_dir / f"{stem}.png")
        depth_path = root / "depths" / f"{stem}.pfm"
        if not depth_path.exists():
            raise SceneLoadError(f"missing depth file: {depth_path}")
        depth = read_pfm(depth_path)
        if depth.shape != rgb.shape[:2]:
            raise SceneStructureError(
                f"depth {depth_path} has shape {depth.shape}, image is {rgb.shape[:2]}"
            )
        mask = _read_mask(root / "masks" / f"{stem}.png", rgb.shape[:2])
        images.append(ImageRecord(id=i, rgb=rgb, depth=depth, mask=mask))

    points_path = root / "points.json"
    correspondences = _load_points(points_path, len(images))
    return Scene(images=images, correspondences=correspondences)


def _load_points(path: Path, n_images: int) -> CorrespondenceSet:
    if not path.exists():
        raise SceneLoadError(f"missing annotation file: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SceneLoadError(f"corrupt annotation file {path}: {exc}")
    if doc.get("version") != 1:
        raise SceneLoadError(f"{path}: unsupported points.json version {doc.get('version')}")
    listed = doc.get("images", [])
    if len(listed) != n_images:
        raise SceneStructureError(
            f"{path} lists {len(listed)} images but the scene has {n_images}"
        )
    points = doc.get("points", [])
    n_points = len(points)
    pixels = np.zeros((n_images, n_points, 2), dtype=np.float64)
    visibility = np.zeros((n_images, n_points), dtype=bool)
    for c, pt in enumerate(points):
        for ob in pt.get("obs", []):
            i = ob.get("image")
            if not isinstance(i, int) or not (0 <= i < n_images):
                raise SceneLoadError(f"{path}: point {c} references bad image index {i!r}")
            if not ob.get("visible", False):
                continue
            if "u" not in ob or "v" not in ob:
                raise SceneLoadError(f"{path}: visible observation of point {c} in image {i} lacks u/v")
            u, v = float(ob["u"]), float(ob["v"])
            if not (np.isfinite(u) and np.isfinite(v)):
                raise SceneLoadError(f"{path}: non-finite pixel for point {c} in image {i}")
            pixels[i, c] = (u, v)
            visibility[i, c] = True
    return CorrespondenceSet(pixels=pixels, visibility=visibility)


def image_filename(i: int, n_images: int) -> str:
    """Zero-padded image filename, wide enough for the largest id."""
    width = len(str(max(n_images - 1, 0)))
    return f"{i:0{width}d}.png"


def save_scene(scene: Scene, out_dir) -> None:
    """Write a scene back to the standard directory layout."""
    root = Path(out_dir)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "depths").mkdir(exist_ok=True)
    n = scene.n_images
    for rec in scene.images:
        stem = image_filename(rec.id, n)[: -len(".png")]
        Image.fromarray(rec.rgb).save(root / "images" / f"{stem}.png")
        write_pfm(root / "depths" / f"{stem}.pfm", rec.depth)
        if not rec.mask.all():
            (root / "masks").mkdir(exist_ok=True)
            gray = np.where(rec.mask, 255, 0).astype(np.uint8)
            Image.fromarray(gray, mode="L").save(root / "masks" / f"{stem}.png")
    (root / "points.json").write_text(points_json_text(scene.correspondences, scene.n_images))


def points_json_text(corrs: CorrespondenceSet, n_images: int) -> str:
    """Canonical points.json text for a correspondence set."""
    points = []
    for c in range(corrs.n_points):
        obs = []
        for i in range(n_images):
            if corrs.visibility[i, c]:
                obs.append({
                    "image": i,
                    "u": float(corrs.pixels[i, c, 0]),
                    "v": float(corrs.pixels[i, c, 1]),
                    "visible": True,
                })
            else:
                obs.append({"image": i, "visible": False})
        points.append({"id": c, "obs": obs})
    doc = {
        "version": 1,
        "images": [image_filename(i, n_images) for i in range(n_images)],
        "points": points,
    }
    return json.dumps(doc, indent=1)


def sample_depth(record: ImageRecord, pixel) -> float:
    """Bilinearly interpolated depth at a (u, v) pixel position."""
    u, v = float(pixel[0]), float(pixel[1])
    if not (0.0 <= u <= record.width - 1 and 0.0 <= v <= record.height - 1):
        raise PixelOutOfRange(
            f"pixel ({u}, {v}) outside image {record.id} bounds "
            f"[0, {record.width - 1}] x [0, {record.height - 1}]"
        )
    out = kernels.bilinear_sample(record.depth, np.array([u]), np.array([v]))
    return float(out[0])


def sampled_correspondence_depths(scene: Scene) -> np.ndarray:
    """Depth at every visible correspondence, NaN where invisible. Shape (N, C)."""
    corrs = scene.correspondences
    out = np.full((scene.n_images, corrs.n_points), np.nan)
    for i, rec in enumerate(scene.images):
        vis = corrs.visibility[i]
        if not vis.any():
            continue
        uv = corrs.pixels[i, vis]
        out[i, vis] = kernels.bilinear_sample(rec.depth, uv[:, 0].copy(), uv[:, 1].copy())
    return out


def normalize_depths(scene: Scene) -> Scene:
    """Divide all depth maps by the maximum depth sampled at a visible correspondence.

    After the call the largest sampled correspondence depth is exactly 1.
    Idempotent: a second application divides by 1.
    """
    sampled = sampled_correspondence_depths(scene)
    if not np.isfinite(sampled).any():
        raise NormalizationError("no visible correspondences to normalize depths with")
    m = float(np.nanmax(sampled))
    if not np.isfinite(m) or m <= 0:
        raise NormalizationError(f"maximum correspondence depth is {m}, cannot normalize")
    # Promote to float64: the normalized maximum must be 1 to full precision,
    # which a float32 quotient cannot guarantee at subpixel sample positions.
    images = [replace(rec, depth=rec.depth.astype(np.float64) / m)
              for rec in scene.images]
    return Scene(images=images, correspondences=scene.correspondences,
                 depth_normalizer=scene.depth_normalizer * m)


def validate_scene(scene: Scene) -> ValidationReport:
    """Check annotation invariants; returns errors and advisory warnings."""
    rep = ValidationReport()
    corrs = scene.correspondences
    if corrs.n_images != scene.n_images:
        rep.errors.append(
            f"correspondence set spans {corrs.n_images} images, scene has {scene.n_images}"
        )
        return rep

    counts = corrs.visible_counts()
    for c in np.nonzero(counts < 2)[0]:
        rep.errors.append(f"point {c} visible in {int(counts[c])} image(s), needs >= 2")

    for i, rec in enumerate(scene.images):
        if not np.all(np.isfinite(rec.depth)) or np.any(rec.depth < 0):
            rep.errors.append(f"image {i}: depth map has negative or non-finite values")
        for c in np.nonzero(corrs.visibility[i])[0]:
            u, v = corrs.pixels[i, c]
            if not (0 <= u <= rec.width - 1 and 0 <= v <= rec.height - 1):
                rep.errors.append(
                    f"point {c} in image {i} at ({u:.1f}, {v:.1f}) is out of bounds"
                )
                continue
            d = sample_depth(rec, (u, v))
            if not np.isfinite(d) or d <= 0:
                rep.errors.append(
                    f"point {c} in image {i} samples non-positive depth {d:.3g}"
                )
            if not rec.mask[int(round(v)), int(round(u))]:
                rep.warnings.append(
                    f"point {c} in image {i} lies on a transient (masked) pixel"
                )

    rep.stats = {
        "n_images": scene.n_images,
        "n_points": corrs.n_points,
        "n_observations": int(corrs.visibility.sum()),
        "depth_normalizer": scene.depth_normalizer,
    }
    return rep
