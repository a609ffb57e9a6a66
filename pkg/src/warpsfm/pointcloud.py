"""Point-cloud assembly and artifact export.

The recovered meshes are rendered into warped RGB/depth rasters, and a
strided grid of valid warped pixels is backprojected through the final
cameras into one fused cloud. Export writes every artifact a downstream
viewer needs; a failed export removes whatever it had already written so a
job never leaves a half-populated output directory behind.
"""

from __future__ import annotations

import json
import shutil
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .camera import save_cameras_json
from .mesh import warp_dense
from .pfm import write_pfm
from .scene import Scene, image_filename


class ExportError(RuntimeError):
    pass


@dataclass
class PointCloud:
    points: np.ndarray        # (P, 3) float64
    colors: np.ndarray        # (P, 3) uint8
    source_image: np.ndarray  # (P,) int64, image id each point came from

    @property
    def n_points(self) -> int:
        return self.points.shape[0]


def assemble_point_cloud(scene: Scene, state, stride: int = 2) -> PointCloud:
    """Backproject a strided grid of warped pixels from every image.

    A pixel contributes when the dense warp covers it, the transient mask
    keeps it, and its warped depth is positive. Cameras are used in pixel
    units, so cloud coordinates are in (normalized) depth units.
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    cams = state.cameras_pixel_units(scene)
    pts, cols, src = [], [], []
    for i, rec in enumerate(scene.images):
        rgb_w, depth_w, valid = warp_dense(rec, state.meshes[i])
        ys = np.arange(0, rec.height, stride)
        xs = np.arange(0, rec.width, stride)
        gy, gx = np.meshgrid(ys, xs, indexing="ij")
        gy, gx = gy.ravel(), gx.ravel()
        keep = valid[gy, gx] & rec.mask[gy, gx] & (depth_w[gy, gx] > 0)
        gy, gx = gy[keep], gx[keep]
        cam = cams[i]
        d = cam.depth_scale * depth_w[gy, gx] + cam.depth_shift
        rays = np.stack(
            [(gx - cam.cx) / cam.fx, (gy - cam.cy) / cam.fy, np.ones(gy.shape)],
            axis=1,
        )
        pts.append(rays * d[:, None] @ cam.matrix().T + cam.translation)
        cols.append(rgb_w[gy, gx])
        src.append(np.full(gy.shape[0], i, dtype=np.int64))
    points = np.concatenate(pts) if pts else np.zeros((0, 3))
    colors = np.concatenate(cols) if cols else np.zeros((0, 3), dtype=np.uint8)
    source = np.concatenate(src) if src else np.zeros(0, dtype=np.int64)
    return PointCloud(points=np.asarray(points, dtype=np.float64),
                      colors=np.asarray(colors, dtype=np.uint8),
                      source_image=source)


_PLY_DTYPE = np.dtype(
    [("x", "<f4"), ("y", "<f4"), ("z", "<f4"),
     ("red", "u1"), ("green", "u1"), ("blue", "u1")]
)


def export_ply(path, cloud: PointCloud) -> None:
    """Binary little-endian PLY with float32 positions and uint8 colors."""
    header = (
        "ply\n"
        "format binary_little_endian 1.0\n"
        f"element vertex {cloud.n_points}\n"
        "property float x\nproperty float y\nproperty float z\n"
        "property uchar red\nproperty uchar green\nproperty uchar blue\n"
        "end_header\n"
    )
    rows = np.empty(cloud.n_points, dtype=_PLY_DTYPE)
    for k, name in enumerate(("x", "y", "z")):
        rows[name] = cloud.points[:, k].astype(np.float32)
    for k, name in enumerate(("red", "green", "blue")):
        rows[name] = cloud.colors[:, k]
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(rows.tobytes())


def read_ply(path) -> PointCloud:
    with open(path, "rb") as fh:
        data = fh.read()
    end = data.index(b"end_header\n") + len(b"end_header\n")
    header = data[:end].decode("ascii").splitlines()
    if header[0] != "ply" or header[1] != "format binary_little_endian 1.0":
        raise ExportError(f"not a binary little-endian PLY: {path}")
    n = next(int(line.split()[-1]) for line in header if line.startswith("element vertex"))
    rows = np.frombuffer(data[end:], dtype=_PLY_DTYPE, count=n)
    points = np.stack([rows["x"], rows["y"], rows["z"]], axis=1).astype(np.float64)
    colors = np.stack([rows["red"], rows["green"], rows["blue"]], axis=1)
    # Source-image provenance is not part of the PLY schema.
    return PointCloud(points=points, colors=colors,
                      source_image=np.full(n, -1, dtype=np.int64))


def _abs_diff(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.abs(a.astype(np.int16) - b.astype(np.int16)).astype(np.uint8)


def export_all(scene: Scene, state, out_dir, stride: int = 2, extra: dict | None = None) -> dict:
    """Write cameras, warped rasters, validity/diff images, cloud, report.

    Returns the report dictionary. On any failure every path written by this
    call is removed before the error (naming the offending artifact) is
    re-raised.
    """
    root = Path(out_dir)
    written = []

    def _track(path: Path) -> Path:
        written.append(path)
        return path

    root.mkdir(parents=True, exist_ok=True)
    for sub in ("images", "depths", "validity", "diff"):
        d = root / sub
        if not d.exists():
            d.mkdir()
            written.append(d)

    n = scene.n_images
    current = "cameras.json"
    try:
        cams_px = state.cameras_pixel_units(scene)
        save_cameras_json(_track(root / "cameras.json"), cams_px,
                          depth_normalizer=scene.depth_normalizer)

        per_image = []
        for i, rec in enumerate(scene.images):
            stem = image_filename(i, n)[:-4]
            rgb_w, depth_w, valid = warp_dense(rec, state.meshes[i])

            current = f"images/{stem}_warped.png"
            Image.fromarray(rgb_w).save(_track(root / current))
            current = f"depths/{stem}_warped.pfm"
            write_pfm(_track(root / current), depth_w)
            current = f"validity/{stem}.png"
            Image.fromarray(np.where(valid, 255, 0).astype(np.uint8)).save(
                _track(root / current)
            )
            current = f"diff/{stem}.png"
            Image.fromarray(_abs_diff(rec.rgb, rgb_w)).save(_track(root / current))
            per_image.append(
                {
                    "image": i,
                    "valid_fraction": float(np.mean(valid)),
                    "mean_abs_diff": float(np.mean(_abs_diff(rec.rgb, rgb_w))),
                }
            )

        current = "pointcloud.ply"
        cloud = assemble_point_cloud(scene, state, stride=stride)
        export_ply(_track(root / current), cloud)

        current = "report.json"
        report = {
            "n_images": n,
            "n_cloud_points": cloud.n_points,
            "stride": stride,
            "depth_normalizer": scene.depth_normalizer,
            "stage": state.stage,
            "per_image": per_image,
        }
        if extra:
            report.update(extra)
        _track(root / "report.json").write_text(json.dumps(report, indent=1) + "\n")
    except Exception as err:
        for path in reversed(written):
            if path.is_dir():
                shutil.rmtree(path, ignore_errors=True)
            elif path.exists():
                path.unlink()
        raise ExportError(f"export failed while writing {current}: {err}") from err
    return report
