"""Numerical hot kernels with two interchangeable backends.

Every kernel has a pure-numpy implementation (``*_np``) and, when numba is
importable, an ``@njit``-compiled twin. The active backend defaults to numba
and can be forced to numpy by setting the environment variable
``WARPSFM_DISABLE_NUMBA=1`` or by calling :func:`use_numba` at runtime (the
latter is what the benchmark and the cross-backend tests do).

Both backends evaluate the same formulas; results agree to floating-point
noise, and every tie rule (lowest face index wins, first minimal ray hit
wins) is identical, so downstream decisions do not depend on the backend.
"""

from __future__ import annotations

import os

import numpy as np

_INSIDE_EPS = 1e-9
_RAY_EPS = 1e-9

try:
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    NUMBA_AVAILABLE = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        if len(args) == 1 and callable(args[0]):
            return args[0]
        return wrap


_ENV_DISABLED = os.environ.get("WARPSFM_DISABLE_NUMBA", "").strip().lower() in (
    "1",
    "true",
    "yes",
)
_backend = "numba" if (NUMBA_AVAILABLE and not _ENV_DISABLED) else "numpy"


def active_backend() -> str:
    return _backend


def use_numba(enabled: bool = True) -> str:
    """Switch the kernel backend at runtime; returns the backend now active."""
    global _backend
    _backend = "numba" if (enabled and NUMBA_AVAILABLE) else "numpy"
    return _backend


# ---------------------------------------------------------------------------
# bilinear raster sampling


def bilinear_sample_np(raster, us, vs):
    """Bilinear interpolation of a 2-D raster at fractional pixel positions.

    Coordinates are clamped to the valid interpolation range, so callers are
    responsible for bounds checking when out-of-range access is an error.
    """
    h, w = raster.shape
    u = np.clip(us, 0.0, w - 1.0)
    v = np.clip(vs, 0.0, h - 1.0)
    x0 = np.minimum(np.floor(u), w - 2 if w > 1 else 0).astype(np.int64)
    y0 = np.minimum(np.floor(v), h - 2 if h > 1 else 0).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = u - x0
    fy = v - y0
    r = raster
    top = (1.0 - fx) * r[y0, x0] + fx * r[y0, x1]
    bot = (1.0 - fx) * r[y1, x0] + fx * r[y1, x1]
    return (1.0 - fy) * top + fy * bot


@njit(cache=True)
def _bilinear_sample_nb(raster, us, vs):  # pragma: no cover - numba twin
    h, w = raster.shape
    out = np.empty(us.shape[0], dtype=np.float64)
    for k in range(us.shape[0]):
        u = min(max(us[k], 0.0), w - 1.0)
        v = min(max(vs[k], 0.0), h - 1.0)
        x0 = int(np.floor(u))
        y0 = int(np.floor(v))
        if x0 > w - 2:
            x0 = w - 2 if w > 1 else 0
        if y0 > h - 2:
            y0 = h - 2 if h > 1 else 0
        x1 = min(x0 + 1, w - 1)
        y1 = min(y0 + 1, h - 1)
        fx = u - x0
        fy = v - y0
        top = (1.0 - fx) * raster[y0, x0] + fx * raster[y0, x1]
        bot = (1.0 - fx) * raster[y1, x0] + fx * raster[y1, x1]
        out[k] = (1.0 - fy) * top + fy * bot
    return out


def bilinear_sample(raster, us, vs):
    us = np.ascontiguousarray(us, dtype=np.float64)
    vs = np.ascontiguousarray(vs, dtype=np.float64)
    if _backend == "numba":
        return _bilinear_sample_nb(np.ascontiguousarray(raster, dtype=np.float64), us, vs)
    return bilinear_sample_np(np.asarray(raster, dtype=np.float64), us, vs)


# ---------------------------------------------------------------------------
# point-in-triangulation location

# Barycentric coordinates of P in triangle (A, B, C):
#   den = (By-Cy)(Ax-Cx) + (Cx-Bx)(Ay-Cy)      (= 2 * signed area)
#   w0  = ((By-Cy)(Px-Cx) + (Cx-Bx)(Py-Cy)) / den
#   w1  = ((Cy-Ay)(Px-Cx) + (Ax-Cx)(Py-Cy)) / den
#   w2  = 1 - w0 - w1
# Faces with den <= 0 (flipped or degenerate) never contain a point.


def locate_points_np(pts, verts, faces):
    """Locate points in a triangulation; lowest containing face index wins.

    Returns (face_idx, bary); face_idx is -1 where no face contains the point.
    """
    n = pts.shape[0]
    nf = faces.shape[0]
    a = verts[faces[:, 0]]
    b = verts[faces[:, 1]]
    c = verts[faces[:, 2]]
    den = (b[:, 1] - c[:, 1]) * (a[:, 0] - c[:, 0]) + (c[:, 0] - b[:, 0]) * (a[:, 1] - c[:, 1])
    px = pts[:, 0][:, None] - c[:, 0][None, :]
    py = pts[:, 1][:, None] - c[:, 1][None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        w0 = ((b[:, 1] - c[:, 1])[None, :] * px + (c[:, 0] - b[:, 0])[None, :] * py) / den
        w1 = ((c[:, 1] - a[:, 1])[None, :] * px + (a[:, 0] - c[:, 0])[None, :] * py) / den
    w2 = 1.0 - w0 - w1
    inside = (den > 0.0)[None, :] & (w0 >= -_INSIDE_EPS) & (w1 >= -_INSIDE_EPS) & (w2 >= -_INSIDE_EPS)
    any_hit = inside.any(axis=1)
    face_idx = np.where(any_hit, inside.argmax(axis=1), -1).astype(np.int64)
    bary = np.zeros((n, 3))
    hit = np.nonzero(any_hit)[0]
    if hit.size:
        f = face_idx[hit]
        bary[hit, 0] = w0[hit, f]
        bary[hit, 1] = w1[hit, f]
        bary[hit, 2] = w2[hit, f]
    return face_idx, bary


@njit(cache=True)
def _locate_points_nb(pts, verts, faces):  # pragma: no cover - numba twin
    n = pts.shape[0]
    face_idx = np.full(n, -1, dtype=np.int64)
    bary = np.zeros((n, 3), dtype=np.float64)
    for k in range(n):
        px, py = pts[k, 0], pts[k, 1]
        for f in range(faces.shape[0]):
            ax, ay = verts[faces[f, 0], 0], verts[faces[f, 0], 1]
            bx, by = verts[faces[f, 1], 0], verts[faces[f, 1], 1]
            cx, cy = verts[faces[f, 2], 0], verts[faces[f, 2], 1]
            den = (by - cy) * (ax - cx) + (cx - bx) * (ay - cy)
            if den <= 0.0:
                continue
            w0 = ((by - cy) * (px - cx) + (cx - bx) * (py - cy)) / den
            w1 = ((cy - ay) * (px - cx) + (ax - cx) * (py - cy)) / den
            w2 = 1.0 - w0 - w1
            if w0 >= -_INSIDE_EPS and w1 >= -_INSIDE_EPS and w2 >= -_INSIDE_EPS:
                face_idx[k] = f
                bary[k, 0] = w0
                bary[k, 1] = w1
                bary[k, 2] = w2
                break
    return face_idx, bary


def locate_points(pts, verts, faces):
    pts = np.ascontiguousarray(pts, dtype=np.float64)
    verts = np.ascontiguousarray(verts, dtype=np.float64)
    faces = np.ascontiguousarray(faces, dtype=np.int64)
    if _backend == "numba":
        return _locate_points_nb(pts, verts, faces)
    return locate_points_np(pts, verts, faces)


def locate_pixels_np(verts, faces, width, height):
    """Locate every integer pixel center; lowest containing face index wins."""
    face_idx = np.full((height, width), -1, dtype=np.int64)
    bary = np.zeros((height, width, 3))
    for f in range(faces.shape[0]):
        ax, ay = verts[faces[f, 0]]
        bx, by = verts[faces[f, 1]]
        cx, cy = verts[faces[f, 2]]
        den = (by - cy) * (ax - cx) + (cx - bx) * (ay - cy)
        if den <= 0.0:
            continue
        x_lo = max(int(np.ceil(min(ax, bx, cx) - _INSIDE_EPS)), 0)
        x_hi = min(int(np.floor(max(ax, bx, cx) + _INSIDE_EPS)), width - 1)
        y_lo = max(int(np.ceil(min(ay, by, cy) - _INSIDE_EPS)), 0)
        y_hi = min(int(np.floor(max(ay, by, cy) + _INSIDE_EPS)), height - 1)
        if x_lo > x_hi or y_lo > y_hi:
            continue
        ys, xs = np.mgrid[y_lo : y_hi + 1, x_lo : x_hi + 1]
        px = xs - cx
        py = ys - cy
        w0 = ((by - cy) * px + (cx - bx) * py) / den
        w1 = ((cy - ay) * px + (ax - cx) * py) / den
        w2 = 1.0 - w0 - w1
        inside = (
            (w0 >= -_INSIDE_EPS)
            & (w1 >= -_INSIDE_EPS)
            & (w2 >= -_INSIDE_EPS)
            & (face_idx[y_lo : y_hi + 1, x_lo : x_hi + 1] < 0)
        )
        sub = face_idx[y_lo : y_hi + 1, x_lo : x_hi + 1]
        sub[inside] = f
        for k, wk in enumerate((w0, w1, w2)):
            sub_b = bary[y_lo : y_hi + 1, x_lo : x_hi + 1, k]
            sub_b[inside] = wk[inside]
    return face_idx, bary


@njit(cache=True)
def _locate_pixels_nb(verts, faces, width, height, cell, grid_w, grid_h, cell_start, cell_items):
    # pragma: no cover - numba twin
    face_idx = np.full((height, width), -1, dtype=np.int64)
    bary = np.zeros((height, width, 3), dtype=np.float64)
    for y in range(height):
        gy = min(int(y / cell), grid_h - 1)
        for x in range(width):
            gx = min(int(x / cell), grid_w - 1)
            cidx = gy * grid_w + gx
            for it in range(cell_start[cidx], cell_start[cidx + 1]):
                f = cell_items[it]
                ax, ay = verts[faces[f, 0], 0], verts[faces[f, 0], 1]
                bx, by = verts[faces[f, 1], 0], verts[faces[f, 1], 1]
                cx, cy = verts[faces[f, 2], 0], verts[faces[f, 2], 1]
                den = (by - cy) * (ax - cx) + (cx - bx) * (ay - cy)
                if den <= 0.0:
                    continue
                w0 = ((by - cy) * (x - cx) + (cx - bx) * (y - cy)) / den
                w1 = ((cy - ay) * (x - cx) + (ax - cx) * (y - cy)) / den
                w2 = 1.0 - w0 - w1
                if w0 >= -_INSIDE_EPS and w1 >= -_INSIDE_EPS and w2 >= -_INSIDE_EPS:
                    face_idx[y, x] = f
                    bary[y, x, 0] = w0
                    bary[y, x, 1] = w1
                    bary[y, x, 2] = w2
                    break
    return face_idx, bary


def _face_grid(verts, faces, width, height):
    """Uniform grid spatial index: per cell, face candidates in ascending order."""
    nf = max(faces.shape[0], 1)
    cell = max(min(width, height) / max(np.sqrt(nf), 1.0), 4.0)
    grid_w = max(int(np.ceil(width / cell)), 1)
    grid_h = max(int(np.ceil(height / cell)), 1)
    buckets: list[list[int]] = [[] for _ in range(grid_w * grid_h)]
    for f in range(faces.shape[0]):
        xs = verts[faces[f], 0]
        ys = verts[faces[f], 1]
        gx0 = max(int(xs.min() / cell), 0)
        gx1 = min(int(xs.max() / cell), grid_w - 1)
        gy0 = max(int(ys.min() / cell), 0)
        gy1 = min(int(ys.max() / cell), grid_h - 1)
        for gy in range(gy0, gy1 + 1):
            for gx in range(gx0, gx1 + 1):
                buckets[gy * grid_w + gx].append(f)
    cell_start = np.zeros(len(buckets) + 1, dtype=np.int64)
    for i, b in enumerate(buckets):
        cell_start[i + 1] = cell_start[i] + len(b)
    cell_items = np.array(
        [f for b in buckets for f in b] or [0], dtype=np.int64
    )
    return cell, grid_w, grid_h, cell_start, cell_items


def locate_pixels(verts, faces, width, height):
    verts = np.ascontiguousarray(verts, dtype=np.float64)
    faces = np.ascontiguousarray(faces, dtype=np.int64)
    if _backend == "numba":
        cell, gw, gh, cs, ci = _face_grid(verts, faces, width, height)
        return _locate_pixels_nb(verts, faces, width, height, cell, gw, gh, cs, ci)
    return locate_pixels_np(verts, faces, width, height)


# ---------------------------------------------------------------------------
# dense barycentric warp


def warp_rasters_np(rgb, depth, verts0, z0, verts1, z1, faces):
    """Warp RGB and depth rasters through a deformed triangulation.

    For each destination pixel inside the deformed mesh (verts1), the source
    position is the barycentric combination of the original vertices
    (verts0); RGB and depth are sampled bilinearly there and the depth gets
    the interpolated per-vertex offset (z1 - z0) added.
    """
    height, width = depth.shape
    face_idx, bary = locate_pixels_np(verts1, faces, width, height)
    valid = face_idx >= 0
    f = np.where(valid, face_idx, 0)
    tri = faces[f]  # (H, W, 3)
    src = np.einsum("hwk,hwkd->hwd", bary, verts0[tri])
    su = np.clip(src[..., 0], 0.0, width - 1.0)
    sv = np.clip(src[..., 1], 0.0, height - 1.0)
    rgb_out = np.zeros_like(rgb, dtype=np.float64)
    for ch in range(rgb.shape[2]):
        rgb_out[..., ch] = bilinear_sample_np(rgb[..., ch].astype(np.float64), su, sv)
    depth_out = bilinear_sample_np(depth, su, sv)
    depth_out = depth_out + np.einsum("hwk,hwk->hw", bary, (z1 - z0)[tri])
    rgb_out[~valid] = 0.0
    depth_out[~valid] = 0.0
    return rgb_out, depth_out, valid.astype(np.uint8)


@njit(cache=True)
def _warp_rasters_nb(rgb, depth, verts0, z0, verts1, z1, faces, cell, grid_w, grid_h, cell_start, cell_items):
    # pragma: no cover - numba twin
    height, width = depth.shape
    rgb_out = np.zeros((height, width, 3), dtype=np.float64)
    depth_out = np.zeros((height, width), dtype=np.float64)
    valid = np.zeros((height, width), dtype=np.uint8)
    dz = z1 - z0
    for y in range(height):
        gy = min(int(y / cell), grid_h - 1)
        for x in range(width):
            gx = min(int(x / cell), grid_w - 1)
            cidx = gy * grid_w + gx
            hit = -1
            w0 = w1 = w2 = 0.0
            for it in range(cell_start[cidx], cell_start[cidx + 1]):
                f = cell_items[it]
                ax, ay = verts1[faces[f, 0], 0], verts1[faces[f, 0], 1]
                bx, by = verts1[faces[f, 1], 0], verts1[faces[f, 1], 1]
                cx, cy = verts1[faces[f, 2], 0], verts1[faces[f, 2], 1]
                den = (by - cy) * (ax - cx) + (cx - bx) * (ay - cy)
                if den <= 0.0:
                    continue
                t0 = ((by - cy) * (x - cx) + (cx - bx) * (y - cy)) / den
                t1 = ((cy - ay) * (x - cx) + (ax - cx) * (y - cy)) / den
                t2 = 1.0 - t0 - t1
                if t0 >= -_INSIDE_EPS and t1 >= -_INSIDE_EPS and t2 >= -_INSIDE_EPS:
                    hit = f
                    w0, w1, w2 = t0, t1, t2
                    break
            if hit < 0:
                continue
            i0, i1, i2 = faces[hit, 0], faces[hit, 1], faces[hit, 2]
            su = w0 * verts0[i0, 0] + w1 * verts0[i1, 0] + w2 * verts0[i2, 0]
            sv = w0 * verts0[i0, 1] + w1 * verts0[i1, 1] + w2 * verts0[i2, 1]
            su = min(max(su, 0.0), width - 1.0)
            sv = min(max(sv, 0.0), height - 1.0)
            x0 = int(np.floor(su))
            y0 = int(np.floor(sv))
            if x0 > width - 2:
                x0 = width - 2 if width > 1 else 0
            if y0 > height - 2:
                y0 = height - 2 if height > 1 else 0
            x1p = min(x0 + 1, width - 1)
            y1p = min(y0 + 1, height - 1)
            fx = su - x0
            fy = sv - y0
            for ch in range(3):
                top = (1.0 - fx) * rgb[y0, x0, ch] + fx * rgb[y0, x1p, ch]
                bot = (1.0 - fx) * rgb[y1p, x0, ch] + fx * rgb[y1p, x1p, ch]
                rgb_out[y, x, ch] = (1.0 - fy) * top + fy * bot
            top = (1.0 - fx) * depth[y0, x0] + fx * depth[y0, x1p]
            bot = (1.0 - fx) * depth[y1p, x0] + fx * depth[y1p, x1p]
            depth_out[y, x] = (1.0 - fy) * top + fy * bot + (
                w0 * dz[i0] + w1 * dz[i1] + w2 * dz[i2]
            )
            valid[y, x] = 1
    return rgb_out, depth_out, valid


def warp_rasters(rgb, depth, verts0, z0, verts1, z1, faces):
    rgb = np.ascontiguousarray(rgb, dtype=np.float64)
    depth = np.ascontiguousarray(depth, dtype=np.float64)
    verts0 = np.ascontiguousarray(verts0, dtype=np.float64)
    verts1 = np.ascontiguousarray(verts1, dtype=np.float64)
    z0 = np.ascontiguousarray(z0, dtype=np.float64)
    z1 = np.ascontiguousarray(z1, dtype=np.float64)
    faces = np.ascontiguousarray(faces, dtype=np.int64)
    if _backend == "numba":
        height, width = depth.shape
        cell, gw, gh, cs, ci = _face_grid(verts1, faces, width, height)
        return _warp_rasters_nb(rgb, depth, verts0, z0, verts1, z1, faces, cell, gw, gh, cs, ci)
    return warp_rasters_np(rgb, depth, verts0, z0, verts1, z1, faces)


# ---------------------------------------------------------------------------
# axis-aligned box interior ray casting (synthetic scene renderer)


def raycast_box_np(origin, dirs, half):
    """Cast rays from inside an axis-aligned box; returns (t, face id).

    Faces are numbered axis*2 + (0 for the +half plane, 1 for -half). The
    returned t is the ray parameter of the nearest hit (inf if none), which
    for camera rays with unit z-component equals the camera-frame depth.
    """
    n = dirs.shape[0]
    best_t = np.full(n, np.inf)
    best_f = np.full(n, -1, dtype=np.int64)
    for fid in range(6):
        axis = fid // 2
        plane = half[axis] if fid % 2 == 0 else -half[axis]
        d = dirs[:, axis]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(d != 0.0, (plane - origin[axis]) / d, np.inf)
        ok = t > _RAY_EPS
        for other in range(3):
            if other == axis:
                continue
            h = origin[other] + t * dirs[:, other]
            ok &= np.abs(h) <= half[other] + 1e-9
        better = ok & (t < best_t)
        best_t[better] = t[better]
        best_f[better] = fid
    return best_t, best_f


@njit(cache=True)
def _raycast_box_nb(origin, dirs, half):  # pragma: no cover - numba twin
    n = dirs.shape[0]
    best_t = np.full(n, np.inf)
    best_f = np.full(n, -1, dtype=np.int64)
    for k in range(n):
        for fid in range(6):
            axis = fid // 2
            plane = half[axis] if fid % 2 == 0 else -half[axis]
            d = dirs[k, axis]
            if d == 0.0:
                continue
            t = (plane - origin[axis]) / d
            if t <= _RAY_EPS or t >= best_t[k]:
                continue
            ok = True
            for other in range(3):
                if other == axis:
                    continue
                h = origin[other] + t * dirs[k, other]
                if abs(h) > half[other] + 1e-9:
                    ok = False
                    break
            if ok:
                best_t[k] = t
                best_f[k] = fid
    return best_t, best_f


def raycast_box(origin, dirs, half):
    origin = np.ascontiguousarray(origin, dtype=np.float64)
    dirs = np.ascontiguousarray(dirs, dtype=np.float64)
    half = np.ascontiguousarray(half, dtype=np.float64)
    if _backend == "numba":
        return _raycast_box_nb(origin, dirs, half)
    return raycast_box_np(origin, dirs, half)


# ---------------------------------------------------------------------------
# pairwise 3D correspondence loss (sum form; caller normalizes)


def loss3d_pairs_np(points, pa, pb):
    """Sum of squared gaps over point pairs plus its gradient w.r.t. points."""
    diff = points[pa] - points[pb]
    loss = np.sum(diff * diff)
    pbar = np.zeros_like(points)
    np.add.at(pbar, pa, 2.0 * diff)
    np.add.at(pbar, pb, -2.0 * diff)
    return loss, pbar


@njit(cache=True)
def _loss3d_pairs_nb(points, pa, pb):  # pragma: no cover - numba twin
    loss = 0.0
    pbar = np.zeros_like(points)
    for k in range(pa.shape[0]):
        i = pa[k]
        j = pb[k]
        for d in range(3):
            diff = points[i, d] - points[j, d]
            loss += diff * diff
            pbar[i, d] += 2.0 * diff
            pbar[j, d] -= 2.0 * diff
    return loss, pbar


def loss3d_pairs(points, pa, pb):
    points = np.ascontiguousarray(points, dtype=np.float64)
    pa = np.ascontiguousarray(pa, dtype=np.int64)
    pb = np.ascontiguousarray(pb, dtype=np.int64)
    if _backend == "numba":
        return _loss3d_pairs_nb(points, pa, pb)
    return loss3d_pairs_np(points, pa, pb)


# ---------------------------------------------------------------------------
# per-face 2D rigidity residual (sum form with per-face weights)


def arap_faces_np(src, dst, wf):
    """Weighted residual of each face against its best-fit 2D rigid motion.

    src, dst: (F, 3, 2) triangle corner positions (src is held constant).
    Returns the weighted residual sum and its gradient w.r.t. dst. The
    gradient holds the per-face fit fixed, which is exact because the fit
    minimizes the same residual (envelope theorem).
    """
    sc = src - src.mean(axis=1, keepdims=True)
    dc = dst - dst.mean(axis=1, keepdims=True)
    sdot = np.sum(sc * dc, axis=(1, 2))
    scross = np.sum(sc[..., 0] * dc[..., 1] - sc[..., 1] * dc[..., 0], axis=1)
    norm = np.hypot(sdot, scross)
    safe = norm > 0.0
    cos = np.where(safe, sdot / np.where(safe, norm, 1.0), 1.0)
    sin = np.where(safe, scross / np.where(safe, norm, 1.0), 0.0)
    rot_x = cos[:, None] * sc[..., 0] - sin[:, None] * sc[..., 1]
    rot_y = sin[:, None] * sc[..., 0] + cos[:, None] * sc[..., 1]
    res = np.stack([dc[..., 0] - rot_x, dc[..., 1] - rot_y], axis=-1)
    loss = np.sum(wf * np.sum(res * res, axis=(1, 2)))
    dbar = 2.0 * wf[:, None, None] * res
    return loss, dbar


@njit(cache=True)
def _arap_faces_nb(src, dst, wf):  # pragma: no cover - numba twin
    nf = src.shape[0]
    loss = 0.0
    dbar = np.zeros_like(dst)
    for f in range(nf):
        smx = (src[f, 0, 0] + src[f, 1, 0] + src[f, 2, 0]) / 3.0
        smy = (src[f, 0, 1] + src[f, 1, 1] + src[f, 2, 1]) / 3.0
        dmx = (dst[f, 0, 0] + dst[f, 1, 0] + dst[f, 2, 0]) / 3.0
        dmy = (dst[f, 0, 1] + dst[f, 1, 1] + dst[f, 2, 1]) / 3.0
        sdot = 0.0
        scross = 0.0
        for k in range(3):
            sx = src[f, k, 0] - smx
            sy = src[f, k, 1] - smy
            dx = dst[f, k, 0] - dmx
            dy = dst[f, k, 1] - dmy
            sdot += sx * dx + sy * dy
            scross += sx * dy - sy * dx
        norm = np.hypot(sdot, scross)
        if norm > 0.0:
            cos = sdot / norm
            sin = scross / norm
        else:
            cos = 1.0
            sin = 0.0
        for k in range(3):
            sx = src[f, k, 0] - smx
            sy = src[f, k, 1] - smy
            dx = dst[f, k, 0] - dmx
            dy = dst[f, k, 1] - dmy
            rx = dx - (cos * sx - sin * sy)
            ry = dy - (sin * sx + cos * sy)
            loss += wf[f] * (rx * rx + ry * ry)
            dbar[f, k, 0] = 2.0 * wf[f] * rx
            dbar[f, k, 1] = 2.0 * wf[f] * ry
    return loss, dbar


def arap_faces(src, dst, wf):
    src = np.ascontiguousarray(src, dtype=np.float64)
    dst = np.ascontiguousarray(dst, dtype=np.float64)
    wf = np.ascontiguousarray(wf, dtype=np.float64)
    if _backend == "numba":
        return _arap_faces_nb(src, dst, wf)
    return arap_faces_np(src, dst, wf)
