"""Planar Delaunay triangulation (Bowyer-Watson) with deterministic ties.

Cocircular point groups make the Delaunay triangulation ambiguous; here every
cocircular quad is canonicalized so that the chosen diagonal contains the
lowest vertex index among the four. Regular grids (where every cell is a
cocircular quad) therefore triangulate identically on every run and platform.

Faces are returned counter-clockwise (positive signed area with u rightward
and v downward treated as ordinary x/y axes), each rotated so its smallest
vertex index comes first, sorted lexicographically.
"""

from __future__ import annotations

import numpy as np

# Relative tolerances for the incircle determinant, scaled by r2max**2 where
# r2max is the largest squared distance of the three triangle corners from
# the query point. Insertion treats "strictly inside by more than the band"
# as a conflict; the flip pass treats "within the wider band" as cocircular.
_STRICT_EPS = 1e-12
_COCIRCULAR_EPS = 1e-9


def circumcircle(a, b, c):
    """Circumcenter and squared radius of triangle (a, b, c)."""
    ax, ay = a
    bx, by = b
    cx, cy = c
    d = 2.0 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by))
    if d == 0.0:
        return (np.nan, np.nan), np.inf
    a2 = ax * ax + ay * ay
    b2 = bx * bx + by * by
    c2 = cx * cx + cy * cy
    ux = (a2 * (by - cy) + b2 * (cy - ay) + c2 * (ay - by)) / d
    uy = (a2 * (cx - bx) + b2 * (ax - cx) + c2 * (bx - ax)) / d
    r2 = (ax - ux) ** 2 + (ay - uy) ** 2
    return (ux, uy), r2


def incircle_det(a, b, c, p):
    """Incircle determinant and its magnitude scale.

    Positive when p is strictly inside the circumcircle of CCW triangle
    (a, b, c). Returns (det, scale) where scale ~ the determinant magnitude
    of a generic same-size configuration, for building relative tolerances.
    """
    adx = a[0] - p[0]
    ady = a[1] - p[1]
    bdx = b[0] - p[0]
    bdy = b[1] - p[1]
    cdx = c[0] - p[0]
    cdy = c[1] - p[1]
    ad2 = adx * adx + ady * ady
    bd2 = bdx * bdx + bdy * bdy
    cd2 = cdx * cdx + cdy * cdy
    det = adx * (bdy * cd2 - cdy * bd2) - ady * (bdx * cd2 - cdx * bd2) + ad2 * (
        bdx * cdy - cdx * bdy
    )
    scale = max(ad2, bd2, cd2) ** 2
    return det, scale


def _ccw(pts, i, j, k) -> float:
    """Twice the signed area of triangle (i, j, k)."""
    return (pts[j, 0] - pts[i, 0]) * (pts[k, 1] - pts[i, 1]) - (
        pts[k, 0] - pts[i, 0]
    ) * (pts[j, 1] - pts[i, 1])


def _oriented(pts, tri):
    if _ccw(pts, *tri) < 0.0:
        return (tri[0], tri[2], tri[1])
    return tri


def _canonical(faces):
    out = []
    for tri in faces:
        k = int(np.argmin(tri))
        out.append((tri[k], tri[(k + 1) % 3], tri[(k + 2) % 3]))
    out.sort()
    return np.array(out, dtype=np.int64).reshape(-1, 3)


def _flip_cocircular(pts, tris):
    """Re-diagonalize cocircular quads toward the lowest vertex index."""
    tris = [tuple(t) for t in tris]
    for _ in range(10 * len(tris) + 10):
        edge_map: dict[tuple[int, int], list[tuple[int, int]]] = {}
        for ti, tri in enumerate(tris):
            for e in range(3):
                u, v = tri[e], tri[(e + 1) % 3]
                key = (u, v) if u < v else (v, u)
                edge_map.setdefault(key, []).append((ti, tri[(e + 2) % 3]))
        touched = set()
        flips = []
        for key in sorted(edge_map):
            pair = edge_map[key]
            if len(pair) != 2:
                continue
            (t1, c), (t2, d) = pair
            if t1 in touched or t2 in touched:
                continue
            tri1 = tris[t1]
            k = tri1.index(c)
            a, b = tri1[(k + 1) % 3], tri1[(k + 2) % 3]
            det, scale = incircle_det(pts[a], pts[b], pts[c], pts[d])
            if abs(det) > _COCIRCULAR_EPS * scale:
                continue
            if min(c, d) < min(a, b):
                new1 = _oriented(pts, (a, d, c))
                new2 = _oriented(pts, (d, b, c))
                if _ccw(pts, *new1) <= 0.0 or _ccw(pts, *new2) <= 0.0:
                    continue  # degenerate quad; keep the existing diagonal
                flips.append((t1, t2, new1, new2))
                touched.update((t1, t2))
        if not flips:
            break
        for t1, t2, new1, new2 in flips:
            tris[t1] = new1
            tris[t2] = new2
    return tris


def delaunay(points) -> np.ndarray:
    """Triangulate distinct 2-D points; returns canonical CCW faces (F, 3).

    Fewer than 3 points, or an entirely collinear set, yields zero faces.
    """
    pts = np.asarray(points, dtype=np.float64)
    n = pts.shape[0]
    if n < 3:
        return np.zeros((0, 3), dtype=np.int64)

    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    mid = 0.5 * (lo + hi)
    span = float(max(hi[0] - lo[0], hi[1] - lo[1], 1.0))
    m = 64.0 * span
    super_pts = np.array(
        [
            [mid[0] - 3.0 * m, mid[1] - m],
            [mid[0] + 3.0 * m, mid[1] - m],
            [mid[0], mid[1] + 3.0 * m],
        ]
    )
    allp = np.vstack([pts, super_pts])
    tris = [_oriented(allp, (n, n + 1, n + 2))]

    for p in range(n):
        pp = allp[p]
        bad = []
        for ti, tri in enumerate(tris):
            det, scale = incircle_det(allp[tri[0]], allp[tri[1]], allp[tri[2]], pp)
            if det > _STRICT_EPS * scale:
                bad.append(ti)
        if not bad:
            # p duplicates an existing vertex or sits exactly on a cocircular
            # boundary; callers deduplicate beforehand, so treat as fatal.
            raise ValueError(f"point {p} conflicts with no triangle (duplicate input?)")
        edge_count: dict[tuple[int, int], int] = {}
        edge_dir: dict[tuple[int, int], tuple[int, int]] = {}
        for ti in bad:
            tri = tris[ti]
            for e in range(3):
                u, v = tri[e], tri[(e + 1) % 3]
                key = (u, v) if u < v else (v, u)
                edge_count[key] = edge_count.get(key, 0) + 1
                edge_dir[key] = (u, v)
        bad_set = set(bad)
        tris = [t for ti, t in enumerate(tris) if ti not in bad_set]
        for key, cnt in edge_count.items():
            if cnt != 1:
                continue
            u, v = edge_dir[key]
            tris.append(_oriented(allp, (u, v, p)))

    tris = [t for t in tris if max(t) < n]
    tris = _flip_cocircular(allp, tris)
    return _canonical(tris)
