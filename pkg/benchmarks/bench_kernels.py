#!/usr/bin/env python3
"""Time every hot kernel on both backends (compiled vs. pure numpy).

Run from a checkout:

    python3 benchmarks/bench_kernels.py [--repeats N]

Workload sizes mirror a 5-image 400x300 alignment. Each kernel is warmed up
once per backend (the first compiled call pays the JIT cost) and the best of
N repeats is reported.
"""

import argparse
import time

import numpy as np

from warpsfm import kernels
from warpsfm.delaunay import delaunay


def _make_mesh(rng, width=400, height=300, n=150):
    pts = np.concatenate([
        rng.uniform([0, 0], [width - 1, height - 1], size=(n, 2)),
        [[0, 0], [width - 1, 0], [width - 1, height - 1], [0, height - 1]],
    ])
    return pts, delaunay(pts)


def _workloads(rng):
    width, height = 400, 300
    raster = rng.uniform(1.0, 4.0, size=(height, width))
    us = rng.uniform(0, width - 1, size=200_000)
    vs = rng.uniform(0, height - 1, size=200_000)

    verts, faces = _make_mesh(rng)
    queries = rng.uniform([0, 0], [width - 1, height - 1], size=(50_000, 2))

    rgb = rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8)
    z0 = raster[
        np.clip(verts[:, 1].astype(int), 0, height - 1),
        np.clip(verts[:, 0].astype(int), 0, width - 1),
    ]
    bend = np.stack([
        3.0 * np.sin(verts[:, 1] / 40.0),
        2.0 * np.cos(verts[:, 0] / 60.0),
    ], axis=1)
    verts1 = verts + bend
    z1 = z0 * rng.uniform(0.95, 1.05, size=z0.shape)

    origin = np.array([0.2, -0.1, 0.3])
    dirs = np.concatenate([
        rng.uniform(-1, 1, size=(120_000, 2)),
        np.ones((120_000, 1)),
    ], axis=1)
    half = np.array([2.0, 1.5, 2.5])

    points = rng.normal(size=(200, 3))
    pa = rng.integers(0, 200, size=5_000)
    pb = rng.integers(0, 200, size=5_000)

    src = rng.uniform(0, 100, size=(20_000, 3, 2))
    dst = src + rng.normal(scale=2.0, size=src.shape)
    wf = rng.uniform(0.5, 1.5, size=20_000)

    return [
        ("bilinear_sample (200k pts)",
         lambda: kernels.bilinear_sample(raster, us, vs)),
        ("locate_points (50k pts)",
         lambda: kernels.locate_points(queries, verts, faces)),
        ("locate_pixels (400x300)",
         lambda: kernels.locate_pixels(verts1, faces, width, height)),
        ("warp_rasters (400x300)",
         lambda: kernels.warp_rasters(rgb, raster, verts, z0, verts1, z1, faces)),
        ("raycast_box (120k rays)",
         lambda: kernels.raycast_box(origin, dirs, half)),
        ("loss3d_pairs (5k pairs)",
         lambda: kernels.loss3d_pairs(points, pa, pb)),
        ("arap_faces (20k faces)",
         lambda: kernels.arap_faces(src, dst, wf)),
    ]


def _best_ms(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best * 1e3


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5,
                        help="timed repeats per kernel (best is kept)")
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    cases = _workloads(rng)

    results = {}
    for backend in ("numpy", "numba"):
        if backend == "numba" and not kernels.NUMBA_AVAILABLE:
            print("numba is not importable; skipping the compiled backend")
            continue
        kernels.use_numba(backend == "numba")
        for name, fn in cases:
            fn()  # warm-up (JIT compile on the numba pass)
            results.setdefault(name, {})[backend] = _best_ms(fn, args.repeats)

    width = max(len(name) for name, _ in cases)
    print(f"\n{'kernel':<{width}}  {'numpy ms':>10}  {'numba ms':>10}  {'speedup':>8}")
    print("-" * (width + 34))
    for name, _ in cases:
        row = results[name]
        np_ms = row["numpy"]
        if "numba" in row:
            nb_ms = row["numba"]
            print(f"{name:<{width}}  {np_ms:>10.3f}  {nb_ms:>10.3f}  "
                  f"{np_ms / nb_ms:>7.1f}x")
        else:
            print(f"{name:<{width}}  {np_ms:>10.3f}  {'-':>10}  {'-':>8}")


if __name__ == "__main__":
    main()
