"""Packed-parameter objectives with analytic gradients.

The alignment state (cameras + mesh vertices) is packed into one flat vector
laid out in contiguous parameter groups, so the optimizer can apply per-group
learning rates and freeze groups by masking. Evaluation is dtype-generic:
feeding a float64 vector runs the production path (numba-backed kernels when
enabled), feeding e.g. a longdouble vector runs pure-numpy equivalents, which
is what the finite-difference tests rely on for tight tolerances.

All coordinates here are normalized: pixel positions and focal lengths are
divided by max(w, h) per image, depths by the scene depth normalizer. The
quaternion block is normalized inside the evaluation, and gradients are
projected through that normalization, so finite differencing the raw packed
vector agrees with the analytic gradient.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .camera import CameraParams, LossWeights
from .mesh import FLIP_AREA_FRACTION

ALIGN_GROUPS = ("rotation", "translation", "intrinsics", "scale_shift", "vertices")
BA_GROUPS = ("rotation", "translation", "intrinsics", "points")

CAMERA_TERMS = ("l3d", "scale", "aspect", "focal", "neg")
DEFORM_TERMS = ("arap2d", "flip", "z")


class EvaluationError(RuntimeError):
    """A loss term evaluated to a non-finite value."""


@dataclass
class ParamLayout:
    """Slices of the packed parameter vector, one contiguous block per group."""

    groups: dict
    size: int

    def group_of(self, name: str) -> slice:
        return self.groups[name]

    def mask(self, names) -> np.ndarray:
        m = np.zeros(self.size, dtype=bool)
        for name in names:
            m[self.groups[name]] = True
        return m


def _layout(blocks) -> ParamLayout:
    groups = {}
    off = 0
    for name, width in blocks:
        groups[name] = slice(off, off + width)
        off += width
    return ParamLayout(groups=groups, size=off)


def _quat_matrices(qs):
    """Rotation matrices for a batch of unit quaternions (n, 4) -> (n, 3, 3)."""
    w, x, y, z = qs[:, 0], qs[:, 1], qs[:, 2], qs[:, 3]
    row = lambda *cols: np.stack(cols, axis=-1)  # noqa: E731
    return np.stack(
        [
            row(1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)),
            row(2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)),
            row(2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)),
        ],
        axis=-2,
    )


def _quat_matrix_derivs(qs):
    """d(rotation matrix)/d(quaternion), unit-quaternion formula: (n, 4, 3, 3)."""
    w, x, y, z = qs[:, 0], qs[:, 1], qs[:, 2], qs[:, 3]
    o = np.zeros_like(w)
    row = lambda *cols: np.stack(cols, axis=-1)  # noqa: E731
    mat = lambda r0, r1, r2: np.stack([r0, r1, r2], axis=-2)  # noqa: E731
    dw = mat(row(o, -z, y), row(z, o, -x), row(-y, x, o))
    dx = mat(row(o, y, z), row(y, -2 * x, -w), row(z, w, -2 * x))
    dy = mat(row(-2 * y, x, w), row(x, o, z), row(-w, z, -2 * y))
    dz = mat(row(-2 * z, -w, x), row(w, -2 * z, y), row(x, y, o))
    return 2.0 * np.stack([dw, dx, dy, dz], axis=-3)


def _loss3d_pairs(points, pa, pb):
    if points.dtype == np.float64:
        return kernels.loss3d_pairs(points, pa, pb)
    return kernels.loss3d_pairs_np(points, pa, pb)


def _arap_faces(src, dst, wf):
    if dst.dtype == np.float64:
        return kernels.arap_faces(src, dst, wf)
    return kernels.arap_faces_np(src, dst, wf)


def _signed_areas_flat(v0, v1, v2):
    return 0.5 * (
        (v1[:, 0] - v0[:, 0]) * (v2[:, 1] - v0[:, 1])
        - (v2[:, 0] - v0[:, 0]) * (v1[:, 1] - v0[:, 1])
    )


class AlignProblem:
    """Joint camera + mesh-deformation objective over a normalized scene.

    Parameter vector layout (N images, M total mesh vertices):
    [quaternions 4N | translations 3N | focals 2N | depth scale+shift 2N |
     vertices 3M], vertices as (u, v, z) rows per image in mesh order.
    """

    def __init__(self, scene, meshes, corr_vertex, weights: LossWeights, use_l2d: bool = False):
        n = scene.n_images
        self.n_images = n
        self.weights = weights
        self.use_l2d = use_l2d
        self.data_term = "l2d" if use_l2d else "l3d"

        self.sigma = np.array([1.0 / rec.max_dim for rec in scene.images])
        self.aspect_target = np.array([rec.height / rec.width for rec in scene.images])
        self.cx = np.array([rec.width / 2.0 * s for rec, s in zip(scene.images, self.sigma)])
        self.cy = np.array([rec.height / 2.0 * s for rec, s in zip(scene.images, self.sigma)])

        # Flattened mesh constants (normalized units).
        self.mesh_sizes = [m.topology.n_vertices for m in meshes]
        self.vertex_offset = np.concatenate([[0], np.cumsum(self.mesh_sizes)]).astype(np.int64)
        n_verts = int(self.vertex_offset[-1])
        self.n_vertices = n_verts
        self.verts0 = np.concatenate(
            [m.topology.vertices0 * self.sigma[i] for i, m in enumerate(meshes)]
        )
        self.z0 = np.concatenate([m.z0 for m in meshes])
        self.vert_image = np.concatenate(
            [np.full(sz, i, dtype=np.int64) for i, sz in enumerate(self.mesh_sizes)]
        )
        self.faces = np.concatenate(
            [m.topology.faces + self.vertex_offset[i] for i, m in enumerate(meshes)]
        )
        self.areas0 = np.concatenate(
            [m.topology.areas0 * self.sigma[i] ** 2 for i, m in enumerate(meshes)]
        )
        self.face_weights = np.concatenate(
            [
                np.full(m.topology.n_faces, 1.0 / (n * m.topology.n_faces))
                for m in meshes
            ]
        )
        self.vert_weights = np.concatenate(
            [np.full(sz, 1.0 / (n * sz)) for i, sz in enumerate(self.mesh_sizes)]
        )
        self.src_faces = self.verts0[self.faces]

        # Co-visibility triples (i > j), as per-side image ids + vertex ids.
        vis = scene.correspondences.visibility
        ia, ja, ga, gb = [], [], [], []
        for i in range(n):
            for j in range(i):
                for c in np.nonzero(vis[i] & vis[j])[0]:
                    ia.append(i)
                    ja.append(j)
                    ga.append(self.vertex_offset[i] + corr_vertex[i, c])
                    gb.append(self.vertex_offset[j] + corr_vertex[j, c])
        self.pair_i = np.array(ia, dtype=np.int64)
        self.pair_j = np.array(ja, dtype=np.int64)
        self.pair_vi = np.array(ga, dtype=np.int64)
        self.pair_vj = np.array(gb, dtype=np.int64)
        self.n_pairs = self.pair_i.shape[0]

        self.layout = _layout(
            [
                ("rotation", 4 * n),
                ("translation", 3 * n),
                ("intrinsics", 2 * n),
                ("scale_shift", 2 * n),
                ("vertices", 3 * n_verts),
            ]
        )

    # -- packing ---------------------------------------------------------

    def pack(self, cams, vertex_positions) -> np.ndarray:
        """Flatten normalized cameras + per-image (M_i, 3) vertex arrays."""
        theta = np.zeros(self.layout.size)
        n = self.n_images
        theta[self.layout.group_of("rotation")] = np.concatenate(
            [np.asarray(c.rotation, dtype=np.float64) for c in cams]
        )
        theta[self.layout.group_of("translation")] = np.concatenate(
            [np.asarray(c.translation, dtype=np.float64) for c in cams]
        )
        theta[self.layout.group_of("intrinsics")] = np.array(
            [[c.fx, c.fy] for c in cams]
        ).ravel()
        theta[self.layout.group_of("scale_shift")] = np.array(
            [[c.depth_scale, c.depth_shift] for c in cams]
        ).ravel()
        theta[self.layout.group_of("vertices")] = np.concatenate(
            [np.asarray(v, dtype=np.float64).ravel() for v in vertex_positions]
        )
        return theta

    def _views(self, theta):
        n = self.n_images
        qs = theta[self.layout.group_of("rotation")].reshape(n, 4)
        ts = theta[self.layout.group_of("translation")].reshape(n, 3)
        fs = theta[self.layout.group_of("intrinsics")].reshape(n, 2)
        se = theta[self.layout.group_of("scale_shift")].reshape(n, 2)
        verts = theta[self.layout.group_of("vertices")].reshape(self.n_vertices, 3)
        return qs, ts, fs, se, verts

    def cameras(self, theta) -> list:
        """Normalized-unit CameraParams from a packed vector."""
        qs, ts, fs, se, _ = self._views(np.asarray(theta, dtype=np.float64))
        cams = []
        for i in range(self.n_images):
            q = qs[i] / np.linalg.norm(qs[i])
            cams.append(
                CameraParams(
                    rotation=q,
                    translation=ts[i].copy(),
                    fx=float(fs[i, 0]),
                    fy=float(fs[i, 1]),
                    cx=float(self.cx[i]),
                    cy=float(self.cy[i]),
                    depth_scale=float(se[i, 0]),
                    depth_shift=float(se[i, 1]),
                )
            )
        return cams

    def vertex_positions(self, theta) -> list:
        """Per-image normalized (M_i, 3) vertex arrays from a packed vector."""
        _, _, _, _, verts = self._views(np.asarray(theta, dtype=np.float64))
        return [
            verts[self.vertex_offset[i] : self.vertex_offset[i + 1]].copy()
            for i in range(self.n_images)
        ]

    def stage_terms(self, stage: str):
        if stage == "camera":
            return tuple(t if t != "l3d" else self.data_term for t in CAMERA_TERMS)
        return tuple(
            t if t != "l3d" else self.data_term for t in CAMERA_TERMS + DEFORM_TERMS
        )

    def weight_map(self) -> dict:
        w = self.weights
        return {
            "l3d": 1.0,
            "l2d": 1.0,
            "scale": w.scale,
            "aspect": w.aspect,
            "focal": w.focal,
            "neg": w.neg,
            "arap2d": w.arap2d,
            "flip": w.flip,
            "z": w.z,
        }

    # -- evaluation ------------------------------------------------------

    def value(self, theta, terms=None) -> float:
        t, _ = self._eval(np.asarray(theta), terms or self.stage_terms("full"), grad=False)
        wmap = self.weight_map()
        return float(sum(wmap[k] * v for k, v in t.items()))

    def term_values(self, theta, terms=None) -> dict:
        t, _ = self._eval(np.asarray(theta), terms or self.stage_terms("full"), grad=False)
        return {k: float(v) for k, v in t.items()}

    def value_and_grad(self, theta, terms=None):
        terms = terms or self.stage_terms("full")
        t, g = self._eval(np.asarray(theta), terms, grad=True)
        wmap = self.weight_map()
        total = float(sum(wmap[k] * v for k, v in t.items()))
        return total, g, {k: float(v) for k, v in t.items()}

    def _eval(self, theta, terms, grad: bool):
        dtype = theta.dtype
        n = self.n_images
        qs_raw, ts, fs, se, verts = self._views(theta)
        qnorm = np.sqrt(np.sum(qs_raw * qs_raw, axis=1))
        qs = qs_raw / qnorm[:, None]
        rots = _quat_matrices(qs)

        g = np.zeros_like(theta) if grad else None
        acc = {
            "rot_mat": np.zeros((n, 3, 3), dtype=dtype),
            "t": np.zeros((n, 3), dtype=dtype),
            "f": np.zeros((n, 2), dtype=dtype),
            "se": np.zeros((n, 2), dtype=dtype),
            "verts": np.zeros((self.n_vertices, 3), dtype=dtype),
        } if grad else None

        values = {}
        for term in terms:
            fn = getattr(self, f"_term_{term}")
            values[term] = fn(qs, rots, ts, fs, se, verts, acc, self.weight_map()[term] if grad else 0.0)
            if not np.isfinite(values[term]):
                raise EvaluationError(f"loss term '{term}' is non-finite: {values[term]}")

        if grad:
            # Rotation-matrix cotangents -> quaternion, projected through the
            # normalization q / |q| (its Jacobian is (I - q q^T)/|q|).
            dRdq = _quat_matrix_derivs(qs)
            gq_unit = np.einsum("nkij,nij->nk", dRdq, acc["rot_mat"])
            gq = (gq_unit - qs * np.sum(qs * gq_unit, axis=1)[:, None]) / qnorm[:, None]
            g[self.layout.group_of("rotation")] = gq.ravel()
            g[self.layout.group_of("translation")] = acc["t"].ravel()
            g[self.layout.group_of("intrinsics")] = acc["f"].ravel()
            g[self.layout.group_of("scale_shift")] = acc["se"].ravel()
            g[self.layout.group_of("vertices")] = acc["verts"].ravel()
        return values, g

    # Each _term_* returns the raw term value; when acc is not None it also
    # accumulates d(weight * term)/d(params) into the accumulators.

    def _backproject_pairs(self, side, rots, ts, fs, se, verts):
        img = self.pair_i if side == 0 else self.pair_j
        gv = self.pair_vi if side == 0 else self.pair_vj
        V = verts[gv]
        u, v, z = V[:, 0], V[:, 1], V[:, 2]
        fx, fy = fs[img, 0], fs[img, 1]
        d = se[img, 0] * z + se[img, 1]
        ray = np.stack([(u - self.cx[img]) / fx, (v - self.cy[img]) / fy, np.ones_like(u)], axis=1)
        q = ray * d[:, None]
        R = rots[img]
        p = np.einsum("eij,ej->ei", R, q) + ts[img]
        return {"img": img, "gv": gv, "z": z, "fx": fx, "fy": fy, "d": d, "ray": ray, "q": q, "R": R, "p": p}

    def _backward_side(self, cache, gp, acc):
        img, gv = cache["img"], cache["gv"]
        np.add.at(acc["t"], img, gp)
        np.add.at(acc["rot_mat"], img, gp[:, :, None] * cache["q"][:, None, :])
        gq = np.einsum("eij,ei->ej", cache["R"], gp)  # R^T gp
        d, ray, fx, fy = cache["d"], cache["ray"], cache["fx"], cache["fy"]
        np.add.at(acc["verts"][:, 0], gv, gq[:, 0] * d / fx)
        np.add.at(acc["verts"][:, 1], gv, gq[:, 1] * d / fy)
        raydot = np.sum(ray * gq, axis=1)
        np.add.at(acc["verts"][:, 2], gv, cache["sd"] * raydot)
        np.add.at(acc["se"][:, 0], img, cache["z"] * raydot)
        np.add.at(acc["se"][:, 1], img, raydot)
        np.add.at(acc["f"][:, 0], img, -gq[:, 0] * ray[:, 0] * d / fx)
        np.add.at(acc["f"][:, 1], img, -gq[:, 1] * ray[:, 1] * d / fy)

    def _term_l3d(self, qs, rots, ts, fs, se, verts, acc, w):
        if self.n_pairs == 0:
            return np.zeros((), dtype=verts.dtype)
        a = self._backproject_pairs(0, rots, ts, fs, se, verts)
        b = self._backproject_pairs(1, rots, ts, fs, se, verts)
        diff = a["p"] - b["p"]
        val = np.sum(diff * diff) / self.n_pairs
        if acc is not None:
            gp = (2.0 * w / self.n_pairs) * diff
            a["sd"] = se[a["img"], 0]
            b["sd"] = se[b["img"], 0]
            self._backward_side(a, gp, acc)
            self._backward_side(b, -gp, acc)
        return val

    def _term_l2d(self, qs, rots, ts, fs, se, verts, acc, w):
        """Symmetrized squared reprojection gap (normalized units).

        For each ordered co-visible pair (i -> j): backproject the vertex
        from image i, project into camera j, compare against the vertex
        position in image j.
        """
        if self.n_pairs == 0:
            return np.zeros((), dtype=verts.dtype)
        total = np.zeros((), dtype=verts.dtype)
        n_eval = 2 * self.n_pairs
        for src, dst in ((0, 1), (1, 0)):
            cache = self._backproject_pairs(src, rots, ts, fs, se, verts)
            img_j = self.pair_j if dst == 1 else self.pair_i
            gv_j = self.pair_vj if dst == 1 else self.pair_vi
            Rj = rots[img_j]
            pt = cache["p"] - ts[img_j]
            pc = np.einsum("enm,en->em", Rj, pt)  # R^T (p - t)
            fxj, fyj = fs[img_j, 0], fs[img_j, 1]
            u = fxj * pc[:, 0] / pc[:, 2] + self.cx[img_j]
            v = fyj * pc[:, 1] / pc[:, 2] + self.cy[img_j]
            ru = u - verts[gv_j, 0]
            rv = v - verts[gv_j, 1]
            total = total + np.sum(ru * ru + rv * rv) / n_eval
            if acc is not None:
                gu = (2.0 * w / n_eval) * ru
                gvv = (2.0 * w / n_eval) * rv
                np.add.at(acc["f"][:, 0], img_j, gu * pc[:, 0] / pc[:, 2])
                np.add.at(acc["f"][:, 1], img_j, gvv * pc[:, 1] / pc[:, 2])
                np.add.at(acc["verts"][:, 0], gv_j, -gu)
                np.add.at(acc["verts"][:, 1], gv_j, -gvv)
                gpc = np.stack(
                    [
                        fxj * gu / pc[:, 2],
                        fyj * gvv / pc[:, 2],
                        -(fxj * pc[:, 0] * gu + fyj * pc[:, 1] * gvv) / pc[:, 2] ** 2,
                    ],
                    axis=1,
                )
                gp = np.einsum("emn,en->em", Rj, gpc)  # R gpc
                np.add.at(acc["t"], img_j, -gp)
                np.add.at(acc["rot_mat"], img_j, pt[:, :, None] * gpc[:, None, :])
                cache["sd"] = se[cache["img"], 0]
                self._backward_side(cache, gp, acc)
        return total

    def _term_scale(self, qs, rots, ts, fs, se, verts, acc, w):
        n = self.n_images
        dev = 1.0 - np.sum(se[:, 0]) / n
        if acc is not None:
            acc["se"][:, 0] += w * (-2.0 * dev / n)
        return dev * dev

    def _term_aspect(self, qs, rots, ts, fs, se, verts, acc, w):
        r = fs[:, 0] / fs[:, 1] - self.aspect_target
        if acc is not None:
            acc["f"][:, 0] += w * 2.0 * r / fs[:, 1]
            acc["f"][:, 1] += w * (-2.0 * r * fs[:, 0] / fs[:, 1] ** 2)
        return np.sum(r * r)

    def _term_focal(self, qs, rots, ts, fs, se, verts, acc, w):
        if acc is not None:
            acc["f"] += w
        return np.sum(fs)

    def _term_neg(self, qs, rots, ts, fs, se, verts, acc, w):
        n = self.n_images
        hs = np.maximum(0.0, -se[:, 0])
        he = np.maximum(0.0, -se[:, 1])
        ms, me = np.sum(hs) / n, np.sum(he) / n
        if acc is not None:
            acc["se"][:, 0] += w * 2.0 * ms / n * np.where(se[:, 0] < 0, -1.0, 0.0)
            acc["se"][:, 1] += w * 2.0 * me / n * np.where(se[:, 1] < 0, -1.0, 0.0)
        return ms * ms + me * me

    def _term_arap2d(self, qs, rots, ts, fs, se, verts, acc, w):
        dst = verts[self.faces][:, :, :2]
        val, dbar = _arap_faces(self.src_faces, dst, self.face_weights)
        if acc is not None:
            np.add.at(acc["verts"][:, 0], self.faces, w * dbar[:, :, 0])
            np.add.at(acc["verts"][:, 1], self.faces, w * dbar[:, :, 1])
        return val

    def _term_flip(self, qs, rots, ts, fs, se, verts, acc, w):
        v0 = verts[self.faces[:, 0]]
        v1 = verts[self.faces[:, 1]]
        v2 = verts[self.faces[:, 2]]
        dets = _signed_areas_flat(v0, v1, v2)
        h = np.minimum(0.0, dets - FLIP_AREA_FRACTION * self.areas0)
        val = np.sum(self.face_weights * h * h)
        if acc is not None:
            gd = w * 2.0 * self.face_weights * h
            gax = 0.5 * (v1[:, 1] - v2[:, 1]) * gd
            gay = 0.5 * (v2[:, 0] - v1[:, 0]) * gd
            gbx = 0.5 * (v2[:, 1] - v0[:, 1]) * gd
            gby = 0.5 * (v0[:, 0] - v2[:, 0]) * gd
            gcx = 0.5 * (v0[:, 1] - v1[:, 1]) * gd
            gcy = 0.5 * (v1[:, 0] - v0[:, 0]) * gd
            np.add.at(acc["verts"][:, 0], self.faces[:, 0], gax)
            np.add.at(acc["verts"][:, 1], self.faces[:, 0], gay)
            np.add.at(acc["verts"][:, 0], self.faces[:, 1], gbx)
            np.add.at(acc["verts"][:, 1], self.faces[:, 1], gby)
            np.add.at(acc["verts"][:, 0], self.faces[:, 2], gcx)
            np.add.at(acc["verts"][:, 1], self.faces[:, 2], gcy)
        return val

    def _term_z(self, qs, rots, ts, fs, se, verts, acc, w):
        dz = verts[:, 2] - self.z0
        if acc is not None:
            acc["verts"][:, 2] += w * self.vert_weights * np.sign(dz)
        return np.sum(self.vert_weights * np.abs(dz))


class BAProblem:
    """Classic bundle adjustment: cameras + one world point per correspondence.

    Minimizes the mean squared reprojection error (normalized pixel units) of
    every visible observation against the labeled pixels. No depth model, no
    deformation — the comparison baseline.
    """

    def __init__(self, scene):
        n = scene.n_images
        corrs = scene.correspondences
        self.n_images = n
        self.n_points = corrs.n_points
        self.sigma = np.array([1.0 / rec.max_dim for rec in scene.images])
        self.cx = np.array([rec.width / 2.0 * s for rec, s in zip(scene.images, self.sigma)])
        self.cy = np.array([rec.height / 2.0 * s for rec, s in zip(scene.images, self.sigma)])

        obs_i, obs_c, obs_uv = [], [], []
        for i in range(n):
            for c in np.nonzero(corrs.visibility[i])[0]:
                obs_i.append(i)
                obs_c.append(c)
                obs_uv.append(corrs.pixels[i, c] * self.sigma[i])
        self.obs_img = np.array(obs_i, dtype=np.int64)
        self.obs_pt = np.array(obs_c, dtype=np.int64)
        self.obs_uv = np.array(obs_uv, dtype=np.float64).reshape(-1, 2)
        self.n_obs = self.obs_img.shape[0]

        self.layout = _layout(
            [
                ("rotation", 4 * n),
                ("translation", 3 * n),
                ("intrinsics", 2 * n),
                ("points", 3 * self.n_points),
            ]
        )

    def pack(self, cams, points) -> np.ndarray:
        theta = np.zeros(self.layout.size)
        theta[self.layout.group_of("rotation")] = np.concatenate(
            [np.asarray(c.rotation, dtype=np.float64) for c in cams]
        )
        theta[self.layout.group_of("translation")] = np.concatenate(
            [np.asarray(c.translation, dtype=np.float64) for c in cams]
        )
        theta[self.layout.group_of("intrinsics")] = np.array(
            [[c.fx, c.fy] for c in cams]
        ).ravel()
        theta[self.layout.group_of("points")] = np.asarray(points, dtype=np.float64).ravel()
        return theta

    def _views(self, theta):
        n = self.n_images
        qs = theta[self.layout.group_of("rotation")].reshape(n, 4)
        ts = theta[self.layout.group_of("translation")].reshape(n, 3)
        fs = theta[self.layout.group_of("intrinsics")].reshape(n, 2)
        pts = theta[self.layout.group_of("points")].reshape(self.n_points, 3)
        return qs, ts, fs, pts

    def cameras(self, theta) -> list:
        qs, ts, fs, _ = self._views(np.asarray(theta, dtype=np.float64))
        cams = []
        for i in range(self.n_images):
            q = qs[i] / np.linalg.norm(qs[i])
            cams.append(
                CameraParams(
                    rotation=q,
                    translation=ts[i].copy(),
                    fx=float(fs[i, 0]),
                    fy=float(fs[i, 1]),
                    cx=float(self.cx[i]),
                    cy=float(self.cy[i]),
                )
            )
        return cams

    def points(self, theta) -> np.ndarray:
        return self._views(np.asarray(theta, dtype=np.float64))[3].copy()

    def value(self, theta) -> float:
        return float(self._eval(np.asarray(theta), grad=False)[0])

    def value_and_grad(self, theta):
        val, g = self._eval(np.asarray(theta), grad=True)
        return float(val), g

    def _eval(self, theta, grad: bool):
        qs_raw, ts, fs, pts = self._views(theta)
        qnorm = np.sqrt(np.sum(qs_raw * qs_raw, axis=1))
        qs = qs_raw / qnorm[:, None]
        rots = _quat_matrices(qs)

        img, cid = self.obs_img, self.obs_pt
        R = rots[img]
        pt = pts[cid] - ts[img]
        pc = np.einsum("enm,en->em", R, pt)
        fx, fy = fs[img, 0], fs[img, 1]
        u = fx * pc[:, 0] / pc[:, 2] + self.cx[img]
        v = fy * pc[:, 1] / pc[:, 2] + self.cy[img]
        ru = u - self.obs_uv[:, 0]
        rv = v - self.obs_uv[:, 1]
        val = np.sum(ru * ru + rv * rv) / self.n_obs
        if not np.isfinite(val):
            raise EvaluationError(f"BA reprojection loss is non-finite: {val}")
        if not grad:
            return val, None

        g = np.zeros_like(theta)
        gu = 2.0 * ru / self.n_obs
        gv = 2.0 * rv / self.n_obs
        fbar = np.zeros((self.n_images, 2), dtype=theta.dtype)
        np.add.at(fbar[:, 0], img, gu * pc[:, 0] / pc[:, 2])
        np.add.at(fbar[:, 1], img, gv * pc[:, 1] / pc[:, 2])
        gpc = np.stack(
            [
                fx * gu / pc[:, 2],
                fy * gv / pc[:, 2],
                -(fx * pc[:, 0] * gu + fy * pc[:, 1] * gv) / pc[:, 2] ** 2,
            ],
            axis=1,
        )
        gp = np.einsum("emn,en->em", R, gpc)
        tbar = np.zeros((self.n_images, 3), dtype=theta.dtype)
        np.add.at(tbar, img, -gp)
        pbar = np.zeros((self.n_points, 3), dtype=theta.dtype)
        np.add.at(pbar, cid, gp)
        rbar = np.zeros((self.n_images, 3, 3), dtype=theta.dtype)
        np.add.at(rbar, img, pt[:, :, None] * gpc[:, None, :])
        dRdq = _quat_matrix_derivs(qs)
        gq_unit = np.einsum("nkij,nij->nk", dRdq, rbar)
        gq = (gq_unit - qs * np.sum(qs * gq_unit, axis=1)[:, None]) / qnorm[:, None]

        g[self.layout.group_of("rotation")] = gq.ravel()
        g[self.layout.group_of("translation")] = tbar.ravel()
        g[self.layout.group_of("intrinsics")] = fbar.ravel()
        g[self.layout.group_of("points")] = pbar.ravel()
        return val, g
