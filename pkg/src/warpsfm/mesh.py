"""Per-image deformable meshes: construction, deformation losses, dense warp.

Each image gets a triangle mesh whose vertices are its visible labeled
points plus a ring of synthetic boundary vertices (the four corners and
evenly spaced edge points), so the triangulation covers every pixel. Vertex
positions are (u, v, z): image-plane coordinates plus a depth coordinate
initialized from the depth raster. Deformation moves vertices; rigidity,
flip and depth-deviation losses keep the motion piecewise rigid.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import kernels
from .delaunay import delaunay

# Hinge threshold for the face-flip penalty: a face is penalized when its
# signed area drops below this fraction of its construction-time area.
FLIP_AREA_FRACTION = 0.10

# Labeled points closer than this (in pixels) collapse into one vertex.
MERGE_RADIUS_PX = 0.5

# Boundary ring spacing: edge points every min(w, h)/4 pixels.
BOUNDARY_SPACING_FRACTION = 0.25


class MeshError(Exception):
    pass


class DegenerateInputError(MeshError):
    pass


@dataclass
class MeshTopology:
    """Immutable triangulation of one image plane."""

    vertices0: np.ndarray       # (M, 2) float64, (u, v) at construction
    faces: np.ndarray           # (F, 3) int64, CCW (positive signed area)
    areas0: np.ndarray          # (F,) float64, signed areas at construction
    boundary_flags: np.ndarray  # (M,) bool, True for synthetic ring vertices

    @property
    def n_vertices(self) -> int:
        return self.vertices0.shape[0]

    @property
    def n_faces(self) -> int:
        return self.faces.shape[0]


@dataclass
class DeformableMesh:
    """A topology plus its live vertex state."""

    topology: MeshTopology
    z0: np.ndarray         # (M,) float64, depth at construction
    positions: np.ndarray  # (M, 3) float64, optimized (u, v, z)

    @classmethod
    def initial(cls, topology: MeshTopology, z0) -> "DeformableMesh":
        z0 = np.asarray(z0, dtype=np.float64)
        positions = np.concatenate([topology.vertices0, z0[:, None]], axis=1)
        return cls(topology=topology, z0=z0, positions=positions)

    @property
    def xy(self) -> np.ndarray:
        return self.positions[:, :2]

    @property
    def z(self) -> np.ndarray:
        return self.positions[:, 2]


@dataclass
class Rigid2D:
    """Orientation-preserving 2-D isometry x -> R(theta) x + t."""

    theta: float
    translation: np.ndarray  # (2,)
    degenerate: bool = False

    def apply(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=np.float64)
        c, s = np.cos(self.theta), np.sin(self.theta)
        rot = np.array([[c, -s], [s, c]])
        return pts @ rot.T + self.translation


def signed_areas(verts_xy, faces):
    """Signed area of each face; positive for CCW in (u, v) axes."""
    a = verts_xy[faces[:, 0]]
    b = verts_xy[faces[:, 1]]
    c = verts_xy[faces[:, 2]]
    return 0.5 * (
        (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1])
        - (c[:, 0] - a[:, 0]) * (b[:, 1] - a[:, 1])
    )


def boundary_ring(dims) -> np.ndarray:
    """Corner + edge vertices around [0, w-1] x [0, h-1], CCW from (0, 0)."""
    w, h = dims
    spacing = min(w, h) * BOUNDARY_SPACING_FRACTION
    nx = max(int(np.ceil((w - 1) / spacing)), 1)
    ny = max(int(np.ceil((h - 1) / spacing)), 1)
    xs = np.linspace(0.0, w - 1.0, nx + 1)
    ys = np.linspace(0.0, h - 1.0, ny + 1)
    ring = []
    ring += [(x, 0.0) for x in xs]
    ring += [(w - 1.0, y) for y in ys[1:]]
    ring += [(x, h - 1.0) for x in xs[-2::-1]]
    ring += [(0.0, y) for y in ys[-2:0:-1]]
    return np.array(ring, dtype=np.float64)


def triangulate(points, dims, boundary: bool = True):
    """Build a MeshTopology over labeled points (optionally + boundary ring).

    Returns (topology, point_to_vertex) where point_to_vertex[k] is the
    vertex index holding input point k (merged duplicates share a vertex).
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    candidates = [(p, False) for p in pts]
    if boundary:
        candidates += [(p, True) for p in boundary_ring(dims)]

    verts: list[np.ndarray] = []
    flags: list[bool] = []
    point_to_vertex = np.full(pts.shape[0], -1, dtype=np.int64)
    for k, (p, is_boundary) in enumerate(candidates):
        merged = -1
        for vi, v in enumerate(verts):
            if (p[0] - v[0]) ** 2 + (p[1] - v[1]) ** 2 < MERGE_RADIUS_PX**2:
                merged = vi
                break
        if merged >= 0:
            warnings.warn(
                f"point ({p[0]:.2f}, {p[1]:.2f}) within {MERGE_RADIUS_PX} px of an "
                "existing vertex; merged",
                stacklevel=2,
            )
            if not is_boundary:
                point_to_vertex[k] = merged
            continue
        verts.append(np.asarray(p, dtype=np.float64))
        flags.append(is_boundary)
        if not is_boundary:
            point_to_vertex[k] = len(verts) - 1

    if len(verts) < 3:
        raise DegenerateInputError(f"only {len(verts)} distinct vertices; need >= 3")
    vertices0 = np.array(verts)
    faces = delaunay(vertices0)
    if faces.shape[0] == 0:
        raise DegenerateInputError("vertices are collinear; no triangulation exists")
    areas0 = signed_areas(vertices0, faces)
    if np.any(areas0 <= 0):
        raise MeshError("triangulation produced a non-CCW face")
    topo = MeshTopology(
        vertices0=vertices0,
        faces=faces,
        areas0=areas0,
        boundary_flags=np.array(flags, dtype=bool),
    )
    return topo, point_to_vertex


def build_scene_meshes(scene):
    """Construct one DeformableMesh per image plus the point->vertex table.

    Returns (meshes, corr_vertex) with corr_vertex[i, c] the vertex index of
    correspondence c in image i's mesh, or -1 where not visible.
    """
    corrs = scene.correspondences
    meshes = []
    corr_vertex = np.full((scene.n_images, corrs.n_points), -1, dtype=np.int64)
    for i, rec in enumerate(scene.images):
        vis = np.nonzero(corrs.visibility[i])[0]
        topo, p2v = triangulate(corrs.pixels[i, vis], (rec.width, rec.height))
        corr_vertex[i, vis] = p2v
        z0 = kernels.bilinear_sample(
            rec.depth, topo.vertices0[:, 0].copy(), topo.vertices0[:, 1].copy()
        )
        meshes.append(DeformableMesh.initial(topo, z0))
    return meshes, corr_vertex


def best_fit_rigid_2d(src, dst) -> Rigid2D:
    """Closed-form 2-D Procrustes fit (rotation + translation, det = +1)."""
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    s_mean = src.mean(axis=0)
    d_mean = dst.mean(axis=0)
    sc = src - s_mean
    dc = dst - d_mean
    sdot = float(np.sum(sc * dc))
    scross = float(np.sum(sc[:, 0] * dc[:, 1] - sc[:, 1] * dc[:, 0]))
    degenerate = not np.any(sc)
    theta = 0.0 if (sdot == 0.0 and scross == 0.0) else float(np.arctan2(scross, sdot))
    c, s = np.cos(theta), np.sin(theta)
    rot = np.array([[c, -s], [s, c]])
    translation = d_mean - rot @ s_mean
    return Rigid2D(theta=theta, translation=translation, degenerate=degenerate)


def _face_weights(mesh: DeformableMesh, n_images: int) -> np.ndarray:
    nf = mesh.topology.n_faces
    return np.full(nf, 1.0 / (n_images * nf))


def loss_arap2d(meshes) -> float:
    """Mean squared deviation of every face from its best rigid 2-D motion.

    Per-image mean over faces, averaged over images; zero exactly when each
    image's deformation is a single global rigid motion (or any per-face
    rigid-compatible one).
    """
    n = len(meshes)
    total = 0.0
    for mesh in meshes:
        faces = mesh.topology.faces
        src = mesh.topology.vertices0[faces]
        dst = mesh.xy[faces]
        loss, _ = kernels.arap_faces(src, dst, _face_weights(mesh, n))
        total += loss
    return float(total)


def flip_hinges(dets, areas0):
    """Hinge values min(0, det - threshold); negative where a face shrank/flipped."""
    return np.minimum(0.0, dets - FLIP_AREA_FRACTION * areas0)


def loss_flip(meshes) -> float:
    """Penalty for faces whose signed area fell below 10% of the original."""
    n = len(meshes)
    total = 0.0
    for mesh in meshes:
        dets = signed_areas(mesh.xy, mesh.topology.faces)
        h = flip_hinges(dets, mesh.topology.areas0)
        total += float(np.sum(_face_weights(mesh, n) * h * h))
    return float(total)


def loss_z(meshes) -> float:
    """Mean absolute deviation of vertex depths from their initial values."""
    n = len(meshes)
    total = 0.0
    for mesh in meshes:
        total += float(np.mean(np.abs(mesh.z - mesh.z0))) / n
    return float(total)


def warp_dense(record, mesh: DeformableMesh):
    """Warp an image's RGB and depth through the mesh deformation.

    Every destination pixel inside the deformed mesh samples the source
    rasters at the barycentric pullback of the original vertex positions;
    depth additionally receives the interpolated per-vertex depth offset.
    Returns (rgb uint8, depth float32, validity bool); validity is False
    where no (non-flipped) face covers the pixel.
    """
    topo = mesh.topology
    rgb, depth, valid = kernels.warp_rasters(
        record.rgb.astype(np.float64),
        record.depth.astype(np.float64),
        topo.vertices0,
        mesh.z0,
        mesh.xy,
        mesh.z,
        topo.faces,
    )
    rgb_u8 = np.rint(np.clip(rgb, 0.0, 255.0)).astype(np.uint8)
    return rgb_u8, depth.astype(np.float32), valid.astype(bool)
