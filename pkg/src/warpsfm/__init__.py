"""warpsfm: camera alignment and 3D reconstruction from inconsistent images.

Recovers camera poses and a fused point cloud from a handful of hand-drawn
or otherwise geometrically inconsistent images, given monocular depth maps
and sparse human-labeled correspondences. Each image carries a deformable
triangle mesh; a two-stage optimizer first fits cameras and per-image depth
scales, then lets the meshes bend (as rigidly as possible) until the labeled
points agree in 3D.
"""

from .camera import (
    CameraParams,
    LossBreakdown,
    LossWeights,
    backproject,
    load_cameras_json,
    loss_3d,
    project,
    save_cameras_json,
)
from .delaunay import delaunay
from .evaluate import (
    BaResult,
    HoldoutError,
    HoldoutSplit,
    PccResult,
    holdout_split,
    loss_2d,
    pcc,
    pcc_ba,
    relative_rotation_error,
    traditional_ba,
)
from .kernels import active_backend, use_numba
from .mesh import (
    DeformableMesh,
    MeshTopology,
    best_fit_rigid_2d,
    build_scene_meshes,
    loss_arap2d,
    loss_flip,
    loss_z,
    triangulate,
    warp_dense,
)
from .optimize import (
    AlignmentState,
    AlignResult,
    DivergenceError,
    OptimizerConfig,
    align,
    load_state,
    save_state,
)
from .pfm import read_pfm, write_pfm
from .pointcloud import (
    ExportError,
    PointCloud,
    assemble_point_cloud,
    export_all,
    export_ply,
    read_ply,
)
from .scene import (
    CorrespondenceSet,
    ImageRecord,
    Scene,
    SceneError,
    ValidationReport,
    load_scene,
    normalize_depths,
    save_scene,
    validate_scene,
)
from .synthetic import SyntheticSpec, generate_scene, load_ground_truth, perturb_scene

__version__ = "0.1.0"

__all__ = [
    "AlignResult",
    "AlignmentState",
    "BaResult",
    "CameraParams",
    "CorrespondenceSet",
    "DeformableMesh",
    "DivergenceError",
    "ExportError",
    "HoldoutError",
    "HoldoutSplit",
    "ImageRecord",
    "LossBreakdown",
    "LossWeights",
    "MeshTopology",
    "OptimizerConfig",
    "PccResult",
    "PointCloud",
    "Scene",
    "SceneError",
    "SyntheticSpec",
    "ValidationReport",
    "active_backend",
    "align",
    "assemble_point_cloud",
    "backproject",
    "best_fit_rigid_2d",
    "build_scene_meshes",
    "delaunay",
    "export_all",
    "export_ply",
    "generate_scene",
    "holdout_split",
    "load_cameras_json",
    "load_ground_truth",
    "load_scene",
    "load_state",
    "loss_2d",
    "loss_3d",
    "loss_arap2d",
    "loss_flip",
    "loss_z",
    "normalize_depths",
    "pcc",
    "pcc_ba",
    "perturb_scene",
    "project",
    "read_pfm",
    "read_ply",
    "relative_rotation_error",
    "save_cameras_json",
    "save_scene",
    "save_state",
    "traditional_ba",
    "triangulate",
    "use_numba",
    "validate_scene",
    "warp_dense",
    "write_pfm",
]
