"""voxdepth: epoch-based rectification of noisy 16-bit depth image streams.

A fused voxel point cloud built from a short frame window is projected and
inpainted into a dense 2D scene template; each incoming frame is then
aligned with the template, its distrusted pixels replaced, and residual
flicker median-filtered. A drop in feature-match quality triggers a new
fusion epoch.
"""

from .correction import CorrectionConfig, combine, correct_frame, left_fill, median_filter
from .dataset import (
    InMemorySequence,
    RgbdFrame,
    SequenceManifest,
    append_metrics,
    load_sequence,
    read_frame,
    write_color,
    write_depth,
)
from .errors import VoxDepthError
from .estimator import DepthRectifier
from .fusion import (
    FusionConfig,
    Template,
    build_template,
    dilate_gray,
    erode_gray,
    fuse_window,
    inpaint_bilinear,
)
from .metrics import QualityRecord, hole_psnr_curve, hole_ratio, masked_rmse, psnr
from .odometry import OdometryConfig, constant_velocity_extend, estimate_odometry
from .pipeline import (
    EpochState,
    Mode,
    PipelineConfig,
    RunReport,
    run_baseline,
    run_sequence,
    step,
    sweep_fusion_frequency,
    sweep_init_window,
)
from .pointcloud import (
    PointCloud,
    VoxelGrid,
    VoxelGridSpec,
    depth_to_points,
    or_grids,
    reproject,
    transform_grid,
    voxelize,
)
from .registration import (
    Feature,
    MatchSet,
    RegistrationConfig,
    detect_features,
    estimate_affine,
    match_features,
    register_template,
    warp_depth,
)
from .synth import (
    Box,
    NoiseSpec,
    SceneSpec,
    Sphere,
    apply_depth_noise,
    generate_dataset,
    inject_flicker,
    inject_geometric_holes,
    render_sequence,
)
from .types import (
    AffineTransform2D,
    CameraIntrinsics,
    ColorImage,
    DepthImage,
    GrayImage,
    Point3,
    RigidTransform,
    apply_affine,
    apply_rigid,
    compose_rigid,
    resize_bilinear,
    to_gray,
)

__version__ = "0.1.0"

__all__ = [
    "AffineTransform2D",
    "Box",
    "CameraIntrinsics",
    "ColorImage",
    "CorrectionConfig",
    "DepthImage",
    "DepthRectifier",
    "EpochState",
    "Feature",
    "FusionConfig",
    "GrayImage",
    "InMemorySequence",
    "MatchSet",
    "Mode",
    "NoiseSpec",
    "OdometryConfig",
    "PipelineConfig",
    "Point3",
    "PointCloud",
    "QualityRecord",
    "RegistrationConfig",
    "RgbdFrame",
    "RigidTransform",
    "RunReport",
    "SceneSpec",
    "SequenceManifest",
    "Sphere",
    "Template",
    "VoxDepthError",
    "VoxelGrid",
    "VoxelGridSpec",
    "append_metrics",
    "apply_affine",
    "apply_depth_noise",
    "apply_rigid",
    "build_template",
    "combine",
    "compose_rigid",
    "constant_velocity_extend",
    "correct_frame",
    "depth_to_points",
    "detect_features",
    "dilate_gray",
    "erode_gray",
    "estimate_affine",
    "estimate_odometry",
    "fuse_window",
    "generate_dataset",
    "hole_psnr_curve",
    "hole_ratio",
    "inject_flicker",
    "inject_geometric_holes",
    "inpaint_bilinear",
    "left_fill",
    "load_sequence",
    "masked_rmse",
    "match_features",
    "median_filter",
    "or_grids",
    "psnr",
    "read_frame",
    "register_template",
    "render_sequence",
    "reproject",
    "resize_bilinear",
    "run_baseline",
    "run_sequence",
    "step",
    "sweep_fusion_frequency",
    "sweep_init_window",
    "to_gray",
    "transform_grid",
    "voxelize",
    "warp_depth",
    "write_color",
    "write_depth",
]
