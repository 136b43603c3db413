"""Fused voxel clouds over a frame window and the dense 2D scene template.

The window's frames are voxelized one by one; the accumulated grid is moved
by the estimated inter-frame motion before each Boolean OR, so the result
lives in the newest frame's camera coordinates. Motion is estimated once,
between the first two frames, and reused under a constant-velocity
assumption (a config flag enables per-pair re-estimation instead).

Projecting the fused grid back to 2D yields a sparse depth image; grayscale
dilation (default) or row/column interpolation fills it into the dense
template used by the correction stage. With depth values, the windowed
maximum overwrites zeros with any valid neighbor, which is why dilation
doubles as hole filling here.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import maximum_filter, minimum_filter

from .errors import EmptyWindowError
from .odometry import OdometryConfig, estimate_odometry
from .pointcloud import VoxelGrid, VoxelGridSpec, or_grids, reproject, transform_grid, voxelize
from .types import CameraIntrinsics, ColorImage, DepthImage, RigidTransform
from .validation import check_odd_window


@dataclass
class FusionConfig:
    window: int = 10
    grid: VoxelGridSpec = field(default_factory=VoxelGridSpec)
    dilation_window: int = 5
    inpaint_method: str = "dilate"
    max_inpaint_passes: int = 3
    target_valid_ratio: float = 0.99
    reestimate_motion: bool = False

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("fusion window must be >= 1")
        check_odd_window(self.dilation_window)
        if self.inpaint_method not in ("dilate", "bilinear"):
            raise ValueError("inpaint_method must be 'dilate' or 'bilinear'")


@dataclass(frozen=True)
class Template:
    """Dense per-epoch reference: inpainted depth plus the color frame it is
    aligned with (the last frame of the fusion window)."""

    image: DepthImage
    anchor_color: ColorImage
    created_at_frame: int
    epoch_id: int


def fuse_window(
    frames,
    intr: CameraIntrinsics,
    cfg: FusionConfig,
    odometry=None,
) -> VoxelGrid:
    """Accumulate the window into one voxel grid (newest frame's coords).

    `odometry` is a callable (frame_a, frame_b) -> RigidTransform mapping
    points from a's camera frame into b's; tests may inject ground-truth
    poses here. Defaults to the photometric estimator.
    """
    frames = list(frames)
    if not frames:
        raise EmptyWindowError("fusion window is empty")
    if odometry is None:
        ocfg = OdometryConfig()
        odometry = lambda a, b: estimate_odometry(a, b, intr, ocfg)  # noqa: E731

    fused = VoxelGrid.empty(cfg.grid)
    grid_prev = voxelize(frames[0].depth, intr, cfg.grid)
    motion = RigidTransform.identity()
    for i in range(1, len(frames)):
        fused = or_grids(transform_grid(fused, motion), grid_prev)
        grid_prev = voxelize(frames[i].depth, intr, cfg.grid)
        if i == 1 or cfg.reestimate_motion:
            motion = odometry(frames[i - 1], frames[i])
    return or_grids(transform_grid(fused, motion), grid_prev)


def dilate_gray(img: DepthImage, n: int) -> DepthImage:
    """Windowed maximum with clamped borders; zeros lose to any neighbor."""
    check_odd_window(n)
    return DepthImage(maximum_filter(img.data, size=n, mode="nearest"))


def erode_gray(img: DepthImage, n: int) -> DepthImage:
    """Windowed minimum with clamped borders."""
    check_odd_window(n)
    return DepthImage(minimum_filter(img.data, size=n, mode="nearest"))


def inpaint_bilinear(img: DepthImage) -> DepthImage:
    """Fill zeros by interpolating nearest valid samples: rows, then columns.

    Runs that lack a valid anchor on either side are left for the column
    pass; anything still unanchored stays zero.
    """
    data = img.data.astype(np.float64)
    h, w = data.shape
    out = data.copy()
    cols = np.arange(w)
    for r in range(h):
        row = data[r]
        valid = np.nonzero(row)[0]
        if valid.size:
            filled = np.interp(cols, valid, row[valid], left=0.0, right=0.0)
            out[r] = np.where(row > 0, row, filled)
    rows = np.arange(h)
    for c in range(w):
        col = out[:, c]
        valid = np.nonzero(col)[0]
        if valid.size:
            filled = np.interp(rows, valid, col[valid], left=0.0, right=0.0)
            out[:, c] = np.where(col > 0, col, filled)
    return DepthImage(np.clip(np.rint(out), 0, 65535).astype(np.uint16))


def _inpaint_dilate(img: DepthImage, cfg: FusionConfig) -> DepthImage:
    out = img
    total = out.data.size
    for _ in range(cfg.max_inpaint_passes):
        if np.count_nonzero(out.data) / total >= cfg.target_valid_ratio:
            break
        out = dilate_gray(out, cfg.dilation_window)
    return out


def build_template(
    frames,
    intr: CameraIntrinsics,
    cfg: FusionConfig,
    odometry=None,
    epoch_id: int = 0,
    timings: dict | None = None,
) -> Template:
    """Fuse, reproject and inpaint one window into the epoch's template.

    When `timings` is given, seconds spent in fusion+reprojection and in
    inpainting are appended under 'fusion' and 'inpaint'.
    """
    frames = list(frames)
    if not frames:
        raise EmptyWindowError("fusion window is empty")
    t0 = time.perf_counter()
    grid = fuse_window(frames, intr, cfg, odometry=odometry)
    dims = (frames[0].depth.width, frames[0].depth.height)
    sparse = reproject(grid, intr, dims)
    t1 = time.perf_counter()
    if cfg.inpaint_method == "bilinear":
        dense = inpaint_bilinear(sparse)
    else:
        dense = _inpaint_dilate(sparse, cfg)
    t2 = time.perf_counter()
    if timings is not None:
        timings.setdefault("fusion", []).append((t1 - t0) * 1000.0)
        timings.setdefault("inpaint", []).append((t2 - t1) * 1000.0)
    return Template(
        image=dense,
        anchor_color=frames[-1].color,
        created_at_frame=frames[-1].index,
        epoch_id=epoch_id,
    )
