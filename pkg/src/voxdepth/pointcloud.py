"""Depth images <-> 3D point sets <-> Boolean voxel occupancy grids.

The voxel index of a pixel (px, py) with depth z meters is

    i = floor((px - cx) * z / (fx * sx)) + grid/2
    j = floor((py - cy) * z / (fy * sy)) + grid/2
    k = floor(z / sz)

Zero-depth pixels are skipped and indices outside [0, grid)^3 are dropped.
The reverse projection places each occupied voxel at x = (i - grid/2) * sx,
y = (j - grid/2) * sy, z = (k + 0.5) * sz, so a pixel that voxelizes to
(i, j, k) reprojects onto the same pixel with the depth quantized to the
cell's z center (error at most sz/2). Rigid grid motion instead moves the
exact cell centers (+0.5 on every axis) before requantizing, which keeps an
identity motion lossless.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SpecMismatchError
from .types import CameraIntrinsics, DepthImage, RigidTransform


@dataclass(frozen=True, eq=False)
class PointCloud:
    """(n, 3) array of camera-frame points in meters, all with z > 0."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if pts.size and (not np.isfinite(pts).all() or (pts[:, 2] <= 0).any()):
            raise ValueError("points must be finite with z > 0")
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return self.points.shape[0]


@dataclass(frozen=True)
class VoxelGridSpec:
    """Uniform cubic lattice: cells per axis and cell size in meters."""

    grid_size: int = 256
    voxel_size_x: float = 0.05
    voxel_size_y: float = 0.05
    voxel_size_z: float = 0.05

    def __post_init__(self):
        if self.grid_size < 2:
            raise ValueError("grid_size must be >= 2")
        if min(self.voxel_size_x, self.voxel_size_y, self.voxel_size_z) <= 0:
            raise ValueError("voxel sizes must be positive")


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    """Sparse Boolean occupancy, stored as sorted packed cell codes."""

    spec: VoxelGridSpec
    codes: np.ndarray

    def __post_init__(self):
        codes = np.unique(np.asarray(self.codes, dtype=np.int64))
        limit = self.spec.grid_size**3
        if codes.size and (codes[0] < 0 or codes[-1] >= limit):
            raise ValueError("voxel code outside the lattice")
        object.__setattr__(self, "codes", codes)

    @classmethod
    def empty(cls, spec: VoxelGridSpec) -> "VoxelGrid":
        return cls(spec, np.empty(0, dtype=np.int64))

    def __len__(self):
        return self.codes.size

    def indices(self) -> np.ndarray:
        """(n, 3) integer (i, j, k) triples."""
        g = self.spec.grid_size
        i, rem = np.divmod(self.codes, g * g)
        j, k = np.divmod(rem, g)
        return np.stack([i, j, k], axis=1)

    def same_occupancy(self, other: "VoxelGrid") -> bool:
        return self.spec == other.spec and np.array_equal(self.codes, other.codes)


def _pack(spec: VoxelGridSpec, i, j, k) -> np.ndarray:
    g = np.int64(spec.grid_size)
    return (i.astype(np.int64) * g + j.astype(np.int64)) * g + k.astype(np.int64)


def _indices_from_points(spec: VoxelGridSpec, pts: np.ndarray):
    half = spec.grid_size // 2
    i = np.floor(pts[:, 0] / spec.voxel_size_x).astype(np.int64) + half
    j = np.floor(pts[:, 1] / spec.voxel_size_y).astype(np.int64) + half
    k = np.floor(pts[:, 2] / spec.voxel_size_z).astype(np.int64)
    return i, j, k


def _inside(spec: VoxelGridSpec, i, j, k) -> np.ndarray:
    g = spec.grid_size
    return (i >= 0) & (i < g) & (j >= 0) & (j < g) & (k >= 0) & (k < g)


def voxel_centers(grid: VoxelGrid) -> np.ndarray:
    """Geometric center of each occupied cell; used when cells are moved and
    requantized (centers never sit on a cell boundary, so an identity motion
    maps every cell exactly onto itself)."""
    spec = grid.spec
    half = spec.grid_size // 2
    ijk = grid.indices().astype(np.float64)
    out = np.empty_like(ijk)
    out[:, 0] = (ijk[:, 0] - half + 0.5) * spec.voxel_size_x
    out[:, 1] = (ijk[:, 1] - half + 0.5) * spec.voxel_size_y
    out[:, 2] = (ijk[:, 2] + 0.5) * spec.voxel_size_z
    return out


def voxel_projection_points(grid: VoxelGrid) -> np.ndarray:
    """Representative point used for 2D reprojection: the cell's low x/y
    corner with the z center. A pixel that quantized into a cell projects
    back onto the same pixel, with depth off by at most half a cell."""
    spec = grid.spec
    half = spec.grid_size // 2
    ijk = grid.indices().astype(np.float64)
    out = np.empty_like(ijk)
    out[:, 0] = (ijk[:, 0] - half) * spec.voxel_size_x
    out[:, 1] = (ijk[:, 1] - half) * spec.voxel_size_y
    out[:, 2] = (ijk[:, 2] + 0.5) * spec.voxel_size_z
    return out


def depth_to_points(depth: DepthImage, intr: CameraIntrinsics) -> PointCloud:
    """Unproject every nonzero pixel through the pinhole model."""
    d = depth.data
    py, px = np.nonzero(d)
    z = d[py, px].astype(np.float64) / 1000.0
    x = (px - intr.cx) * z / intr.fx
    y = (py - intr.cy) * z / intr.fy
    return PointCloud(np.stack([x, y, z], axis=1))


def voxelize(
    depth: DepthImage, intr: CameraIntrinsics, spec: VoxelGridSpec
) -> VoxelGrid:
    """Quantize a depth image into Boolean voxel occupancy."""
    d = depth.data
    py, px = np.nonzero(d)
    if px.size == 0:
        return VoxelGrid.empty(spec)
    z = d[py, px].astype(np.float64) / 1000.0
    half = spec.grid_size // 2
    i = (
        np.floor((px - intr.cx) * z / (intr.fx * spec.voxel_size_x)).astype(np.int64)
        + half
    )
    j = (
        np.floor((py - intr.cy) * z / (intr.fy * spec.voxel_size_y)).astype(np.int64)
        + half
    )
    k = np.floor(z / spec.voxel_size_z).astype(np.int64)
    keep = _inside(spec, i, j, k)
    return VoxelGrid(spec, _pack(spec, i[keep], j[keep], k[keep]))


def or_grids(a: VoxelGrid, b: VoxelGrid) -> VoxelGrid:
    """Cell-wise Boolean OR (set union of occupancy)."""
    if a.spec != b.spec:
        raise SpecMismatchError("voxel grids use different lattice parameters")
    return VoxelGrid(a.spec, np.union1d(a.codes, b.codes))


def transform_grid(g: VoxelGrid, t: RigidTransform) -> VoxelGrid:
    """Rigidly move occupied cells and re-quantize; collisions merge."""
    if len(g) == 0:
        return g
    moved = t.apply(voxel_centers(g))
    i, j, k = _indices_from_points(g.spec, moved)
    keep = _inside(g.spec, i, j, k)
    return VoxelGrid(g.spec, _pack(g.spec, i[keep], j[keep], k[keep]))


def reproject(
    g: VoxelGrid, intr: CameraIntrinsics, dims: tuple[int, int]
) -> DepthImage:
    """Project occupied cells back to a sparse depth image (nearest z wins).

    dims is (width, height). Pixels no cell hits stay 0.
    """
    w, h = dims
    if len(g) == 0:
        return DepthImage(np.zeros((h, w), dtype=np.uint16))
    pts = voxel_projection_points(g)
    z = pts[:, 2]
    front = z > 0
    pts, z = pts[front], z[front]
    u = np.rint(intr.fx * pts[:, 0] / z + intr.cx).astype(np.int64)
    v = np.rint(intr.fy * pts[:, 1] / z + intr.cy).astype(np.int64)
    keep = (u >= 0) & (u < w) & (v >= 0) & (v < h)
    u, v, z = u[keep], v[keep], z[keep]
    zbuf = np.full((h, w), np.inf)
    np.minimum.at(zbuf, (v, u), z)
    out = np.zeros((h, w), dtype=np.uint16)
    hit = np.isfinite(zbuf)
    out[hit] = np.clip(np.rint(zbuf[hit] * 1000.0), 0, 65535).astype(np.uint16)
    return DepthImage(out)
