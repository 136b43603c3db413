"""Synthetic RGB-D sequences with controllable noise.

A scene is a set of textured axis-aligned boxes and spheres, optionally in
front of a fronto-parallel backdrop plane, rendered by per-pixel ray casting
along a list of camera poses. Depth is the camera-frame z of the nearest hit
(z-depth, not ray length), matching the pinhole unprojection used elsewhere.

Two noise classes can be injected on top of the ground truth:

* occlusion holes, either derived from a virtual stereo pair (pixels whose
  warp into the second view is shadowed by a nearer surface) or as random
  blobs with an exact pixel budget;
* per-frame flicker, where a fresh set of pixels is replaced by zero or a
  random value each frame.

All randomness flows through counter-based generators keyed on the caller's
seed plus a stream label, so identical specs produce bit-identical output
regardless of evaluation order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dataset
from .errors import EmptySceneError
from .types import CameraIntrinsics, ColorImage, DepthImage, RigidTransform
from .validation import check_fraction

_MASK64 = (1 << 64) - 1
_EPS_T = 1e-6

# Base colors indexed by albedo id (wraps around).
_PALETTE = np.array(
    [
        [0.85, 0.82, 0.78],
        [0.90, 0.45, 0.35],
        [0.35, 0.70, 0.90],
        [0.45, 0.85, 0.45],
        [0.90, 0.80, 0.30],
        [0.75, 0.50, 0.85],
    ]
)


def _mix(*parts: int) -> int:
    """Fold integers into one 64-bit word (splitmix-style finalizer)."""
    acc = 0x9E3779B97F4A7C15
    for p in parts:
        acc = ((acc ^ (int(p) & _MASK64)) * 0xBF58476D1CE4E5B9) & _MASK64
        acc = (((acc >> 31) ^ acc) * 0x94D049BB133111EB) & _MASK64
        acc = (acc >> 29) ^ acc
    return acc & _MASK64


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Counter-based generator for an independent, reproducible stream."""
    key = [int(seed) & _MASK64, _mix(*stream) if stream else 0]
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class Box:
    """Axis-aligned box: center and full extents in meters."""

    center: tuple[float, float, float]
    size: tuple[float, float, float]
    albedo: int = 1


@dataclass(frozen=True)
class Sphere:
    center: tuple[float, float, float]
    radius: float
    albedo: int = 2


@dataclass
class SceneSpec:
    """Everything needed to render one deterministic sequence."""

    primitives: list
    trajectory: list[RigidTransform]
    width: int
    height: int
    intrinsics: CameraIntrinsics
    background_depth: float | None = None
    texture_cell: float = 0.25
    seed: int = 0

    def __post_init__(self):
        if not self.primitives and self.background_depth is None:
            raise EmptySceneError("scene has no primitives and no backdrop")
        if not self.trajectory:
            raise ValueError("trajectory must contain at least one pose")
        if not (0 <= self.intrinsics.cx < self.width):
            raise ValueError("principal point cx outside image")
        if not (0 <= self.intrinsics.cy < self.height):
            raise ValueError("principal point cy outside image")

    @property
    def frame_count(self) -> int:
        return len(self.trajectory)


@dataclass
class NoiseSpec:
    """Noise injected on top of rendered ground truth."""

    flicker_fraction: float = 0.0
    hole_mode: str = "geometric"
    blob_fraction: float = 0.0
    theta: float = 0.0
    seed: int = 0

    def __post_init__(self):
        check_fraction(self.flicker_fraction, "flicker_fraction")
        check_fraction(self.blob_fraction, "blob_fraction")
        if self.hole_mode not in ("geometric", "blob"):
            raise ValueError("hole_mode must be 'geometric' or 'blob'")
        if self.theta < 0:
            raise ValueError("theta must be >= 0")


def _hash01(cells: np.ndarray, salt: int) -> np.ndarray:
    """Deterministic per-cell value in [0, 1) from integer lattice coords."""
    with np.errstate(over="ignore"):
        x = cells[..., 0].astype(np.uint64) * np.uint64(0x9E3779B97F4A7C15)
        y = cells[..., 1].astype(np.uint64) * np.uint64(0xC2B2AE3D27D4EB4F)
        z = cells[..., 2].astype(np.uint64) * np.uint64(0xD6E8FEB86659FD93)
        h = x ^ y ^ z ^ np.uint64(salt & _MASK64)
        h ^= h >> np.uint64(33)
        h *= np.uint64(0xFF51AFD7ED558CCD)
        h ^= h >> np.uint64(33)
        h *= np.uint64(0xC4CEB9FE1A85EC53)
        h ^= h >> np.uint64(33)
    return (h >> np.uint64(11)).astype(np.float64) * (2.0**-53)


def _value_noise(coords: np.ndarray, salt: int) -> np.ndarray:
    """Trilinearly interpolated lattice noise in [0, 1); band-limited so the
    rendered images carry no aliasing that would bias photometric alignment."""
    base = np.floor(coords)
    frac = coords - base
    w = frac * frac * (3.0 - 2.0 * frac)
    cells = base.astype(np.int64)
    out = np.zeros(coords.shape[:-1])
    for dx in (0, 1):
        for dy in (0, 1):
            for dz in (0, 1):
                corner = cells + np.array([dx, dy, dz])
                weight = (
                    (w[..., 0] if dx else 1.0 - w[..., 0])
                    * (w[..., 1] if dy else 1.0 - w[..., 1])
                    * (w[..., 2] if dz else 1.0 - w[..., 2])
                )
                out += _hash01(corner, salt) * weight
    return out


def _texture_intensity(points: np.ndarray, cell: float, seed: int) -> np.ndarray:
    """Smooth world-anchored texture: soft-edged 3D checker plus two octaves
    of value noise. Strong gradients for feature matching, no hard edges."""
    c = points / cell
    checker = np.tanh(
        4.0
        * np.sin(np.pi * c[..., 0])
        * np.sin(np.pi * c[..., 1])
        * np.sin(np.pi * c[..., 2])
    )
    noise = _value_noise(c, _mix(seed, 2))
    noise2 = _value_noise(c * 2.7, _mix(seed, 3))
    return 0.45 + 0.22 * checker + 0.22 * (noise - 0.5) + 0.16 * (noise2 - 0.5)


def _ray_directions(spec: SceneSpec) -> np.ndarray:
    intr = spec.intrinsics
    xs = (np.arange(spec.width) - intr.cx) / intr.fx
    ys = (np.arange(spec.height) - intr.cy) / intr.fy
    dirs = np.empty((spec.height, spec.width, 3))
    dirs[:, :, 0] = xs[None, :]
    dirs[:, :, 1] = ys[:, None]
    dirs[:, :, 2] = 1.0
    return dirs


def _intersect_box(origin, dirs, box: Box) -> np.ndarray:
    lo = np.asarray(box.center, dtype=np.float64) - np.asarray(box.size) / 2.0
    hi = np.asarray(box.center, dtype=np.float64) + np.asarray(box.size) / 2.0
    d = np.where(np.abs(dirs) < 1e-12, 1e-12, dirs)
    t1 = (lo - origin) / d
    t2 = (hi - origin) / d
    tnear = np.minimum(t1, t2).max(axis=2)
    tfar = np.maximum(t1, t2).min(axis=2)
    hit = (tfar >= tnear) & (tnear > _EPS_T)
    return np.where(hit, tnear, np.inf)


def _intersect_sphere(origin, dirs, sph: Sphere) -> np.ndarray:
    oc = origin - np.asarray(sph.center, dtype=np.float64)
    a = (dirs * dirs).sum(axis=2)
    b = 2.0 * (dirs @ oc)
    c = float(oc @ oc) - sph.radius**2
    disc = b * b - 4.0 * a * c
    ok = disc >= 0
    sq = np.sqrt(np.where(ok, disc, 0.0))
    t = (-b - sq) / (2.0 * a)
    hit = ok & (t > _EPS_T)
    return np.where(hit, t, np.inf)


def _intersect_backdrop(origin, dirs, depth_m: float) -> np.ndarray:
    dz = dirs[:, :, 2]
    with np.errstate(divide="ignore"):
        t = np.where(np.abs(dz) > 1e-12, (depth_m - origin[2]) / dz, np.inf)
    return np.where(t > _EPS_T, t, np.inf)


def render_frame(spec: SceneSpec, pose: RigidTransform):
    """Render one (ColorImage, DepthImage) pair from a camera pose.

    The pose maps camera coordinates into the world frame.
    """
    if not spec.primitives and spec.background_depth is None:
        raise EmptySceneError("scene has no primitives and no backdrop")
    cam_dirs = _ray_directions(spec)
    dirs = cam_dirs @ pose.rotation.T
    origin = pose.translation

    best_t = np.full((spec.height, spec.width), np.inf)
    best_id = np.full((spec.height, spec.width), -1, dtype=np.int32)
    elements = list(spec.primitives)
    for idx, prim in enumerate(elements):
        if isinstance(prim, Box):
            t = _intersect_box(origin, dirs, prim)
        elif isinstance(prim, Sphere):
            t = _intersect_sphere(origin, dirs, prim)
        else:
            raise TypeError(f"unknown primitive {type(prim).__name__}")
        closer = t < best_t
        best_t = np.where(closer, t, best_t)
        best_id[closer] = idx
    if spec.background_depth is not None:
        t = _intersect_backdrop(origin, dirs, spec.background_depth)
        closer = t < best_t
        best_t = np.where(closer, t, best_t)
        best_id[closer] = len(elements)

    hit = np.isfinite(best_t)
    depth_mm = np.zeros((spec.height, spec.width), dtype=np.uint16)
    mm = np.rint(best_t[hit] * 1000.0)
    mm[(mm < 1) | (mm > 65535)] = 0
    depth_mm[hit] = mm.astype(np.uint16)

    # World-anchored texture so gradients track scene points as the camera
    # moves; the smooth profile avoids sampling artifacts.
    points = origin + best_t[:, :, None] * dirs
    points[~hit] = 0.0
    intensity = _texture_intensity(points, spec.texture_cell, spec.seed)

    albedos = np.array(
        [p.albedo for p in elements] + [0], dtype=np.int64
    ) % len(_PALETTE)
    color_idx = np.where(best_id >= 0, albedos[np.clip(best_id, 0, None)], 0)
    base = _PALETTE[color_idx]
    rgb = np.clip(np.rint(base * intensity[:, :, None] * 255.0), 0, 255)
    rgb[~hit] = 8
    return ColorImage(rgb.astype(np.uint8)), DepthImage(depth_mm)


def render_sequence(spec: SceneSpec):
    """Render every pose in the trajectory; deterministic in (spec, seed)."""
    return [render_frame(spec, pose) for pose in spec.trajectory]


def inject_geometric_holes(
    gt: DepthImage, intr: CameraIntrinsics, baseline: float
):
    """Zero out pixels a virtual second camera cannot see.

    Every valid pixel is warped into a second view displaced by `baseline`
    along +x using its stereo disparity fx*b/z. When several pixels land in
    the same warped column of a row, only the nearest survives; the others
    are occluded there, so stereo matching would fail on them. Those pixels
    are zeroed and flagged in the returned mask. Pixels that merely leave
    the second view's frame are kept, so smooth scenes stay hole-free.
    """
    if baseline < 0:
        raise ValueError("baseline must be >= 0")
    d = gt.data
    h, w = d.shape
    mask = np.zeros((h, w), dtype=bool)
    if baseline == 0:
        return DepthImage(d.copy()), mask
    py, px = np.nonzero(d)
    if px.size == 0:
        return DepthImage(d.copy()), mask
    z = d[py, px].astype(np.float64) / 1000.0
    disparity = intr.fx * baseline / z
    target = np.rint(px - disparity).astype(np.int64)
    in_view = (target >= 0) & (target < w)
    py, px, z, target = py[in_view], px[in_view], z[in_view], target[in_view]

    nearest = np.full((h, w), np.inf)
    np.minimum.at(nearest, (py, target), z)
    occluded = z > nearest[py, target] + 1e-9
    mask[py[occluded], px[occluded]] = True
    out = d.copy()
    out[mask] = 0
    return DepthImage(out), mask


def inject_blob_holes(
    gt: DepthImage, fraction: float, seed: int, frame_index: int = 0
):
    """Random elliptical blobs of zeros with an exact pixel budget."""
    check_fraction(fraction, "fraction")
    d = gt.data
    h, w = d.shape
    mask = np.zeros((h, w), dtype=bool)
    budget = int(round(fraction * h * w))
    if budget == 0:
        return DepthImage(d.copy()), mask
    rng = make_rng(seed, 0xB10B, frame_index)
    count = 0
    while count < budget:
        cy = int(rng.integers(0, h))
        cx = int(rng.integers(0, w))
        ry = int(rng.integers(2, max(3, h // 8) + 1))
        rx = int(rng.integers(2, max(3, w // 8) + 1))
        y0, y1 = max(0, cy - ry), min(h, cy + ry + 1)
        x0, x1 = max(0, cx - rx), min(w, cx + rx + 1)
        yy, xx = np.mgrid[y0:y1, x0:x1]
        inside = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
        fresh = inside & ~mask[y0:y1, x0:x1]
        ys, xs = np.nonzero(fresh)
        if ys.size == 0:
            continue
        take = min(ys.size, budget - count)
        mask[ys[:take] + y0, xs[:take] + x0] = True
        count += take
    out = d.copy()
    out[mask] = 0
    return DepthImage(out), mask


def inject_flicker(
    depth: DepthImage, noise: NoiseSpec, frame_index: int
) -> DepthImage:
    """Replace an exact fraction of pixels with zero or a random value.

    The pixel set is drawn fresh per frame index, and every chosen pixel is
    guaranteed to change value.
    """
    d = depth.data
    total = d.size
    k = int(round(noise.flicker_fraction * total))
    if k == 0:
        return DepthImage(d.copy())
    rng = make_rng(noise.seed, 0xF11C, frame_index)
    chosen = rng.choice(total, size=k, replace=False)
    drop_to_zero = rng.random(k) < 0.5
    values = rng.integers(0, 65536, size=k, dtype=np.int64)
    flat = d.reshape(-1).copy()
    original = flat[chosen].astype(np.int64)
    new = np.where(drop_to_zero, 0, values)
    collision = new == original
    bumped = np.where(original == 65535, original - 1, original + 1)
    new = np.where(collision, bumped, new)
    flat[chosen] = new.astype(np.uint16)
    return DepthImage(flat.reshape(d.shape))


def apply_depth_noise(depth: DepthImage, theta: float, seed: int) -> DepthImage:
    """Multiplicative noise: d <- d * (1 + beta) with beta ~ U[-theta, theta].

    Invalid (zero) pixels are left untouched; output clamps to 16 bits.
    """
    if theta < 0:
        raise ValueError("theta must be >= 0")
    d = depth.data
    if theta == 0:
        return DepthImage(d.copy())
    rng = make_rng(seed, 0x7E7A)
    beta = rng.uniform(-theta, theta, size=d.shape)
    noisy = np.clip(np.rint(d.astype(np.float64) * (1.0 + beta)), 0, 65535)
    out = np.where(d > 0, noisy, 0).astype(np.uint16)
    return DepthImage(out)


@dataclass
class GeneratedFrame:
    color: ColorImage
    depth: DepthImage
    ground_truth: DepthImage
    hole_mask: np.ndarray


def degrade_frame(
    spec: SceneSpec, noise: NoiseSpec, index: int, color: ColorImage, gt: DepthImage
) -> GeneratedFrame:
    """Apply the configured noise stack to one rendered ground-truth frame."""
    if noise.hole_mode == "geometric" and spec.intrinsics.baseline > 0:
        _, mask = inject_geometric_holes(
            gt, spec.intrinsics, spec.intrinsics.baseline
        )
    elif noise.hole_mode == "blob" and noise.blob_fraction > 0:
        _, mask = inject_blob_holes(gt, noise.blob_fraction, noise.seed, index)
    else:
        mask = np.zeros(gt.data.shape, dtype=bool)

    noisy = gt
    if noise.theta > 0:
        noisy = apply_depth_noise(noisy, noise.theta, _mix(noise.seed, 0xD0, index))
    if noise.flicker_fraction > 0:
        noisy = inject_flicker(noisy, noise, index)
    out = noisy.data.copy()
    out[mask] = 0
    return GeneratedFrame(color, DepthImage(out), gt, mask)


def generate_frames(spec: SceneSpec, noise: NoiseSpec):
    """Render and degrade the whole trajectory in memory."""
    rendered = render_sequence(spec)
    return [
        degrade_frame(spec, noise, i, color, gt)
        for i, (color, gt) in enumerate(rendered)
    ]


def generate_dataset(out_dir, spec: SceneSpec, noise: NoiseSpec):
    """Write a full sequence (color, noisy depth, GT, masks) to disk."""
    out = Path(out_dir)
    frames = generate_frames(spec, noise)
    for i, fr in enumerate(frames):
        dataset.write_color(out / dataset.COLOR_PATTERN.format(i), fr.color)
        dataset.write_depth(out / dataset.DEPTH_PATTERN.format(i), fr.depth)
        dataset.write_depth(out / dataset.GT_PATTERN.format(i), fr.ground_truth)
        dataset.write_mask(out / dataset.MASK_PATTERN.format(i), fr.hole_mask)
    dataset.write_manifest(
        out,
        frame_count=len(frames),
        intrinsics=spec.intrinsics,
        has_ground_truth=True,
        has_hole_masks=True,
    )
    return dataset.load_sequence(out)


def linear_trajectory(
    frames: int,
    velocity=(0.0, 0.0, 0.0),
    angular_velocity=(0.0, 0.0, 0.0),
) -> list[RigidTransform]:
    """Constant-velocity camera path; per-frame rotation in radians."""
    vel = np.asarray(velocity, dtype=np.float64)
    ang = np.asarray(angular_velocity, dtype=np.float64)
    return [
        RigidTransform.from_rotvec(ang * i, vel * i) for i in range(frames)
    ]
