"""Geometric and image value types with the small algebra the pipeline needs.

All types are immutable after construction and every operation here is pure,
so values can be shared freely between threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEPTH_MAX = 65535
ORTHO_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class DepthImage:
    """Dense 16-bit depth map, millimeters; 0 marks an invalid pixel."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data, dtype=np.uint16)
        if arr.ndim != 2 or min(arr.shape) < 1:
            raise ValueError("depth image must be a non-empty 2-D array")
        object.__setattr__(self, "data", arr)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    def valid_mask(self) -> np.ndarray:
        return self.data > 0


@dataclass(frozen=True, eq=False)
class ColorImage:
    """8-bit RGB image stored as an (h, w, 3) array."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data, dtype=np.uint8)
        if arr.ndim != 3 or arr.shape[2] != 3 or min(arr.shape[:2]) < 1:
            raise ValueError("color image must be a non-empty (h, w, 3) array")
        object.__setattr__(self, "data", arr)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True, eq=False)
class GrayImage:
    """8-bit single-channel image."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data, dtype=np.uint8)
        if arr.ndim != 2 or min(arr.shape) < 1:
            raise ValueError("gray image must be a non-empty 2-D array")
        object.__setattr__(self, "data", arr)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole parameters in pixels; baseline (meters) only used by the
    synthetic stereo-occlusion generator."""

    fx: float
    fy: float
    cx: float
    cy: float
    baseline: float = 0.0

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")

    def scaled(self, sx: float, sy: float) -> "CameraIntrinsics":
        """Intrinsics after resampling the image by (sx, sy).

        Uses the pixel-center convention so that repeated halving stays
        consistent with 2x2 pooling.
        """
        return CameraIntrinsics(
            fx=self.fx * sx,
            fy=self.fy * sy,
            cx=(self.cx + 0.5) * sx - 0.5,
            cy=(self.cy + 0.5) * sy - 0.5,
            baseline=self.baseline,
        )


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """SE(3) motion: rotation (3x3 orthonormal, det +1) and translation (m)."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        err = np.abs(rot.T @ rot - np.eye(3)).max()
        if err > ORTHO_TOL:
            raise ValueError(f"rotation is not orthonormal (deviation {err:.2e})")
        if abs(np.linalg.det(rot) - 1.0) > ORTHO_TOL:
            raise ValueError("rotation determinant must be +1")
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_rotvec(cls, rotvec, translation=(0.0, 0.0, 0.0)) -> "RigidTransform":
        """Build from an axis-angle vector (radians) and a translation."""
        return cls(_rodrigues(np.asarray(rotvec, dtype=np.float64)), translation)

    def inverse(self) -> "RigidTransform":
        rot_inv = self.rotation.T
        return RigidTransform(rot_inv, -rot_inv @ self.translation)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform an (n, 3) array of points."""
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rotation.T + self.translation

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m


@dataclass(frozen=True, eq=False)
class AffineTransform2D:
    """2D affine map condensed into a 2x3 matrix [A | b]."""

    m: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.m, dtype=np.float64).reshape(2, 3)
        if abs(np.linalg.det(m[:, :2])) <= 1e-9:
            raise ValueError("linear part of the affine map is singular")
        object.__setattr__(self, "m", m)

    @classmethod
    def identity(cls) -> "AffineTransform2D":
        return cls(np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]))

    @property
    def a(self) -> np.ndarray:
        return self.m[:, :2]

    @property
    def b(self) -> np.ndarray:
        return self.m[:, 2]

    def inverse(self) -> "AffineTransform2D":
        a_inv = np.linalg.inv(self.a)
        return AffineTransform2D(np.hstack([a_inv, (-a_inv @ self.b)[:, None]]))

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Map an (n, 2) array of coordinates."""
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.a.T + self.b


@dataclass(frozen=True)
class Point3:
    """A 3D point in meters."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        if not (np.isfinite(self.x) and np.isfinite(self.y) and np.isfinite(self.z)):
            raise ValueError("point coordinates must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=np.float64)


def _rodrigues(rotvec: np.ndarray) -> np.ndarray:
    theta = float(np.linalg.norm(rotvec))
    if theta < 1e-12:
        return np.eye(3)
    axis = rotvec / theta
    k = np.array(
        [
            [0.0, -axis[2], axis[1]],
            [axis[2], 0.0, -axis[0]],
            [-axis[1], axis[0], 0.0],
        ]
    )
    return np.eye(3) + np.sin(theta) * k + (1.0 - np.cos(theta)) * (k @ k)


def _reorthonormalize(rot: np.ndarray) -> np.ndarray:
    u, _, vt = np.linalg.svd(rot)
    out = u @ vt
    if np.linalg.det(out) < 0:
        u[:, -1] = -u[:, -1]
        out = u @ vt
    return out


def compose_rigid(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """Composition that applies b first, then a."""
    rot = a.rotation @ b.rotation
    if np.abs(rot.T @ rot - np.eye(3)).max() > ORTHO_TOL:
        rot = _reorthonormalize(rot)
    return RigidTransform(rot, a.rotation @ b.translation + a.translation)


def apply_rigid(t: RigidTransform, p: Point3) -> Point3:
    out = t.rotation @ p.as_array() + t.translation
    return Point3(float(out[0]), float(out[1]), float(out[2]))


def apply_affine(m: AffineTransform2D, p) -> np.ndarray:
    """Map a single (x, y) coordinate pair."""
    pt = np.asarray(p, dtype=np.float64).reshape(2)
    return m.a @ pt + m.b


def _resize_plane(arr: np.ndarray, new_w: int, new_h: int) -> np.ndarray:
    """Endpoint-aligned bilinear resample of one 2-D plane (float output)."""
    h, w = arr.shape
    src = arr.astype(np.float64)
    xs = np.linspace(0.0, w - 1.0, new_w) if new_w > 1 else np.zeros(1)
    ys = np.linspace(0.0, h - 1.0, new_h) if new_h > 1 else np.zeros(1)
    x0 = np.floor(xs).astype(np.intp)
    y0 = np.floor(ys).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (xs - x0)[None, :]
    fy = (ys - y0)[:, None]
    top = src[y0[:, None], x0[None, :]] * (1 - fx) + src[y0[:, None], x1[None, :]] * fx
    bot = src[y1[:, None], x0[None, :]] * (1 - fx) + src[y1[:, None], x1[None, :]] * fx
    return top * (1 - fy) + bot * fy


def resize_bilinear(img, new_w: int, new_h: int):
    """Resize any image type with endpoint-aligned bilinear sampling.

    Output pixel j samples source coordinate j*(w-1)/(new_w-1); axes of
    length one replicate. Identity sizes return a bit-identical copy.
    """
    if new_w < 1 or new_h < 1:
        raise ValueError("target dimensions must be >= 1")
    if isinstance(img, ColorImage):
        if (new_w, new_h) == (img.width, img.height):
            return ColorImage(img.data.copy())
        planes = [
            _resize_plane(img.data[:, :, c], new_w, new_h) for c in range(3)
        ]
        out = np.clip(np.rint(np.stack(planes, axis=2)), 0, 255)
        return ColorImage(out.astype(np.uint8))
    if isinstance(img, DepthImage):
        if (new_w, new_h) == (img.width, img.height):
            return DepthImage(img.data.copy())
        out = np.clip(np.rint(_resize_plane(img.data, new_w, new_h)), 0, DEPTH_MAX)
        return DepthImage(out.astype(np.uint16))
    if isinstance(img, GrayImage):
        if (new_w, new_h) == (img.width, img.height):
            return GrayImage(img.data.copy())
        out = np.clip(np.rint(_resize_plane(img.data, new_w, new_h)), 0, 255)
        return GrayImage(out.astype(np.uint8))
    raise TypeError(f"unsupported image type: {type(img).__name__}")


def to_gray(img: ColorImage) -> GrayImage:
    """Luminance conversion: round(0.299 R + 0.587 G + 0.114 B)."""
    rgb = img.data.astype(np.float64)
    lum = 0.299 * rgb[:, :, 0] + 0.587 * rgb[:, :, 1] + 0.114 * rgb[:, :, 2]
    return GrayImage(np.clip(np.rint(lum), 0, 255).astype(np.uint8))
