"""Camera motion between consecutive RGB-D frames.

Direct photometric alignment: the first frame's valid depth pixels are
unprojected, moved by a candidate SE(3) transform, projected into the second
frame, and the intensity residual is minimized by Gauss-Newton over the
6-vector twist, coarse to fine over an image pyramid. The returned transform
maps points expressed in the first camera's frame into the second camera's
frame, which is exactly what repeated fusion of an accumulated grid needs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import RgbdFrame
from .errors import DimensionMismatchError, InsufficientValidDepthError
from .types import CameraIntrinsics, RigidTransform, compose_rigid, to_gray

_MAX_POINTS_PER_LEVEL = 60_000


@dataclass(frozen=True)
class OdometryConfig:
    pyramid_levels: int = 3
    max_iterations: int = 10
    convergence_epsilon: float = 1e-6
    min_valid_pixels: int = 500

    def __post_init__(self):
        if self.pyramid_levels < 1 or self.max_iterations < 1:
            raise ValueError("levels and iterations must be >= 1")
        if self.convergence_epsilon <= 0:
            raise ValueError("convergence_epsilon must be positive")


def se3_exp(xi: np.ndarray) -> RigidTransform:
    """Exponential map of a twist (vx, vy, vz, wx, wy, wz)."""
    xi = np.asarray(xi, dtype=np.float64).reshape(6)
    v, w = xi[:3], xi[3:]
    theta = float(np.linalg.norm(w))
    k = np.array(
        [
            [0.0, -w[2], w[1]],
            [w[2], 0.0, -w[0]],
            [-w[1], w[0], 0.0],
        ]
    )
    if theta < 1e-10:
        rot = np.eye(3) + k
        vmat = np.eye(3)
    else:
        k2 = k @ k
        rot = (
            np.eye(3)
            + (np.sin(theta) / theta) * k
            + ((1.0 - np.cos(theta)) / theta**2) * k2
        )
        vmat = (
            np.eye(3)
            + ((1.0 - np.cos(theta)) / theta**2) * k
            + ((theta - np.sin(theta)) / theta**3) * k2
        )
    return RigidTransform(rot, vmat @ v)


def _bilinear(img: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    x0 = np.floor(u).astype(np.intp)
    y0 = np.floor(v).astype(np.intp)
    fx = u - x0
    fy = v - y0
    top = img[y0, x0] * (1 - fx) + img[y0, x0 + 1] * fx
    bot = img[y0 + 1, x0] * (1 - fx) + img[y0 + 1, x0 + 1] * fx
    return top * (1 - fy) + bot * fy


def _half(gray: np.ndarray, depth: np.ndarray):
    h, w = gray.shape
    h2, w2 = (h // 2) * 2, (w // 2) * 2
    g = gray[:h2, :w2]
    pooled = 0.25 * (
        g[0::2, 0::2] + g[1::2, 0::2] + g[0::2, 1::2] + g[1::2, 1::2]
    )
    return pooled, depth[:h2:2, :w2:2]


def _unproject(depth_mm: np.ndarray, intr: CameraIntrinsics):
    ys, xs = np.nonzero(depth_mm)
    if ys.size > _MAX_POINTS_PER_LEVEL:
        step = int(np.ceil(ys.size / _MAX_POINTS_PER_LEVEL))
        ys, xs = ys[::step], xs[::step]
    z = depth_mm[ys, xs].astype(np.float64) / 1000.0
    x = (xs - intr.cx) * z / intr.fx
    y = (ys - intr.cy) * z / intr.fy
    return np.stack([x, y, z], axis=1), ys, xs


def _residuals(points, i0_vals, gray1, grads1, intr, transform):
    """Residuals and image-gradient samples for the current transform."""
    h, w = gray1.shape
    moved = transform.apply(points)
    z = moved[:, 2]
    ok = z > 1e-6
    u = np.empty_like(z)
    v = np.empty_like(z)
    u[ok] = intr.fx * moved[ok, 0] / z[ok] + intr.cx
    v[ok] = intr.fy * moved[ok, 1] / z[ok] + intr.cy
    ok &= (u >= 0) & (u < w - 1) & (v >= 0) & (v < h - 1)
    if not ok.any():
        return None
    u, v = u[ok], v[ok]
    r = _bilinear(gray1, u, v) - i0_vals[ok]
    gx = _bilinear(grads1[0], u, v)
    gy = _bilinear(grads1[1], u, v)
    return r, gx, gy, moved[ok], ok


def _cost(points, i0_vals, gray1, grads1, intr, transform):
    res = _residuals(points, i0_vals, gray1, grads1, intr, transform)
    if res is None:
        return np.inf
    r = res[0]
    return float(np.mean(r * r))


def _solve_level(points, i0_vals, gray1, grads1, intr, transform, cfg, trace):
    cost = _cost(points, i0_vals, gray1, grads1, intr, transform)
    for _ in range(cfg.max_iterations):
        res = _residuals(points, i0_vals, gray1, grads1, intr, transform)
        if res is None:
            break
        r, gx, gy, moved, _ = res
        x, y, z = moved[:, 0], moved[:, 1], moved[:, 2]
        fxz = intr.fx / z
        fyz = intr.fy / z
        ju = np.stack(
            [
                fxz,
                np.zeros_like(z),
                -fxz * x / z,
                -intr.fx * x * y / (z * z),
                intr.fx * (1.0 + (x / z) ** 2),
                -fxz * y,
            ],
            axis=1,
        )
        jv = np.stack(
            [
                np.zeros_like(z),
                fyz,
                -fyz * y / z,
                -intr.fy * (1.0 + (y / z) ** 2),
                intr.fy * x * y / (z * z),
                fyz * x,
            ],
            axis=1,
        )
        jac = gx[:, None] * ju + gy[:, None] * jv
        hess = jac.T @ jac
        grad = jac.T @ r
        try:
            delta = np.linalg.solve(hess, -grad)
        except np.linalg.LinAlgError:
            break
        if not np.isfinite(delta).all():
            break

        # Damped acceptance keeps the recorded cost sequence non-increasing.
        accepted = False
        for _ in range(5):
            candidate = compose_rigid(se3_exp(delta), transform)
            new_cost = _cost(points, i0_vals, gray1, grads1, intr, candidate)
            if new_cost <= cost:
                transform = candidate
                cost = new_cost
                trace.append(new_cost)
                accepted = True
                break
            delta = delta / 2.0
        if not accepted:
            break
        if np.linalg.norm(delta) < cfg.convergence_epsilon:
            break
    return transform


def estimate_odometry(
    f0: RgbdFrame,
    f1: RgbdFrame,
    intr: CameraIntrinsics,
    cfg: OdometryConfig = OdometryConfig(),
    trace: list | None = None,
) -> RigidTransform:
    """Estimate the motion taking f0-frame points into f1's camera frame.

    Falls back to the identity when alignment cannot beat the unwarped
    photometric cost by at least 1%, so degenerate inputs degrade gracefully
    instead of diverging.

    When `trace` is given, one list of accepted per-iteration costs is
    appended per pyramid level; each list is non-increasing by construction.
    """
    if (f0.depth.width, f0.depth.height) != (f1.depth.width, f1.depth.height):
        raise DimensionMismatchError("frames must share dimensions")
    valid = int(np.count_nonzero(f0.depth.data))
    if valid < cfg.min_valid_pixels:
        raise InsufficientValidDepthError(
            f"{valid} valid depth pixels < required {cfg.min_valid_pixels}"
        )
    if trace is None:
        trace = []

    g0 = to_gray(f0.color).data.astype(np.float64)
    g1 = to_gray(f1.color).data.astype(np.float64)
    d0 = f0.depth.data

    levels = [(g0, d0, g1, intr)]
    for _ in range(cfg.pyramid_levels - 1):
        g0l, d0l = _half(levels[-1][0], levels[-1][1])
        g1l, _ = _half(levels[-1][2], levels[-1][1])
        levels.append((g0l, d0l, g1l, levels[-1][3].scaled(0.5, 0.5)))

    transform = RigidTransform.identity()
    for g0l, d0l, g1l, intr_l in reversed(levels):
        points, ys, xs = _unproject(d0l, intr_l)
        if points.shape[0] < 24:
            continue
        i0_vals = g0l[ys, xs]
        grads1 = np.gradient(g1l)[::-1]  # (gx, gy)
        level_trace: list = []
        trace.append(level_trace)
        transform = _solve_level(
            points, i0_vals, g1l, grads1, intr_l, transform, cfg, level_trace
        )

    # Identity fallback when the fit does not clearly help.
    g0f, d0f, g1f, intr_f = levels[0]
    points, ys, xs = _unproject(d0f, intr_f)
    i0_vals = g0f[ys, xs]
    grads1 = np.gradient(g1f)[::-1]
    cost_id = _cost(points, i0_vals, g1f, grads1, intr_f, RigidTransform.identity())
    cost_fit = _cost(points, i0_vals, g1f, grads1, intr_f, transform)
    if cost_id < 1e-12 or (cost_id - cost_fit) < 0.01 * cost_id:
        return RigidTransform.identity()
    return transform


def constant_velocity_extend(t: RigidTransform, steps: int) -> list[RigidTransform]:
    """Cumulative transforms [t, t^2, ...] under a constant-velocity model."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    out = [t]
    for _ in range(steps - 1):
        out.append(compose_rigid(out[-1], t))
    return out
