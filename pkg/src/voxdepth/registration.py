"""Align the scene template with each incoming frame.

Segment-test corner detection plus 256-bit binary descriptors drive a
mutual-nearest-neighbor match; a seeded 3-point RANSAC then fits the 2x3
affine map between the template's reference color frame and the current
frame. The count of good matches (small Hamming distance) doubles as the
scene-change signal for the epoch controller.

Everything here is deterministic: the descriptor sampling pattern and the
RANSAC draws come from fixed-key counter-based generators.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter, maximum_filter

from .dataset import RgbdFrame
from .errors import (
    DegenerateConfigurationError,
    DimensionMismatchError,
    ImageTooSmallError,
    TooFewMatchesError,
)
from .synth import make_rng
from .types import AffineTransform2D, DepthImage, GrayImage, resize_bilinear, to_gray

MIN_DETECT_SIZE = 32
_ARC_LENGTH = 9

# 16-pixel Bresenham circle of radius 3, clockwise from the top.
_CIRCLE = np.array(
    [
        (0, -3), (1, -3), (2, -2), (3, -1),
        (3, 0), (3, 1), (2, 2), (1, 3),
        (0, 3), (-1, 3), (-2, 2), (-3, 1),
        (-3, 0), (-3, -1), (-2, -2), (-1, -3),
    ]
)

# Fixed descriptor sampling pattern: 256 offset pairs inside a 25x25 patch.
_PATTERN = make_rng(0xB21EF, 0xD5C).integers(-12, 13, size=(256, 2, 2))

_POPCOUNT = np.array([bin(i).count("1") for i in range(256)], dtype=np.uint8)


@dataclass(frozen=True)
class Feature:
    """A corner position with its packed 256-bit descriptor."""

    x: float
    y: float
    descriptor: np.ndarray  # (32,) uint8


@dataclass(frozen=True)
class MatchSet:
    """Mutual nearest-neighbor pairs as (index_a, index_b, hamming_bits)."""

    pairs: list
    good_count: int

    @classmethod
    def empty(cls) -> "MatchSet":
        return cls([], 0)


@dataclass(frozen=True)
class RegistrationConfig:
    work_size: int = 200
    fast_threshold: int = 12
    max_features: int = 500
    match_distance_threshold: int = 20
    ransac_iterations: int = 200
    inlier_radius: float = 3.0
    min_good_matches_for_affine: int = 3
    seed: int = 7

    def __post_init__(self):
        if self.work_size < MIN_DETECT_SIZE:
            raise ValueError(f"work_size must be >= {MIN_DETECT_SIZE}")
        if min(
            self.fast_threshold,
            self.max_features,
            self.match_distance_threshold,
            self.ransac_iterations,
            self.min_good_matches_for_affine,
        ) <= 0 or self.inlier_radius <= 0:
            raise ValueError("registration thresholds must be positive")


def detect_features(img: GrayImage, cfg: RegistrationConfig) -> list[Feature]:
    """Segment-test corners with non-max suppression and binary descriptors.

    A pixel is a corner when a contiguous arc of 9 of the 16 circle pixels is
    brighter or darker than the center by more than fast_threshold; its score
    is the largest margin a full arc sustains. The test runs on the raw
    intensities; only descriptor sampling uses a smoothed image. Corners keep
    the top max_features by score, ordered deterministically.
    """
    if img.width < MIN_DETECT_SIZE or img.height < MIN_DETECT_SIZE:
        raise ImageTooSmallError(
            f"{img.width}x{img.height} below {MIN_DETECT_SIZE} minimum"
        )
    raw = img.data.astype(np.float32)
    h, w = raw.shape
    center = raw[3 : h - 3, 3 : w - 3]
    ring = np.stack(
        [raw[3 + dy : h - 3 + dy, 3 + dx : w - 3 + dx] for dx, dy in _CIRCLE]
    )
    thr = float(cfg.fast_threshold)

    def _arc_score(margin):
        # Best over the 16 arc starts of the smallest margin inside the arc;
        # positive only when a full arc clears the threshold.
        ext = np.concatenate([margin, margin[: _ARC_LENGTH - 1]], axis=0)
        best = np.full(margin.shape[1:], -np.inf, dtype=np.float32)
        for s in range(16):
            np.maximum(best, ext[s : s + _ARC_LENGTH].min(axis=0), out=best)
        return np.maximum(best, 0.0)

    score = np.maximum(_arc_score(ring - center - thr),
                       _arc_score(center - ring - thr))
    peak = (score > 0) & (score == maximum_filter(score, size=3))
    ys, xs = np.nonzero(peak)
    if ys.size == 0:
        return []
    scores = score[ys, xs]
    order = np.lexsort((xs, ys, -scores))[: cfg.max_features]
    ys, xs = ys[order] + 3, xs[order] + 3

    # Descriptor bits compare pairs of samples from a heavier-smoothed image.
    desc_img = gaussian_filter(img.data.astype(np.float32), sigma=2.0)
    ya = np.clip(ys[:, None] + _PATTERN[None, :, 0, 1], 0, h - 1)
    xa = np.clip(xs[:, None] + _PATTERN[None, :, 0, 0], 0, w - 1)
    yb = np.clip(ys[:, None] + _PATTERN[None, :, 1, 1], 0, h - 1)
    xb = np.clip(xs[:, None] + _PATTERN[None, :, 1, 0], 0, w - 1)
    bits = desc_img[ya, xa] < desc_img[yb, xb]
    packed = np.packbits(bits, axis=1)
    return [
        Feature(float(x), float(y), packed[i])
        for i, (x, y) in enumerate(zip(xs, ys))
    ]


def hamming_distance(a: np.ndarray, b: np.ndarray) -> int:
    return int(_POPCOUNT[np.bitwise_xor(a, b)].sum())


def _distance_matrix(da: np.ndarray, db: np.ndarray) -> np.ndarray:
    # Compare 64 bits at a time; fall back to the byte table on old numpy.
    wa = da.reshape(da.shape[0], -1).view(np.uint64)
    wb = db.reshape(db.shape[0], -1).view(np.uint64)
    xor = np.bitwise_xor(wa[:, None, :], wb[None, :, :])
    if hasattr(np, "bitwise_count"):
        return np.bitwise_count(xor).sum(axis=2, dtype=np.int32)
    as_bytes = xor.view(np.uint8)
    return _POPCOUNT[as_bytes].sum(axis=2, dtype=np.int32)


def match_features(
    a: list[Feature], b: list[Feature], cfg: RegistrationConfig
) -> MatchSet:
    """Mutual nearest neighbors by Hamming distance; ties pick lower index.

    A pair is good when its distance is at most match_distance_threshold.
    """
    if not a or not b:
        return MatchSet.empty()
    da = np.stack([f.descriptor for f in a])
    db = np.stack([f.descriptor for f in b])
    dist = _distance_matrix(da, db)
    fwd = dist.argmin(axis=1)
    bwd = dist.argmin(axis=0)
    pairs = []
    good = 0
    for i, j in enumerate(fwd):
        if bwd[j] != i:
            continue
        d = int(dist[i, j])
        pairs.append((i, int(j), d))
        if d <= cfg.match_distance_threshold:
            good += 1
    return MatchSet(pairs, good)


def _good_points(matches: MatchSet, positions_a, positions_b, cfg):
    pa, pb = [], []
    for i, j, d in matches.pairs:
        if d <= cfg.match_distance_threshold:
            pa.append(positions_a[i])
            pb.append(positions_b[j])
    return np.asarray(pa, dtype=np.float64), np.asarray(pb, dtype=np.float64)


def estimate_affine(
    matches: MatchSet, positions_a, positions_b, cfg: RegistrationConfig
) -> AffineTransform2D:
    """Seeded RANSAC over 3-match samples, then least squares on inliers."""
    pa, pb = _good_points(matches, positions_a, positions_b, cfg)
    n = pa.shape[0]
    if n < cfg.min_good_matches_for_affine:
        raise TooFewMatchesError(
            f"{n} good matches < {cfg.min_good_matches_for_affine} required"
        )
    design = np.hstack([pa, np.ones((n, 1))])
    rng = make_rng(cfg.seed, 0xAFF1)
    best_mask = None
    best_count = 0
    for _ in range(cfg.ransac_iterations):
        sel = rng.choice(n, size=3, replace=False)
        a3 = design[sel]
        if abs(np.linalg.det(a3)) < 1e-8:
            continue
        try:
            coef = np.linalg.solve(a3, pb[sel])
        except np.linalg.LinAlgError:
            continue
        err = np.linalg.norm(design @ coef - pb, axis=1)
        mask = err <= cfg.inlier_radius
        count = int(mask.sum())
        if count > best_count:
            best_count = count
            best_mask = mask
            if count == n:
                break
    if best_mask is None or best_count < 3:
        raise DegenerateConfigurationError("all RANSAC samples were collinear")
    coef, *_ = np.linalg.lstsq(design[best_mask], pb[best_mask], rcond=None)
    try:
        return AffineTransform2D(coef.T)
    except ValueError as exc:
        raise DegenerateConfigurationError(str(exc)) from exc


def register_template(template, frame: RgbdFrame, cfg: RegistrationConfig):
    """Estimate the full-resolution affine map template -> frame.

    Both reference and current color frames are grayscaled, shrunk to the
    square working resolution, matched, and the fitted map is conjugated by
    the axis scale factors back to full-resolution pixel coordinates.
    Failures degrade to the identity map; the caller reads good_count.
    """
    ref = template.anchor_color
    if (ref.width, ref.height) != (frame.color.width, frame.color.height):
        raise DimensionMismatchError("template and frame dimensions differ")
    s = cfg.work_size
    work_a = resize_bilinear(to_gray(ref), s, s)
    work_b = resize_bilinear(to_gray(frame.color), s, s)
    try:
        feats_a = detect_features(work_a, cfg)
        feats_b = detect_features(work_b, cfg)
    except ImageTooSmallError:
        return AffineTransform2D.identity(), MatchSet.empty()
    matches = match_features(feats_a, feats_b, cfg)
    if not matches.pairs:
        return AffineTransform2D.identity(), matches
    pos_a = [(f.x, f.y) for f in feats_a]
    pos_b = [(f.x, f.y) for f in feats_b]
    try:
        m_work = estimate_affine(matches, pos_a, pos_b, cfg)
    except (TooFewMatchesError, DegenerateConfigurationError):
        return AffineTransform2D.identity(), matches

    # Conjugate by the full->work axis scales used by the resize convention.
    sx = (s - 1) / max(ref.width - 1, 1)
    sy = (s - 1) / max(ref.height - 1, 1)
    scale = np.diag([sx, sy])
    inv_scale = np.diag([1.0 / sx, 1.0 / sy])
    a_full = inv_scale @ m_work.a @ scale
    b_full = inv_scale @ m_work.b
    try:
        m_full = AffineTransform2D(np.hstack([a_full, b_full[:, None]]))
    except ValueError:
        return AffineTransform2D.identity(), matches
    return m_full, matches


def warp_nearest(data: np.ndarray, m: AffineTransform2D, dims: tuple[int, int]):
    """Inverse-mapped nearest-neighbor warp of one 2-D array."""
    w, h = dims
    inv = m.inverse()
    xs = np.arange(w, dtype=np.float64)
    ys = np.arange(h, dtype=np.float64)
    src_x = inv.m[0, 0] * xs[None, :] + inv.m[0, 1] * ys[:, None] + inv.m[0, 2]
    src_y = inv.m[1, 0] * xs[None, :] + inv.m[1, 1] * ys[:, None] + inv.m[1, 2]
    xi = np.rint(src_x).astype(np.int64)
    yi = np.rint(src_y).astype(np.int64)
    ok = (xi >= 0) & (xi < data.shape[1]) & (yi >= 0) & (yi < data.shape[0])
    out = np.zeros((h, w), dtype=data.dtype)
    out[ok] = data[yi[ok], xi[ok]]
    return out


def warp_depth(
    img: DepthImage, m: AffineTransform2D, dims: tuple[int, int]
) -> DepthImage:
    """Warp a depth image without interpolating across depth edges.

    Nearest-neighbor sampling keeps 16-bit values exact; pixels that map
    outside the source become 0 (invalid).
    """
    return DepthImage(warp_nearest(img.data, m, dims))
