"""Depth-image quality metrics: PSNR, masked RMSE and hole ratio."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyMaskError, RequiresGroundTruthError
from .types import DepthImage
from .validation import check_same_shape

DEPTH_PEAK = 65535.0


@dataclass(frozen=True)
class QualityRecord:
    """Per-frame quality summary."""

    frame: int
    psnr_db: float
    masked_rmse: float | None
    hole_ratio: float


def psnr(a: DepthImage, b: DepthImage, peak: float = DEPTH_PEAK) -> float:
    """Peak signal-to-noise ratio over all pixels; identical images give inf."""
    check_same_shape(a, b)
    diff = a.data.astype(np.float64) - b.data.astype(np.float64)
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return math.inf
    return 20.0 * math.log10(peak / math.sqrt(mse))


def masked_rmse(pred: DepthImage, gt: DepthImage, mask) -> float:
    """Root-mean-square depth error restricted to the masked pixels."""
    check_same_shape(pred, gt)
    sel = np.asarray(mask, dtype=bool)
    if sel.shape != pred.data.shape:
        raise EmptyMaskError("mask shape does not match the images")
    if not sel.any():
        raise EmptyMaskError("mask selects no pixels")
    diff = pred.data.astype(np.float64)[sel] - gt.data.astype(np.float64)[sel]
    return float(np.sqrt(np.mean(diff * diff)))


def hole_ratio(img: DepthImage) -> float:
    """Fraction of zero-valued (invalid) pixels."""
    return float(np.count_nonzero(img.data == 0) / img.data.size)


def mean_psnr(values) -> float:
    vals = [v for v in values if v is not None]
    if not vals:
        return math.nan
    if any(math.isinf(v) for v in vals):
        return math.inf
    return float(np.mean(vals))


def hole_psnr_curve(pairs, bucket_width: float = 0.05):
    """Bucket (raw, ground-truth) frame pairs by hole ratio.

    Returns rows of (bucket_low_edge, mean_raw_psnr, frame_count) sorted by
    hole ratio. `pairs` is any iterable of (raw DepthImage, gt DepthImage).
    """
    if bucket_width <= 0:
        raise ValueError("bucket_width must be positive")
    buckets: dict[int, list[float]] = {}
    count = 0
    for raw, gt in pairs:
        count += 1
        # epsilon guards ratios that sit exactly on a bucket edge
        idx = int(math.floor(hole_ratio(raw) / bucket_width + 1e-9))
        buckets.setdefault(idx, []).append(psnr(raw, gt))
    if count == 0:
        raise RequiresGroundTruthError("no frames with ground truth supplied")
    return [
        (round(idx * bucket_width, 10), mean_psnr(vals), len(vals))
        for idx, vals in sorted(buckets.items())
    ]
