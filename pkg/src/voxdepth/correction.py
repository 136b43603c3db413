"""Per-frame depth correction against the warped template.

A frame pixel is distrusted when it is far below the template (holes and
dropouts read as zero or near-zero) or, by default, when it exceeds the
template at all; distrusted pixels take the template's value. Template
zeros carry no information and never overwrite the frame. A windowed median
then scrubs the remaining salt-and-pepper flicker.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import median_filter as _nd_median

from .dataset import RgbdFrame
from .fusion import Template
from .registration import MatchSet, RegistrationConfig, register_template, warp_depth
from .types import DepthImage
from .validation import check_odd_window, check_same_shape


@dataclass
class CorrectionConfig:
    median_window: int = 5
    invalid_low_factor: float = 0.5
    treat_greater_as_invalid: bool = True
    greater_tolerance: float = 0.0

    def __post_init__(self):
        check_odd_window(self.median_window)
        if not 0.0 < self.invalid_low_factor < 1.0:
            raise ValueError("invalid_low_factor must be in (0, 1)")
        if self.greater_tolerance < 0:
            raise ValueError("greater_tolerance must be >= 0")


def combine(
    frame: DepthImage, warped_template: DepthImage, cfg: CorrectionConfig
) -> DepthImage:
    """Replace distrusted frame pixels with template values.

    Distrusted means frame < invalid_low_factor * template, or (with the
    default flag) frame > template * (1 + greater_tolerance). Pixels where
    the template is 0 always keep the frame value.
    """
    check_same_shape(frame, warped_template)
    f = frame.data.astype(np.float64)
    t = warped_template.data.astype(np.float64)
    known = t > 0
    low = f < cfg.invalid_low_factor * t
    if cfg.treat_greater_as_invalid:
        high = f > t * (1.0 + cfg.greater_tolerance)
    else:
        high = np.zeros_like(low)
    distrusted = known & (low | high)
    return DepthImage(np.where(distrusted, warped_template.data, frame.data))


def median_filter(img: DepthImage, n: int) -> DepthImage:
    """Windowed median with clamped (edge-replicated) borders."""
    check_odd_window(n)
    return DepthImage(_nd_median(img.data, size=n, mode="nearest"))


def left_fill(img: DepthImage) -> DepthImage:
    """Fill zeros from the nearest valid pixel to the left, per row.

    Leading zeros take the row's first valid value; all-zero rows stay zero.
    """
    d = img.data
    h, w = d.shape
    valid = d > 0
    col_idx = np.where(valid, np.arange(w)[None, :], -1)
    last_valid = np.maximum.accumulate(col_idx, axis=1)
    rows = np.broadcast_to(np.arange(h)[:, None], (h, w))
    out = np.where(
        last_valid >= 0, d[rows, np.clip(last_valid, 0, None)], 0
    ).astype(np.uint16)
    has_any = valid.any(axis=1)
    first_vals = d[np.arange(h), np.argmax(valid, axis=1)]
    leading = (last_valid < 0) & has_any[:, None]
    out = np.where(leading, first_vals[:, None], out)
    return DepthImage(out.astype(np.uint16))


def correct_frame(
    frame: RgbdFrame,
    template: Template,
    regcfg: RegistrationConfig,
    corrcfg: CorrectionConfig,
) -> tuple[DepthImage, MatchSet]:
    """Full correction path: register, warp, combine, median-filter.

    Returns the corrected depth plus the match set so the caller can decide
    whether the template still fits the scene.
    """
    m, matches = register_template(template, frame, regcfg)
    warped = warp_depth(template.image, m, (frame.depth.width, frame.depth.height))
    combined = combine(frame.depth, warped, corrcfg)
    return median_filter(combined, corrcfg.median_window), matches
