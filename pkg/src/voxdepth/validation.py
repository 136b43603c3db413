"""Input validation helpers used at public API boundaries."""

from __future__ import annotations

import numpy as np

from .errors import DimensionMismatchError
from .types import ColorImage, DepthImage, GrayImage


def check_odd_window(n: int, minimum: int = 3) -> int:
    n = int(n)
    if n < minimum or n % 2 == 0:
        raise ValueError(f"window size must be an odd integer >= {minimum}, got {n}")
    return n


def check_same_shape(a, b, what: str = "images"):
    if (a.height, a.width) != (b.height, b.width):
        raise DimensionMismatchError(
            f"{what} differ in size: {a.width}x{a.height} vs {b.width}x{b.height}"
        )


def as_depth_image(x) -> DepthImage:
    """Coerce a uint16-compatible 2-D array (or pass through a DepthImage)."""
    if isinstance(x, DepthImage):
        return x
    return DepthImage(np.asarray(x))


def as_color_image(x) -> ColorImage:
    if isinstance(x, ColorImage):
        return x
    return ColorImage(np.asarray(x))


def as_gray_image(x) -> GrayImage:
    if isinstance(x, GrayImage):
        return x
    return GrayImage(np.asarray(x))


def check_fraction(value: float, name: str) -> float:
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {value}")
    return value
