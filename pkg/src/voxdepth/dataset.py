"""On-disk frame sequences: manifest, PNG frame files and metric CSV output.

Layout inside a sequence directory:

    manifest.json
    frame_000000.color.png   8-bit RGB
    frame_000000.depth.png   16-bit single channel, millimeters
    frame_000000.gt.png      optional ground-truth depth
    frame_000000.mask.png    optional occlusion-hole mask (nonzero = hole)
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np

from .errors import (
    DecodeError,
    FrameIndexError,
    HeaderMismatchError,
    MalformedManifestError,
    MissingFrameFileError,
    MissingManifestError,
)
from .types import CameraIntrinsics, ColorImage, DepthImage, resize_bilinear

MANIFEST_NAME = "manifest.json"
COLOR_PATTERN = "frame_{:06d}.color.png"
DEPTH_PATTERN = "frame_{:06d}.depth.png"
GT_PATTERN = "frame_{:06d}.gt.png"
MASK_PATTERN = "frame_{:06d}.mask.png"
DEFAULT_FPS = 30.0


@dataclass(frozen=True)
class RgbdFrame:
    """One aligned color+depth pair; color is rescaled to depth size on load."""

    index: int
    color: ColorImage
    depth: DepthImage
    timestamp_ms: float = 0.0


@dataclass(frozen=True)
class SequenceManifest:
    """Validated description of a sequence directory."""

    root: Path
    frame_count: int
    intrinsics: CameraIntrinsics
    has_ground_truth: bool = False
    has_hole_masks: bool = False
    fps: float = DEFAULT_FPS

    def frame_paths(self, index: int) -> tuple[Path, Path]:
        return (
            self.root / COLOR_PATTERN.format(index),
            self.root / DEPTH_PATTERN.format(index),
        )

    def read_frame(self, index: int) -> RgbdFrame:
        return read_frame(self, index)

    def read_ground_truth(self, index: int) -> DepthImage:
        return read_ground_truth(self, index)

    def read_hole_mask(self, index: int) -> np.ndarray:
        return read_hole_mask(self, index)


class InMemorySequence:
    """Frame source backed by lists; mirrors the SequenceManifest read API."""

    def __init__(self, frames, intrinsics, ground_truth=None, hole_masks=None):
        if not frames:
            raise ValueError("sequence needs at least one frame")
        self.frames = list(frames)
        self.intrinsics = intrinsics
        self.ground_truth = list(ground_truth) if ground_truth is not None else None
        self.hole_masks = list(hole_masks) if hole_masks is not None else None

    @property
    def frame_count(self):
        return len(self.frames)

    @property
    def has_ground_truth(self):
        return self.ground_truth is not None

    @property
    def has_hole_masks(self):
        return self.hole_masks is not None

    def read_frame(self, index):
        if not 0 <= index < len(self.frames):
            raise FrameIndexError(f"frame {index} outside 0..{len(self.frames) - 1}")
        return self.frames[index]

    def read_ground_truth(self, index):
        return self.ground_truth[index]

    def read_hole_mask(self, index):
        return self.hole_masks[index]


def load_sequence(path) -> SequenceManifest:
    """Load and validate manifest.json; checks every referenced file exists."""
    root = Path(path)
    manifest_path = root / MANIFEST_NAME
    if not manifest_path.is_file():
        raise MissingManifestError(f"no {MANIFEST_NAME} in {root}")
    try:
        raw = json.loads(manifest_path.read_text())
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise MalformedManifestError(f"cannot parse {manifest_path}: {exc}") from exc

    for key in ("frames", "fx", "fy", "cx", "cy"):
        if key not in raw:
            raise MalformedManifestError(f"manifest missing field '{key}'")
    try:
        count = int(raw["frames"])
        intr = CameraIntrinsics(
            fx=float(raw["fx"]),
            fy=float(raw["fy"]),
            cx=float(raw["cx"]),
            cy=float(raw["cy"]),
            baseline=float(raw.get("baseline_m", 0.0)),
        )
    except (TypeError, ValueError) as exc:
        raise MalformedManifestError(str(exc)) from exc
    if count < 1:
        raise MalformedManifestError("manifest must declare frames >= 1")

    manifest = SequenceManifest(
        root=root,
        frame_count=count,
        intrinsics=intr,
        has_ground_truth=bool(raw.get("ground_truth", False)),
        has_hole_masks=bool(raw.get("hole_masks", False)),
        fps=float(raw.get("fps", DEFAULT_FPS)),
    )
    for i in range(count):
        color_path, depth_path = manifest.frame_paths(i)
        for p in (color_path, depth_path):
            if not p.is_file():
                raise MissingFrameFileError(f"frame {i}: missing {p.name}")
        if manifest.has_ground_truth and not (root / GT_PATTERN.format(i)).is_file():
            raise MissingFrameFileError(f"frame {i}: missing ground-truth file")
        if manifest.has_hole_masks and not (root / MASK_PATTERN.format(i)).is_file():
            raise MissingFrameFileError(f"frame {i}: missing hole-mask file")
    return manifest


def _imread(path: Path, flags: int) -> np.ndarray:
    arr = cv2.imread(str(path), flags)
    if arr is None:
        raise DecodeError(f"cannot decode {path}")
    return arr


def read_depth(path) -> DepthImage:
    arr = _imread(Path(path), cv2.IMREAD_UNCHANGED)
    if arr.ndim != 2:
        raise DecodeError(f"{path} is not a single-channel depth image")
    return DepthImage(arr.astype(np.uint16))


def read_color(path) -> ColorImage:
    arr = _imread(Path(path), cv2.IMREAD_COLOR)
    return ColorImage(arr[:, :, ::-1])  # BGR file order to RGB


def read_frame(manifest: SequenceManifest, index: int) -> RgbdFrame:
    """Decode one frame; color is resized to the depth dimensions if needed."""
    if not 0 <= index < manifest.frame_count:
        raise FrameIndexError(f"frame {index} outside 0..{manifest.frame_count - 1}")
    color_path, depth_path = manifest.frame_paths(index)
    depth = read_depth(depth_path)
    color = read_color(color_path)
    if (color.width, color.height) != (depth.width, depth.height):
        color = resize_bilinear(color, depth.width, depth.height)
    return RgbdFrame(
        index=index,
        color=color,
        depth=depth,
        timestamp_ms=index * 1000.0 / manifest.fps,
    )


def read_ground_truth(manifest: SequenceManifest, index: int) -> DepthImage:
    if not 0 <= index < manifest.frame_count:
        raise FrameIndexError(f"frame {index} outside 0..{manifest.frame_count - 1}")
    return read_depth(manifest.root / GT_PATTERN.format(index))


def read_hole_mask(manifest: SequenceManifest, index: int) -> np.ndarray:
    """Boolean hole mask (True = occlusion hole)."""
    if not 0 <= index < manifest.frame_count:
        raise FrameIndexError(f"frame {index} outside 0..{manifest.frame_count - 1}")
    arr = _imread(manifest.root / MASK_PATTERN.format(index), cv2.IMREAD_UNCHANGED)
    if arr.ndim == 3:
        arr = arr[:, :, 0]
    return arr > 0


def write_depth(path, img: DepthImage) -> None:
    """Lossless 16-bit PNG; round-trips bit-exactly through read_depth."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not cv2.imwrite(str(path), img.data):
        raise OSError(f"failed to write {path}")


def write_color(path, img: ColorImage) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not cv2.imwrite(str(path), img.data[:, :, ::-1]):
        raise OSError(f"failed to write {path}")


def write_mask(path, mask: np.ndarray) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arr = np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8)
    if not cv2.imwrite(str(path), arr):
        raise OSError(f"failed to write {path}")


def write_manifest(
    root,
    frame_count: int,
    intrinsics: CameraIntrinsics,
    has_ground_truth: bool = False,
    has_hole_masks: bool = False,
    fps: float = DEFAULT_FPS,
) -> Path:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    payload = {
        "frames": frame_count,
        "fx": intrinsics.fx,
        "fy": intrinsics.fy,
        "cx": intrinsics.cx,
        "cy": intrinsics.cy,
        "baseline_m": intrinsics.baseline,
        "ground_truth": has_ground_truth,
        "hole_masks": has_hole_masks,
        "fps": fps,
    }
    path = root / MANIFEST_NAME
    path.write_text(json.dumps(payload, indent=2) + "\n")
    return path


def _format_value(value) -> str:
    if isinstance(value, float):
        if np.isinf(value):
            return "inf"
        return repr(value)
    return str(value)


def append_metrics(path, record: dict) -> None:
    """Append one CSV row; the first call writes the header.

    Later calls must use exactly the same keys in the same order.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    keys = list(record.keys())
    exists = path.is_file() and path.stat().st_size > 0
    if exists:
        with open(path, newline="") as fh:
            header = next(csv.reader(fh), None)
        if header != keys:
            raise HeaderMismatchError(
                f"record keys {keys} do not match existing header {header}"
            )
    with open(path, "a", newline="") as fh:
        writer = csv.writer(fh)
        if not exists:
            writer.writerow(keys)
        writer.writerow([_format_value(record[k]) for k in keys])
