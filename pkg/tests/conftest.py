"""Shared fixtures: bundled scenes rendered once per session."""

import numpy as np
import pytest

from voxdepth.cli import load_config_file, pipeline_from_dict, scene_from_dict
from voxdepth.dataset import RgbdFrame
from voxdepth.synth import (
    Box,
    SceneSpec,
    Sphere,
    generate_dataset,
    linear_trajectory,
    render_sequence,
)
from voxdepth.types import CameraIntrinsics


def render_frames(spec):
    """Render a scene into RgbdFrame objects (no noise)."""
    return [
        RgbdFrame(index=i, color=c, depth=d)
        for i, (c, d) in enumerate(render_sequence(spec))
    ]


def small_scene(
    frames=4,
    velocity=(0.0, 0.0, 0.0),
    width=160,
    height=120,
    seed=3,
    baseline=0.0,
    extra_primitives=(),
):
    intr = CameraIntrinsics(
        fx=width / 2, fy=width / 2, cx=width / 2, cy=height / 2, baseline=baseline
    )
    prims = [
        Box((-0.35, 0.05, 2.2), (0.5, 0.55, 0.4), 1),
        Box((0.55, -0.2, 2.8), (0.5, 0.45, 0.5), 2),
        Sphere((0.3, 0.45, 3.6), 0.5, 4),
    ] + list(extra_primitives)
    return SceneSpec(
        primitives=prims,
        trajectory=linear_trajectory(frames, velocity=velocity),
        width=width,
        height=height,
        intrinsics=intr,
        background_depth=5.0,
        seed=seed,
    )


def _bundled_dataset(tmp_path_factory, name):
    spec, noise = scene_from_dict(load_config_file(f"scenes/{name}.json"))
    out = tmp_path_factory.mktemp(name)
    return generate_dataset(out / "data", spec, noise)


@pytest.fixture(scope="session")
def bench_dataset(tmp_path_factory):
    """The noisy moving-camera benchmark: 100 frames at 640x360."""
    return _bundled_dataset(tmp_path_factory, "plane_box")


@pytest.fixture(scope="session")
def study_dataset(tmp_path_factory):
    """60 frames at 320x180 with wide occlusion bands, for the sweeps."""
    return _bundled_dataset(tmp_path_factory, "study_small")


@pytest.fixture(scope="session")
def odometry_dataset(tmp_path_factory):
    """Clean 51-frame track moving 0.02 m/frame along +x."""
    return _bundled_dataset(tmp_path_factory, "odometry_track")


@pytest.fixture(scope="session")
def static_dataset(tmp_path_factory):
    """Static noisy scene, 50 frames at 320x180."""
    return _bundled_dataset(tmp_path_factory, "static_box")


@pytest.fixture(scope="session")
def benchmark_config():
    return pipeline_from_dict(load_config_file("scenes/benchmark_pipeline.json"))


def sliding_windows(data: np.ndarray, n: int) -> np.ndarray:
    """All clamped-border n*n windows of a 2-D array: shape (h, w, n, n).

    Border handling replicates edge pixels, matching index clamping.
    """
    pad = n // 2
    padded = np.pad(data, pad, mode="edge")
    return np.lib.stride_tricks.sliding_window_view(padded, (n, n))


def oracle_dilate(data: np.ndarray, n: int) -> np.ndarray:
    return sliding_windows(data, n).max(axis=(2, 3))


def oracle_erode(data: np.ndarray, n: int) -> np.ndarray:
    return sliding_windows(data, n).min(axis=(2, 3))


def oracle_median(data: np.ndarray, n: int) -> np.ndarray:
    win = sliding_windows(data, n).reshape(*data.shape, n * n)
    return np.sort(win, axis=2)[:, :, (n * n) // 2]
