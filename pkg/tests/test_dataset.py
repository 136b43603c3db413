import numpy as np
import pytest

from voxdepth.dataset import (
    DEPTH_PATTERN,
    append_metrics,
    load_sequence,
    read_depth,
    read_frame,
    write_color,
    write_depth,
    write_manifest,
)
from voxdepth.errors import (
    DecodeError,
    FrameIndexError,
    HeaderMismatchError,
    MalformedManifestError,
    MissingFrameFileError,
    MissingManifestError,
)
from voxdepth.synth import NoiseSpec, generate_dataset
from voxdepth.types import CameraIntrinsics, ColorImage, DepthImage

from conftest import small_scene


def test_depth_round_trip_all_values(tmp_path):
    arr = np.arange(65536, dtype=np.uint16).reshape(256, 256)
    path = tmp_path / "all.png"
    write_depth(path, DepthImage(arr))
    back = read_depth(path)
    assert np.array_equal(back.data, arr)


def test_depth_round_trip_extremes(tmp_path):
    for value in (0, 65535):
        path = tmp_path / f"v{value}.png"
        write_depth(path, DepthImage(np.full((4, 6), value, dtype=np.uint16)))
        assert (read_depth(path).data == value).all()


def test_color_round_trip_keeps_channel_order(tmp_path):
    arr = np.zeros((3, 3, 3), dtype=np.uint8)
    arr[:, :, 0] = 200  # red
    path = tmp_path / "red.png"
    write_color(path, ColorImage(arr))
    import cv2

    back = cv2.imread(str(path), cv2.IMREAD_COLOR)[:, :, ::-1]
    assert (back[:, :, 0] == 200).all() and (back[:, :, 1] == 0).all()


def test_generated_dataset_round_trips(tmp_path):
    spec = small_scene(frames=3)
    manifest = generate_dataset(tmp_path / "seq", spec, NoiseSpec())
    assert manifest.frame_count == 3
    frame = read_frame(manifest, 1)
    assert frame.index == 1
    assert (frame.depth.width, frame.depth.height) == (spec.width, spec.height)
    assert (frame.color.width, frame.color.height) == (spec.width, spec.height)
    # order is strictly increasing and deterministic
    indices = [read_frame(manifest, i).index for i in range(manifest.frame_count)]
    assert indices == sorted(indices)


def test_missing_manifest(tmp_path):
    with pytest.raises(MissingManifestError):
        load_sequence(tmp_path)


def test_malformed_manifest(tmp_path):
    (tmp_path / "manifest.json").write_text("{not json")
    with pytest.raises(MalformedManifestError):
        load_sequence(tmp_path)
    (tmp_path / "manifest.json").write_text('{"frames": 1}')
    with pytest.raises(MalformedManifestError):
        load_sequence(tmp_path)


def test_missing_frame_file(tmp_path):
    write_manifest(tmp_path, 2, CameraIntrinsics(10, 10, 5, 5))
    with pytest.raises(MissingFrameFileError):
        load_sequence(tmp_path)


def test_index_out_of_range(tmp_path):
    spec = small_scene(frames=2)
    manifest = generate_dataset(tmp_path / "seq", spec, NoiseSpec())
    with pytest.raises(FrameIndexError):
        read_frame(manifest, 2)
    with pytest.raises(FrameIndexError):
        read_frame(manifest, -1)


def test_truncated_file_decode_error(tmp_path):
    spec = small_scene(frames=1)
    manifest = generate_dataset(tmp_path / "seq", spec, NoiseSpec())
    depth_path = manifest.root / DEPTH_PATTERN.format(0)
    depth_path.write_bytes(depth_path.read_bytes()[:20])
    with pytest.raises(DecodeError):
        read_frame(manifest, 0)


class TestMetricsCsv:
    def test_header_then_rows(self, tmp_path):
        path = tmp_path / "m.csv"
        append_metrics(path, {"frame": 0, "psnr": 12.5})
        append_metrics(path, {"frame": 1, "psnr": float("inf")})
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "frame,psnr"
        assert len(lines) == 3
        assert lines[2] == "1,inf"

    def test_header_mismatch(self, tmp_path):
        path = tmp_path / "m.csv"
        append_metrics(path, {"frame": 0, "psnr": 1.0})
        with pytest.raises(HeaderMismatchError):
            append_metrics(path, {"frame": 1, "rmse": 2.0})
