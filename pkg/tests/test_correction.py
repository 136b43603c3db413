import numpy as np
import pytest

from voxdepth.correction import (
    CorrectionConfig,
    combine,
    correct_frame,
    left_fill,
    median_filter,
)
from voxdepth.dataset import RgbdFrame
from voxdepth.errors import DimensionMismatchError
from voxdepth.fusion import FusionConfig, Template, build_template
from voxdepth.metrics import hole_ratio, psnr
from voxdepth.pointcloud import VoxelGridSpec
from voxdepth.registration import RegistrationConfig
from voxdepth.synth import inject_blob_holes, make_rng
from voxdepth.types import ColorImage, DepthImage, RigidTransform

from conftest import oracle_median, render_frames, small_scene

CFG = CorrectionConfig()


def depth(values):
    return DepthImage(np.asarray(values, dtype=np.uint16))


class TestCombine:
    def test_zero_frame_takes_template(self):
        out = combine(depth([[0]]), depth([[1000]]), CFG)
        assert out.data[0, 0] == 1000

    def test_equal_values_keep_frame(self):
        out = combine(depth([[1000]]), depth([[1000]]), CFG)
        assert out.data[0, 0] == 1000

    def test_greater_than_template_replaced(self):
        out = combine(depth([[1200]]), depth([[1000]]), CFG)
        assert out.data[0, 0] == 1000

    def test_slightly_low_but_valid_kept(self):
        out = combine(depth([[700]]), depth([[1000]]), CFG)
        assert out.data[0, 0] == 700  # 700 >= 0.5 * 1000

    def test_template_zero_never_overwrites(self):
        out = combine(depth([[1200]]), depth([[0]]), CFG)
        assert out.data[0, 0] == 1200

    def test_greater_rule_can_be_disabled(self):
        cfg = CorrectionConfig(treat_greater_as_invalid=False)
        out = combine(depth([[1200]]), depth([[1000]]), cfg)
        assert out.data[0, 0] == 1200

    def test_greater_tolerance_band(self):
        cfg = CorrectionConfig(greater_tolerance=0.25)
        assert combine(depth([[1200]]), depth([[1000]]), cfg).data[0, 0] == 1200
        assert combine(depth([[1300]]), depth([[1000]]), cfg).data[0, 0] == 1000

    def test_never_zero_when_either_nonzero(self):
        rng = make_rng(41, 0)
        f = rng.integers(0, 3000, size=(16, 16)).astype(np.uint16)
        t = rng.integers(0, 3000, size=(16, 16)).astype(np.uint16)
        out = combine(DepthImage(f), DepthImage(t), CFG)
        either = (f > 0) | (t > 0)
        assert (out.data[either] > 0).all()

    def test_idempotent(self):
        rng = make_rng(42, 0)
        f = DepthImage(rng.integers(0, 3000, size=(16, 16)).astype(np.uint16))
        t = DepthImage(rng.integers(0, 3000, size=(16, 16)).astype(np.uint16))
        once = combine(f, t, CFG)
        twice = combine(once, t, CFG)
        assert np.array_equal(once.data, twice.data)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            combine(depth([[1]]), depth([[1, 2]]), CFG)


class TestMedian:
    def test_constant_unchanged(self):
        img = depth(np.full((6, 6), 1234))
        assert (median_filter(img, 3).data == 1234).all()

    def test_spike_removed(self):
        arr = np.zeros((5, 5), dtype=np.uint16)
        arr[2, 2] = 65535
        assert median_filter(DepthImage(arr), 3).data[2, 2] == 0

    def test_matches_oracle(self):
        rng = make_rng(43, 0)
        for _ in range(50):
            h = int(rng.integers(1, 17))
            w = int(rng.integers(1, 17))
            arr = rng.integers(0, 65536, size=(h, w)).astype(np.uint16)
            for n in (3, 5, 7):
                got = median_filter(DepthImage(arr), n).data
                assert np.array_equal(got, oracle_median(arr, n))

    def test_even_window_rejected(self):
        with pytest.raises(ValueError):
            median_filter(depth([[1]]), 2)


class TestLeftFill:
    def test_interior_fill(self):
        out = left_fill(depth([[5, 0, 0, 7]]))
        assert out.data.tolist() == [[5, 5, 5, 7]]

    def test_leading_zeros_backfilled(self):
        out = left_fill(depth([[0, 0, 9]]))
        assert out.data.tolist() == [[9, 9, 9]]

    def test_all_zero_row_stays(self):
        out = left_fill(depth([[0, 0, 0], [1, 0, 2]]))
        assert out.data.tolist() == [[0, 0, 0], [1, 1, 2]]


class TestCorrectFrame:
    @pytest.fixture(scope="class")
    def setup(self):
        from voxdepth.synth import inject_geometric_holes

        spec = small_scene(frames=10, baseline=0.12, width=320, height=240)
        frames = render_frames(spec)
        gt = frames[-1].depth
        holed = []
        for f in frames:
            out, _ = inject_geometric_holes(f.depth, spec.intrinsics, 0.12)
            holed.append(RgbdFrame(f.index, f.color, out))
        cfg = FusionConfig(window=10, grid=VoxelGridSpec(2048, 0.008, 0.008, 0.008))
        template = build_template(
            holed, spec.intrinsics, cfg,
            odometry=lambda a, b: RigidTransform.identity(),
        )
        return spec, holed, gt, template

    def test_corrected_beats_raw(self, setup):
        spec, holed, gt, template = setup
        corrected, ms = correct_frame(
            holed[-1], template, RegistrationConfig(), CFG
        )
        assert psnr(corrected, gt) >= psnr(holed[-1].depth, gt)
        assert ms.good_count >= 5

    def test_perfect_template_fills_all_holes(self, setup):
        spec, holed, gt, _ = setup
        noisy, mask = inject_blob_holes(gt, 0.05, seed=10)
        frame = RgbdFrame(0, holed[-1].color, noisy)
        perfect = Template(
            image=gt,
            anchor_color=holed[-1].color,
            created_at_frame=0,
            epoch_id=0,
        )
        corrected, _ = correct_frame(frame, perfect, RegistrationConfig(), CFG)
        inner = corrected.data[1:-1, 1:-1]
        assert (inner > 0).all()

    def test_degenerate_registration_still_defined(self, setup):
        spec, holed, gt, _ = setup
        rng = make_rng(44, 0)
        noise_template = Template(
            image=gt,
            anchor_color=ColorImage(
                rng.integers(0, 256, size=(240, 320, 3)).astype(np.uint8)
            ),
            created_at_frame=0,
            epoch_id=0,
        )
        corrected, ms = correct_frame(
            holed[-1], noise_template, RegistrationConfig(), CFG
        )
        assert corrected.data.shape == (240, 320)
        assert ms.good_count < 5

    def test_corrected_hole_ratio_low(self, setup):
        spec, holed, gt, template = setup
        corrected, _ = correct_frame(holed[-1], template, RegistrationConfig(), CFG)
        assert hole_ratio(corrected) < 0.1 * max(hole_ratio(holed[-1].depth), 1e-9)
