from dataclasses import replace

import numpy as np
import pytest

import voxdepth.pipeline as pipeline_mod
from voxdepth.dataset import InMemorySequence, RgbdFrame
from voxdepth.errors import DecodeError, RequiresGroundTruthError
from voxdepth.fusion import FusionConfig
from voxdepth.pipeline import (
    EpochState,
    Mode,
    PipelineConfig,
    epoch_switch_needed,
    run_baseline,
    run_sequence,
    step,
    sweep_fusion_frequency,
    sweep_init_window,
)
from voxdepth.pointcloud import VoxelGridSpec
from voxdepth.registration import AffineTransform2D, MatchSet
from voxdepth.synth import NoiseSpec, generate_dataset, generate_frames
from voxdepth.types import RigidTransform

from conftest import small_scene

IDENTITY_ODO = lambda a, b: RigidTransform.identity()  # noqa: E731


def small_cfg(window=4, **kwargs):
    return PipelineConfig(
        fusion=FusionConfig(
            window=window, grid=VoxelGridSpec(512, 0.02, 0.02, 0.02)
        ),
        **kwargs,
    )


def noisy_source(frames=14, velocity=(0.0, 0.0, 0.0), seed=3):
    spec = small_scene(frames=frames, velocity=velocity, seed=seed, baseline=0.1)
    generated = generate_frames(spec, NoiseSpec(flicker_fraction=0.04, seed=11))
    rgbd = [RgbdFrame(i, g.color, g.depth) for i, g in enumerate(generated)]
    return InMemorySequence(
        rgbd,
        spec.intrinsics,
        ground_truth=[g.ground_truth for g in generated],
        hole_masks=[g.hole_mask for g in generated],
    )


class TestSwitchPredicate:
    def test_exact_threshold_keeps_template(self):
        assert not epoch_switch_needed(5, 5)

    def test_below_threshold_switches(self):
        assert epoch_switch_needed(4, 5)


class TestStep:
    def test_epoch_zero_emits_raw(self):
        source = noisy_source()
        cfg = small_cfg(window=3)
        state = EpochState()
        for i in range(3):
            frame = source.read_frame(i)
            out, state = step(state, frame, source.intrinsics, cfg,
                              odometry=IDENTITY_ODO)
            assert np.array_equal(out.data, frame.depth.data)
        assert state.mode is Mode.FUSION  # activation happens on the next step
        assert state.incoming_template is not None

    def test_template_activates_next_frame(self):
        source = noisy_source()
        cfg = small_cfg(window=3)
        state = EpochState()
        for i in range(4):
            out, state = step(state, source.read_frame(i), source.intrinsics,
                              cfg, odometry=IDENTITY_ODO)
        assert state.mode is Mode.CORRECTION
        assert state.active_template is not None
        assert state.epoch_id == 0
        # corrected output differs from the raw frame (holes were filled)
        raw = source.read_frame(3).depth
        assert not np.array_equal(out.data, raw.data)

    def test_correction_mode_invariant(self):
        source = noisy_source()
        cfg = small_cfg(window=3)
        state = EpochState()
        for i in range(source.frame_count):
            _, state = step(state, source.read_frame(i), source.intrinsics,
                            cfg, odometry=IDENTITY_ODO)
            if state.mode is Mode.CORRECTION:
                assert state.active_template is not None
            assert len(state.pending_window) <= cfg.fusion.window

    def test_low_good_count_switches(self, monkeypatch):
        source = noisy_source()
        cfg = small_cfg(window=2)
        state = EpochState()
        for i in range(3):
            _, state = step(state, source.read_frame(i), source.intrinsics,
                            cfg, odometry=IDENTITY_ODO)
        assert state.mode is Mode.CORRECTION

        def fake_register(template, frame, rcfg):
            return AffineTransform2D.identity(), MatchSet([], 4)

        monkeypatch.setattr(pipeline_mod, "register_template", fake_register)
        _, state = step(state, source.read_frame(3), source.intrinsics, cfg,
                        odometry=IDENTITY_ODO)
        assert state.mode is Mode.FUSION
        assert state.switch_log == [(3, "low_good_matches")]
        assert state.epoch_id == 1
        assert len(state.pending_window) == 1  # the triggering frame buffers

    def test_exact_threshold_does_not_switch(self, monkeypatch):
        source = noisy_source()
        cfg = small_cfg(window=2)
        state = EpochState()
        for i in range(3):
            _, state = step(state, source.read_frame(i), source.intrinsics,
                            cfg, odometry=IDENTITY_ODO)

        def fake_register(template, frame, rcfg):
            return AffineTransform2D.identity(), MatchSet([], 5)

        monkeypatch.setattr(pipeline_mod, "register_template", fake_register)
        _, state = step(state, source.read_frame(3), source.intrinsics, cfg,
                        odometry=IDENTITY_ODO)
        assert state.mode is Mode.CORRECTION
        assert state.switch_log == []


class TestRunSequence:
    def test_rows_ordered_and_flagged(self):
        source = noisy_source()
        report = run_sequence(source, small_cfg(), odometry=IDENTITY_ODO)
        assert [r["frame"] for r in report.rows] == list(range(source.frame_count))
        assert all(r["raw"] for r in report.rows[:4])
        assert not any(r["raw"] for r in report.rows[5:])
        assert report.frames == source.frame_count
        assert len(report.outputs) == source.frame_count

    def test_pipelined_matches_sequential(self):
        source = noisy_source()
        cfg = small_cfg()
        seq = run_sequence(source, cfg, odometry=IDENTITY_ODO)
        pipe = run_sequence(source, replace(cfg, pipelined=True),
                            odometry=IDENTITY_ODO)
        assert seq.switch_log == pipe.switch_log
        for a, b in zip(seq.outputs, pipe.outputs):
            assert np.array_equal(a.data, b.data)

    def test_pipelined_matches_sequential_all_capacities(self):
        source = noisy_source(frames=10)
        base = small_cfg(window=3)
        ref = run_sequence(source, base, odometry=IDENTITY_ODO)
        for cap in (1, 3):
            cfg = replace(base, pipelined=True, stage_queue_capacity=cap)
            got = run_sequence(source, cfg, odometry=IDENTITY_ODO)
            for a, b in zip(ref.outputs, got.outputs):
                assert np.array_equal(a.data, b.data)

    def test_deterministic_across_runs(self):
        source = noisy_source()
        cfg = small_cfg()
        a = run_sequence(source, cfg, odometry=IDENTITY_ODO)
        b = run_sequence(source, cfg, odometry=IDENTITY_ODO)
        assert a.switch_log == b.switch_log
        for x, y in zip(a.outputs, b.outputs):
            assert np.array_equal(x.data, y.data)

    def test_single_frame_sequence(self):
        source = noisy_source(frames=1)
        report = run_sequence(source, small_cfg(window=4), odometry=IDENTITY_ODO)
        assert report.frames == 1
        assert report.switches == 0

    def test_stage_failure_surfaces(self, tmp_path):
        spec = small_scene(frames=6)
        manifest = generate_dataset(tmp_path / "seq", spec, NoiseSpec())
        bad = manifest.root / "frame_000004.depth.png"
        bad.write_bytes(bad.read_bytes()[:16])
        for pipelined in (False, True):
            cfg = replace(small_cfg(window=2), pipelined=pipelined)
            with pytest.raises(DecodeError):
                run_sequence(manifest, cfg, odometry=IDENTITY_ODO)


class TestBaselines:
    def test_none_copies_input(self):
        source = noisy_source(frames=3)
        report = run_baseline(source, "none")
        for i, out in enumerate(report.outputs):
            assert np.array_equal(out.data, source.read_frame(i).depth.data)

    def test_leftfill_fills_zeros(self):
        source = noisy_source(frames=3)
        report = run_baseline(source, "leftfill")
        for out in report.outputs:
            rows_with_any = (source.read_frame(0).depth.data > 0).any(axis=1)
            assert (out.data[rows_with_any] > 0).all()

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            run_baseline(noisy_source(frames=1), "foo")


class TestSweeps:
    def test_require_ground_truth(self):
        spec = small_scene(frames=4)
        frames = [
            RgbdFrame(i, c, d)
            for i, (c, d) in enumerate(
                (g.color, g.depth) for g in generate_frames(spec, NoiseSpec())
            )
        ]
        source = InMemorySequence(frames, spec.intrinsics)
        with pytest.raises(RequiresGroundTruthError):
            sweep_fusion_frequency(source, small_cfg(), [2])
        with pytest.raises(RequiresGroundTruthError):
            sweep_init_window(source, small_cfg(), [1])

    def test_static_scene_flat_frequency(self):
        source = noisy_source(frames=14)
        cfg = small_cfg(window=3)
        table = sweep_fusion_frequency(
            source, cfg, [4, float("inf")], odometry=IDENTITY_ODO
        )
        values = [v for _, v in table]
        assert abs(values[0] - values[1]) <= 0.2

    def test_window_one_matches_single_frame_template(self):
        source = noisy_source(frames=8)
        cfg = small_cfg(window=1)
        table = sweep_init_window(source, cfg, [1], odometry=IDENTITY_ODO)
        assert len(table) == 1 and table[0][0] == 1
