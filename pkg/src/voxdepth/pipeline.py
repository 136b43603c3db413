"""Epoch state machine and the three-stage frame pipeline.

The stream alternates between two states. FUSION buffers frames into the
next fusion window while still emitting output corrected against the stale
template (raw frames during the very first epoch). Once the window fills,
the new template is built; it activates at the next frame, and CORRECTION
serves every following frame while watching the good-match count. When that
count drops below the switch threshold the scene has changed and a new
epoch begins.

`run_sequence` executes either sequentially or as three overlapping stages
(read/decode, registration, combine+median) connected by bounded queues.
Outputs are bit-identical between the two modes: a registration result
computed against a stale template version is recomputed by the final stage,
and a freshly built template always activates at the first frame after its
window, never "whenever the background thread happens to finish".
"""

from __future__ import annotations

import math
import queue
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .correction import CorrectionConfig, combine, left_fill, median_filter
from .errors import RequiresGroundTruthError
from .fusion import FusionConfig, Template, build_template
from .metrics import hole_ratio, masked_rmse, mean_psnr, psnr
from .odometry import OdometryConfig, estimate_odometry
from .registration import (
    MatchSet,
    RegistrationConfig,
    register_template,
    warp_depth,
)
from .types import DepthImage

NEVER = 10**9  # refusion interval that never triggers
_POLL_S = 0.05


class Mode(Enum):
    FUSION = "fusion"
    CORRECTION = "correction"


@dataclass
class PipelineConfig:
    fusion: FusionConfig = field(default_factory=FusionConfig)
    registration: RegistrationConfig = field(default_factory=RegistrationConfig)
    correction: CorrectionConfig = field(default_factory=CorrectionConfig)
    odometry: OdometryConfig = field(default_factory=OdometryConfig)
    good_match_switch_threshold: int = 5
    stage_queue_capacity: int = 2
    pipelined: bool = False
    # When set, refuse on a fixed cadence instead of the match signal.
    force_refusion_every: int | None = None

    def __post_init__(self):
        if self.good_match_switch_threshold < 1:
            raise ValueError("good_match_switch_threshold must be >= 1")
        if self.stage_queue_capacity < 1:
            raise ValueError("stage_queue_capacity must be >= 1")


@dataclass
class EpochState:
    mode: Mode = Mode.FUSION
    epoch_id: int = 0
    active_template: Template | None = None
    pending_window: list = field(default_factory=list)
    switch_log: list = field(default_factory=list)
    template_version: int = 0
    # Built but not yet activated; takes effect at the next frame.
    incoming_template: Template | None = None


def epoch_switch_needed(good_count: int, threshold: int) -> bool:
    """A new epoch starts only when good matches fall strictly below the
    threshold; an exact hit keeps the current template."""
    return good_count < threshold


@dataclass
class StepInfo:
    frame_index: int
    epoch_id: int
    mode: str
    raw: bool
    good_count: int
    switched: bool


@dataclass
class RunReport:
    frames: int
    throughput_fps: float
    switch_log: list
    rows: list
    component_ms: dict
    outputs: list | None

    @property
    def switches(self) -> int:
        return len(self.switch_log)

    def stage_stats(self) -> dict:
        stats = {}
        for name, values in self.component_ms.items():
            if not values:
                continue
            arr = np.asarray(values, dtype=np.float64)
            stats[name] = {
                "count": int(arr.size),
                "mean_ms": float(arr.mean()),
                "p95_ms": float(np.percentile(arr, 95)),
            }
        return stats

    def mean_metric(self, key: str) -> float:
        return mean_psnr(row.get(key) for row in self.rows)


class _RegResult:
    """Registration computed by the pipelined stage, tagged with the
    template version it used."""

    __slots__ = ("version", "transform", "matches")

    def __init__(self, version, transform, matches):
        self.version = version
        self.transform = transform
        self.matches = matches


class _Controller:
    """Single-threaded owner of the epoch state machine."""

    def __init__(self, intr, cfg: PipelineConfig, state=None, odometry=None,
                 executor=None, timers=None):
        self.intr = intr
        self.cfg = cfg
        self.state = state if state is not None else EpochState()
        if odometry is None:
            odometry = lambda a, b: estimate_odometry(  # noqa: E731
                a, b, intr, cfg.odometry
            )
        self.odometry = odometry
        self.executor = executor
        self.timers = timers if timers is not None else {}
        self._pending_future = None
        # Atomic snapshot read by the registration stage thread.
        self.snapshot = (self.state.template_version, self.state.active_template)

    def _record(self, name, ms):
        self.timers.setdefault(name, []).append(ms)

    def _activate_if_ready(self):
        st = self.state
        tmpl = None
        if st.incoming_template is not None:
            tmpl = st.incoming_template
            st.incoming_template = None
        elif self._pending_future is not None:
            tmpl = self._pending_future.result()
            self._pending_future = None
        if tmpl is None:
            return
        st.active_template = tmpl
        st.template_version += 1
        st.mode = Mode.CORRECTION
        self.snapshot = (st.template_version, st.active_template)

    def _switch(self, frame_index: int, reason: str):
        st = self.state
        st.switch_log.append((frame_index, reason))
        st.mode = Mode.FUSION
        st.epoch_id += 1
        st.pending_window = []

    def _registration(self, frame, reg):
        st = self.state
        if reg is not None and reg.version == st.template_version:
            return reg.transform, reg.matches
        t0 = time.perf_counter()
        m, matches = register_template(
            st.active_template, frame, self.cfg.registration
        )
        self._record("transform", (time.perf_counter() - t0) * 1000.0)
        return m, matches

    def _schedule_build(self):
        st = self.state
        window = list(st.pending_window)
        st.pending_window = []
        epoch = st.epoch_id
        job = lambda: build_template(  # noqa: E731
            window,
            self.intr,
            self.cfg.fusion,
            odometry=self.odometry,
            epoch_id=epoch,
            timings=self.timers,
        )
        if self.executor is not None:
            self._pending_future = self.executor.submit(job)
        else:
            st.incoming_template = job()

    def process(self, frame, reg=None):
        """Advance the machine by one frame; returns (output, StepInfo)."""
        st = self.state
        cfg = self.cfg
        self._activate_if_ready()

        if (
            cfg.force_refusion_every is not None
            and st.mode is Mode.CORRECTION
            and frame.index - st.active_template.created_at_frame
            >= cfg.force_refusion_every
        ):
            self._switch(frame.index, "scheduled")

        raw = st.active_template is None
        if raw:
            output = DepthImage(frame.depth.data.copy())
            matches = MatchSet.empty()
        else:
            m, matches = self._registration(frame, reg)
            t0 = time.perf_counter()
            warped = warp_depth(
                st.active_template.image,
                m,
                (frame.depth.width, frame.depth.height),
            )
            merged = combine(frame.depth, warped, cfg.correction)
            output = median_filter(merged, cfg.correction.median_window)
            self._record("combine", (time.perf_counter() - t0) * 1000.0)

        switched = False
        if (
            st.mode is Mode.CORRECTION
            and cfg.force_refusion_every is None
            and epoch_switch_needed(
                matches.good_count, cfg.good_match_switch_threshold
            )
        ):
            self._switch(frame.index, "low_good_matches")
            switched = True

        if st.mode is Mode.FUSION:
            st.pending_window.append(frame)
            if len(st.pending_window) >= cfg.fusion.window:
                self._schedule_build()

        info = StepInfo(
            frame_index=frame.index,
            epoch_id=st.epoch_id,
            mode=st.mode.value,
            raw=raw,
            good_count=matches.good_count,
            switched=switched,
        )
        return output, info


def step(state: EpochState, frame, intr, cfg: PipelineConfig, odometry=None):
    """Advance the state machine by one frame; returns (output, state).

    The state object is updated in place and returned for convenience; a
    template built when the window fills takes effect at the next call.
    """
    ctrl = _Controller(intr, cfg, state=state, odometry=odometry)
    output, _ = ctrl.process(frame)
    return output, state


def _metric_row(source, info, frame, output):
    row = {
        "frame": info.frame_index,
        "epoch": info.epoch_id,
        "mode": info.mode,
        "raw": info.raw,
        "good_count": info.good_count,
        "hole_ratio_raw": hole_ratio(frame.depth),
        "hole_ratio_out": hole_ratio(output),
        "psnr": None,
        "masked_rmse": None,
    }
    if source is not None and getattr(source, "has_ground_truth", False):
        gt = source.read_ground_truth(info.frame_index)
        row["psnr"] = psnr(output, gt)
        if getattr(source, "has_hole_masks", False):
            mask = source.read_hole_mask(info.frame_index)
            if mask.any():
                row["masked_rmse"] = masked_rmse(output, gt, mask)
    return row


def run_sequence(
    source,
    cfg: PipelineConfig,
    odometry=None,
    keep_outputs: bool = True,
    collect_metrics: bool = True,
    on_output=None,
) -> RunReport:
    """Process a whole sequence; see PipelineConfig.pipelined for the mode.

    `source` is a SequenceManifest or anything exposing the same read API.
    Output order always equals input order, and the two execution modes
    produce bit-identical images.
    """
    timers: dict = {}
    state = EpochState()
    rows: list = []
    outputs: list | None = [] if keep_outputs else None

    start = time.perf_counter()
    if cfg.pipelined:
        with ThreadPoolExecutor(max_workers=1) as fusion_pool:
            ctrl = _Controller(
                source.intrinsics, cfg, state=state, odometry=odometry,
                executor=fusion_pool, timers=timers,
            )
            _run_pipelined(source, cfg, ctrl, rows, outputs, collect_metrics,
                           on_output)
    else:
        ctrl = _Controller(
            source.intrinsics, cfg, state=state, odometry=odometry, timers=timers
        )
        for i in range(source.frame_count):
            t0 = time.perf_counter()
            frame = source.read_frame(i)
            ctrl._record("read", (time.perf_counter() - t0) * 1000.0)
            output, info = ctrl.process(frame)
            if collect_metrics:
                rows.append(_metric_row(source, info, frame, output))
            if outputs is not None:
                outputs.append(output)
            if on_output is not None:
                on_output(i, output)
    elapsed = time.perf_counter() - start

    return RunReport(
        frames=source.frame_count,
        throughput_fps=source.frame_count / elapsed if elapsed > 0 else math.inf,
        switch_log=list(state.switch_log),
        rows=rows,
        component_ms=timers,
        outputs=outputs,
    )


def _put_until(q, item, stop):
    while not stop.is_set():
        try:
            q.put(item, timeout=_POLL_S)
            return True
        except queue.Full:
            continue
    return False


def _run_pipelined(source, cfg, ctrl, rows, outputs, collect_metrics, on_output):
    q_read = queue.Queue(maxsize=cfg.stage_queue_capacity)
    q_reg = queue.Queue(maxsize=cfg.stage_queue_capacity)
    stop = threading.Event()
    failures: list = []

    def reader():
        try:
            for i in range(source.frame_count):
                if stop.is_set():
                    return
                t0 = time.perf_counter()
                frame = source.read_frame(i)
                dt = (time.perf_counter() - t0) * 1000.0
                if not _put_until(q_read, (frame, dt), stop):
                    return
        except BaseException as exc:  # surfaced by the main loop
            failures.append(exc)
        finally:
            _put_until(q_read, None, stop)

    def registrar():
        try:
            while True:
                try:
                    item = q_read.get(timeout=_POLL_S)
                except queue.Empty:
                    if stop.is_set():
                        return
                    continue
                if item is None:
                    return
                frame, read_ms = item
                version, template = ctrl.snapshot
                reg = None
                if template is not None:
                    t0 = time.perf_counter()
                    m, matches = register_template(
                        template, frame, cfg.registration
                    )
                    ctrl._record(
                        "transform", (time.perf_counter() - t0) * 1000.0
                    )
                    reg = _RegResult(version, m, matches)
                if not _put_until(q_reg, (frame, read_ms, reg), stop):
                    return
        except BaseException as exc:
            failures.append(exc)
        finally:
            _put_until(q_reg, None, stop)

    threads = [
        threading.Thread(target=reader, name="stage-read", daemon=True),
        threading.Thread(target=registrar, name="stage-register", daemon=True),
    ]
    for t in threads:
        t.start()
    try:
        while True:
            item = q_reg.get()
            if item is None:
                break
            frame, read_ms, reg = item
            ctrl._record("read", read_ms)
            output, info = ctrl.process(frame, reg)
            if collect_metrics:
                rows.append(_metric_row(source, info, frame, output))
            if outputs is not None:
                outputs.append(output)
            if on_output is not None:
                on_output(info.frame_index, output)
    except BaseException as exc:
        failures.insert(0, exc)
    finally:
        stop.set()
        for t in threads:
            t.join(timeout=5.0)
    if failures:
        raise failures[0]


def run_baseline(source, method: str, keep_outputs: bool = True) -> RunReport:
    """Per-frame reference methods: 'none' copies input, 'leftfill' fills
    zeros from the nearest valid pixel on the left."""
    if method not in ("none", "leftfill"):
        raise ValueError(f"unknown baseline '{method}'")
    rows: list = []
    outputs: list | None = [] if keep_outputs else None
    timers: dict = {}
    start = time.perf_counter()
    for i in range(source.frame_count):
        t0 = time.perf_counter()
        frame = source.read_frame(i)
        timers.setdefault("read", []).append((time.perf_counter() - t0) * 1000.0)
        t0 = time.perf_counter()
        if method == "leftfill":
            output = left_fill(frame.depth)
        else:
            output = DepthImage(frame.depth.data.copy())
        timers.setdefault("combine", []).append((time.perf_counter() - t0) * 1000.0)
        info = StepInfo(i, 0, "baseline", method == "none", 0, False)
        rows.append(_metric_row(source, info, frame, output))
        if outputs is not None:
            outputs.append(output)
    elapsed = time.perf_counter() - start
    return RunReport(
        frames=source.frame_count,
        throughput_fps=source.frame_count / elapsed if elapsed > 0 else math.inf,
        switch_log=[],
        rows=rows,
        component_ms=timers,
        outputs=outputs,
    )


def _mean_corrected_psnr(report: RunReport, first_frame: int = 0) -> float:
    return mean_psnr(
        row["psnr"]
        for row in report.rows
        if not row["raw"] and row["frame"] >= first_frame
    )


def sweep_fusion_frequency(source, cfg: PipelineConfig, frequencies, odometry=None):
    """Mean corrected PSNR when refusing every k frames (k may be inf).

    Match-based switching is overridden so the cadence alone varies; frames
    emitted raw while the very first window fills are excluded from the mean
    (they are identical across cadences).
    """
    if not getattr(source, "has_ground_truth", False):
        raise RequiresGroundTruthError("frequency sweep needs ground truth")
    table = []
    for k in frequencies:
        every = NEVER if (k is None or math.isinf(k)) else int(k)
        run_cfg = replace(cfg, force_refusion_every=every, pipelined=False)
        report = run_sequence(
            source, run_cfg, odometry=odometry, keep_outputs=False
        )
        table.append((k, _mean_corrected_psnr(report)))
    return table


def sweep_init_window(source, cfg: PipelineConfig, sizes, odometry=None):
    """Mean corrected PSNR as the fusion window grows.

    Each run fuses exactly once so window size alone drives the result, and
    the mean covers the frames every window size corrects (index at least
    max(sizes)), keeping the comparison apples-to-apples.
    """
    if not getattr(source, "has_ground_truth", False):
        raise RequiresGroundTruthError("window sweep needs ground truth")
    first_frame = max(int(s) for s in sizes)
    table = []
    for size in sizes:
        run_cfg = replace(
            cfg,
            fusion=replace(cfg.fusion, window=int(size)),
            force_refusion_every=NEVER,
            pipelined=False,
        )
        report = run_sequence(
            source, run_cfg, odometry=odometry, keep_outputs=False
        )
        table.append((int(size), _mean_corrected_psnr(report, first_frame)))
    return table


def resize_sweep(source, cfg: PipelineConfig, sizes, sample_frames: int = 6,
                 odometry=None):
    """Registration quality and latency across working resolutions.

    Quality is the PSNR between the warped template depth and the raw frame;
    latency covers the registration call alone. Returns (size, psnr, ms).
    """
    window = [
        source.read_frame(i)
        for i in range(min(cfg.fusion.window, source.frame_count))
    ]
    template = build_template(
        window, source.intrinsics, cfg.fusion, odometry=odometry
    )
    first = template.created_at_frame + 1
    idx = [
        first + i for i in range(sample_frames)
        if first + i < source.frame_count
    ]
    if not idx:
        idx = [source.frame_count - 1]
    frames = [source.read_frame(i) for i in idx]
    table = []
    for size in sizes:
        run_cfg = replace(cfg.registration, work_size=int(size))
        latencies = []
        quality = []
        for frame in frames:
            t0 = time.perf_counter()
            m, _ = register_template(template, frame, run_cfg)
            latencies.append((time.perf_counter() - t0) * 1000.0)
            warped = warp_depth(
                template.image, m, (frame.depth.width, frame.depth.height)
            )
            quality.append(psnr(warped, frame.depth))
        table.append(
            (int(size), mean_psnr(quality), float(np.mean(latencies)))
        )
    return table
