"""Scikit-learn style front end for the depth rectification pipeline.

`fit` builds the initial scene template from the first fusion window of the
input sequence; `transform` then corrects frames against it, switching
epochs on its own whenever the scene changes. Inputs can be a sequence
directory, a loaded manifest, an in-memory sequence, or a plain list of
(color, depth) array pairs plus explicit intrinsics.
"""

from __future__ import annotations

import copy

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .dataset import InMemorySequence, RgbdFrame, SequenceManifest, load_sequence
from .correction import CorrectionConfig
from .fusion import FusionConfig, build_template
from .pipeline import EpochState, Mode, PipelineConfig, _Controller
from .pointcloud import VoxelGridSpec
from .registration import RegistrationConfig
from .types import CameraIntrinsics, ColorImage, DepthImage


def _coerce_source(x, intrinsics):
    if isinstance(x, (str,)) or hasattr(x, "__fspath__"):
        return load_sequence(x)
    if isinstance(x, (SequenceManifest, InMemorySequence)):
        return x
    frames = []
    for i, item in enumerate(x):
        if isinstance(item, RgbdFrame):
            frames.append(item)
        else:
            color, depth = item
            color = color if isinstance(color, ColorImage) else ColorImage(np.asarray(color))
            depth = depth if isinstance(depth, DepthImage) else DepthImage(np.asarray(depth))
            frames.append(RgbdFrame(index=i, color=color, depth=depth))
    if intrinsics is None:
        raise ValueError(
            "intrinsics are required when fitting on raw frame lists"
        )
    return InMemorySequence(frames, intrinsics)


class DepthRectifier(BaseEstimator, TransformerMixin):
    """Correct noisy 16-bit depth frames against a fused scene template.

    Parameters mirror the pipeline configuration; see the package README
    for their meaning. `intrinsics` may be None when fitting on sources
    that carry their own (directories and manifests).
    """

    def __init__(
        self,
        window=10,
        grid_size=256,
        voxel_size=0.05,
        dilation_window=5,
        inpaint_method="dilate",
        median_window=5,
        invalid_low_factor=0.5,
        treat_greater_as_invalid=True,
        work_size=200,
        fast_threshold=12,
        match_distance_threshold=20,
        good_match_switch_threshold=5,
        seed=7,
        intrinsics=None,
    ):
        self.window = window
        self.grid_size = grid_size
        self.voxel_size = voxel_size
        self.dilation_window = dilation_window
        self.inpaint_method = inpaint_method
        self.median_window = median_window
        self.invalid_low_factor = invalid_low_factor
        self.treat_greater_as_invalid = treat_greater_as_invalid
        self.work_size = work_size
        self.fast_threshold = fast_threshold
        self.match_distance_threshold = match_distance_threshold
        self.good_match_switch_threshold = good_match_switch_threshold
        self.seed = seed
        self.intrinsics = intrinsics

    def _pipeline_config(self) -> PipelineConfig:
        return PipelineConfig(
            fusion=FusionConfig(
                window=self.window,
                grid=VoxelGridSpec(
                    grid_size=self.grid_size,
                    voxel_size_x=self.voxel_size,
                    voxel_size_y=self.voxel_size,
                    voxel_size_z=self.voxel_size,
                ),
                dilation_window=self.dilation_window,
                inpaint_method=self.inpaint_method,
            ),
            registration=RegistrationConfig(
                work_size=self.work_size,
                fast_threshold=self.fast_threshold,
                match_distance_threshold=self.match_distance_threshold,
                seed=self.seed,
            ),
            correction=CorrectionConfig(
                median_window=self.median_window,
                invalid_low_factor=self.invalid_low_factor,
                treat_greater_as_invalid=self.treat_greater_as_invalid,
            ),
            good_match_switch_threshold=self.good_match_switch_threshold,
        )

    def fit(self, X, y=None):
        """Build the initial template from the first fusion window of X."""
        source = _coerce_source(X, self.intrinsics)
        intr = source.intrinsics
        cfg = self._pipeline_config()
        n = min(self.window, source.frame_count)
        frames = [source.read_frame(i) for i in range(n)]
        template = build_template(frames, intr, cfg.fusion, epoch_id=0)
        self.intrinsics_ = intr
        self.state_ = EpochState(
            mode=Mode.CORRECTION,
            epoch_id=0,
            active_template=template,
            template_version=1,
        )
        return self

    def transform(self, X):
        """Correct every frame of X; returns a list of DepthImage.

        The fitted state is copied first, so calling transform twice on the
        same input yields identical results.
        """
        if not hasattr(self, "state_"):
            raise NotFittedError(
                "This DepthRectifier instance is not fitted yet. Call 'fit' "
                "with appropriate arguments first."
            )
        source = _coerce_source(X, self.intrinsics or self.intrinsics_)
        cfg = self._pipeline_config()
        ctrl = _Controller(
            self.intrinsics_, cfg, state=copy.deepcopy(self.state_)
        )
        out = []
        for i in range(source.frame_count):
            output, _ = ctrl.process(source.read_frame(i))
            out.append(output)
        return out
