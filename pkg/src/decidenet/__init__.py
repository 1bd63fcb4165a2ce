"""Attention-guided fusion of detection- and regression-based crowd counting."""

from ._mem import tune_allocator

tune_allocator()

from .autodiff import Tape, Tensor, backward, sgd_step  # noqa: E402
from .density import (DensityMap, Detection, GaussianKernelSpec, count,  # noqa: E402
                      det_density, gt_density, resize_conserving, score_map)
from .networks import (QualityNetParams, RegNetParams, blend,  # noqa: E402
                       qualitynet_forward, regnet_forward)

__version__ = "0.1.0"

__all__ = [
    "Tape", "Tensor", "backward", "sgd_step",
    "DensityMap", "Detection", "GaussianKernelSpec", "count",
    "det_density", "gt_density", "resize_conserving", "score_map",
    "QualityNetParams", "RegNetParams", "blend",
    "qualitynet_forward", "regnet_forward",
    "__version__",
]
