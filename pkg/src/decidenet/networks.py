"""The two estimator networks and the attention-weighted blend.

RegNet is a 5-layer fully convolutional regressor (20x7x7, 40x5x5,
20x5x5, 10x5x5, 1x1x1, two 2x2 max-pools after the first two layers,
ReLU on the head) that maps an image patch to a quarter-resolution
density map.  QualityNet consumes the patch stacked with both density
estimates (5 channels) and emits a per-pixel attention map K in (0,1)
through four same-padding convolutions and a sigmoid.  The final map is
the pixelwise convex combination K*D_det + (1-K)*D_reg.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .density import DensityMap, bilinear_resize, resize_conserving

REGNET_LAYERS = ((7, 20), (5, 40), (5, 20), (5, 10), (1, 1))
QUALITYNET_WIDTHS = (16, 16, 8, 1)
QUALITYNET_KERNEL = 3

# The output heads start at 5% of the He scale: with the paper's
# learning rate and the summed-pixel losses a full-scale head slams the
# trunk so hard on the first update that every ReLU dies (verified).
# A small head bounds the first gradients; predictions grow organically.
HEAD_INIT_SCALE = 0.05


@dataclass
class RegNetParams:
    """Kernels/biases of the five RegNet convolutions, on the tape."""

    weights: list[Tensor]
    biases: list[Tensor]

    @classmethod
    def init(cls, rng: np.random.Generator, in_channels: int = 3) -> "RegNetParams":
        ws, bs = [], []
        c = in_channels
        for i, (k, width) in enumerate(REGNET_LAYERS):
            w = ad.he_kernel(rng, k, k, c, width)
            if i == len(REGNET_LAYERS) - 1:
                w.data *= HEAD_INIT_SCALE
            ws.append(w)
            bs.append(ad.zero_bias(width))
            c = width
        return cls(ws, bs)

    @classmethod
    def zeros(cls, in_channels: int = 3) -> "RegNetParams":
        ws, bs = [], []
        c = in_channels
        for k, width in REGNET_LAYERS:
            ws.append(Tensor(np.zeros((k, k, c, width)), requires_grad=True))
            bs.append(ad.zero_bias(width))
            c = width
        return cls(ws, bs)

    def tensors(self) -> dict[str, Tensor]:
        named = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases), start=1):
            named[f"regnet.conv{i}.w"] = w
            named[f"regnet.conv{i}.b"] = b
        return named

    def parameters(self) -> list[Tensor]:
        return self.weights + self.biases

    def copy(self) -> "RegNetParams":
        return RegNetParams(
            [Tensor(w.data.copy(), requires_grad=True) for w in self.weights],
            [Tensor(b.data.copy(), requires_grad=True) for b in self.biases])


@dataclass
class QualityNetParams:
    """Four convolution layers ending in a single sigmoid channel."""

    weights: list[Tensor]
    biases: list[Tensor]

    @classmethod
    def init(cls, rng: np.random.Generator, in_channels: int = 5,
             widths: tuple[int, ...] = QUALITYNET_WIDTHS) -> "QualityNetParams":
        if widths[-1] != 1:
            raise ValueError(f"final QualityNet layer must be single-channel, got {widths}")
        ws, bs = [], []
        c = in_channels
        for i, width in enumerate(widths):
            w = ad.he_kernel(rng, QUALITYNET_KERNEL, QUALITYNET_KERNEL, c, width)
            if i == len(widths) - 1:
                w.data *= HEAD_INIT_SCALE  # K starts near 0.5 (late fusion)
            ws.append(w)
            bs.append(ad.zero_bias(width))
            c = width
        return cls(ws, bs)

    @classmethod
    def zeros(cls, in_channels: int = 5,
              widths: tuple[int, ...] = QUALITYNET_WIDTHS) -> "QualityNetParams":
        ws, bs = [], []
        c = in_channels
        for width in widths:
            ws.append(Tensor(np.zeros((QUALITYNET_KERNEL, QUALITYNET_KERNEL, c, width)),
                             requires_grad=True))
            bs.append(ad.zero_bias(width))
            c = width
        return cls(ws, bs)

    def tensors(self, prefix: str = "qualitynet") -> dict[str, Tensor]:
        named = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases), start=1):
            named[f"{prefix}.conv{i}.w"] = w
            named[f"{prefix}.conv{i}.b"] = b
        return named

    def parameters(self) -> list[Tensor]:
        return self.weights + self.biases

    def copy(self) -> "QualityNetParams":
        return QualityNetParams(
            [Tensor(w.data.copy(), requires_grad=True) for w in self.weights],
            [Tensor(b.data.copy(), requires_grad=True) for b in self.biases])


def regnet_forward(params: RegNetParams, patch: Tensor, tape: Tape | None = None) -> Tensor:
    """Patch (N,H,W,C) or (H,W,C) -> density map tensor (..., H/4, W/4, 1).

    conv1 -> pool -> conv2 -> pool -> conv3 -> conv4 -> conv5 -> ReLU;
    the two pools quarter the spatial extent, the final ReLU keeps the
    map non-negative.  Patches must be at least 16x16.
    """
    shape = patch.data.shape
    h, w = (shape[0], shape[1]) if patch.data.ndim == 3 else (shape[1], shape[2])
    if h < 16 or w < 16:
        raise ValueError(f"regnet_forward: patch {h}x{w} smaller than 16x16")
    x = ad.conv2d(patch, params.weights[0], params.biases[0], "same", tape)
    x = ad.relu(x, tape)
    x = ad.maxpool2(x, tape)
    x = ad.conv2d(x, params.weights[1], params.biases[1], "same", tape)
    x = ad.relu(x, tape)
    x = ad.maxpool2(x, tape)
    x = ad.conv2d(x, params.weights[2], params.biases[2], "same", tape)
    x = ad.relu(x, tape)
    x = ad.conv2d(x, params.weights[3], params.biases[3], "same", tape)
    x = ad.relu(x, tape)
    x = ad.conv2d(x, params.weights[4], params.biases[4], "same", tape)
    return ad.relu(x, tape)


def qualitynet_apply(params: QualityNetParams, stacked: Tensor,
                     tape: Tape | None = None) -> Tensor:
    """Run the four convolutions + sigmoid on an already-stacked input."""
    c = stacked.data.shape[-1]
    expect = params.weights[0].data.shape[2]
    if c != expect:
        raise ValueError(f"qualitynet: stacked input has {c} channels, expected {expect}")
    x = stacked
    last = len(params.weights) - 1
    for i, (wt, bt) in enumerate(zip(params.weights, params.biases)):
        x = ad.conv2d(x, wt, bt, "same", tape)
        if i < last:
            x = ad.relu(x, tape)
    return ad.sigmoid(x, tape)


def stack_quality_input(patch: np.ndarray, d_det: np.ndarray,
                        d_reg: np.ndarray) -> np.ndarray:
    """Channel stack [patch RGB, D_det, D_reg]; batched or single."""
    return np.concatenate([patch, d_det[..., None], d_reg[..., None]], axis=-1)


def qualitynet_forward(params: QualityNetParams, patch: Tensor, d_det: DensityMap,
                       d_reg: DensityMap, tape: Tape | None = None) -> Tensor:
    """Attention map at patch resolution for one patch.

    The two density maps are upsampled count-conserving to the patch
    extent and stacked with the (3-channel) patch into 5 channels.
    """
    if patch.data.ndim != 3 or patch.data.shape[-1] != 3:
        raise ValueError(f"qualitynet_forward: patch must be (H,W,3), got "
                         f"{patch.data.shape}")
    h, w = patch.data.shape[:2]
    det_up = resize_conserving(d_det, (h, w)).values
    reg_up = resize_conserving(d_reg, (h, w)).values
    stacked = Tensor(stack_quality_input(patch.data, det_up, reg_up))
    return qualitynet_apply(params, stacked, tape)


def blend(k, d_det, d_reg):
    """Final map: K*D_det + (1-K)*D_reg pixelwise.

    Accepts DensityMap/ndarray triples (returns DensityMap) or Tensor K
    with constant maps for the training path (returns a detached-input
    Tensor expression; pass arrays already at K's resolution).
    """
    if isinstance(k, Tensor):
        raise TypeError("tensor blend requires an explicit tape; use blend_on_tape")
    kv = np.asarray(k, dtype=np.float64)
    dv = d_det.values if isinstance(d_det, DensityMap) else np.asarray(d_det, dtype=np.float64)
    rv = d_reg.values if isinstance(d_reg, DensityMap) else np.asarray(d_reg, dtype=np.float64)
    if kv.shape != dv.shape or kv.shape != rv.shape:
        raise ValueError(f"blend: shapes differ: K {kv.shape}, D_det {dv.shape}, "
                         f"D_reg {rv.shape}")
    out = kv * dv + (1.0 - kv) * rv
    if isinstance(d_det, DensityMap):
        return DensityMap(out)
    return out


def blend_on_tape(k: Tensor, d_det: np.ndarray, d_reg, tape: Tape) -> Tensor:
    """Differentiable blend K*D_det + (1-K)*D_reg at K's resolution.

    d_det is always a fixed array; d_reg may be a Tensor (when the
    quality loss is allowed to reach the regressor) or an array.
    """
    if isinstance(d_reg, Tensor):
        if k.data.shape != d_det.shape or k.data.shape != d_reg.data.shape:
            raise ValueError(f"blend: shapes differ: K {k.data.shape}, D_det {d_det.shape}, "
                             f"D_reg {d_reg.data.shape}")
        m1 = ad.mul(k, Tensor(d_det), tape)
        m2 = ad.mul(k, d_reg, tape)
        return ad.add(ad.sub(m1, m2, tape), d_reg, tape)
    d_reg = np.asarray(d_reg, dtype=np.float64)
    if k.data.shape != d_det.shape or k.data.shape != d_reg.shape:
        raise ValueError(f"blend: shapes differ: K {k.data.shape}, D_det {d_det.shape}, "
                         f"D_reg {d_reg.shape}")
    return ad.add(ad.mul(k, Tensor(d_det - d_reg), tape), Tensor(d_reg), tape)
