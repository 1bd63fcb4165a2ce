"""Minimal dense-tensor engine with reverse-mode differentiation.

Tensors wrap float64 numpy arrays in channels-last layout: images are
(H, W, C) or batched (N, H, W, C), convolution kernels (kh, kw, C_in,
C_out).  Operations optionally record onto a :class:`Tape`; the tape is
rebuilt on every forward pass (define-by-run) and one reverse traversal
populates ``grad`` for every reachable tensor that requires it.

Design notes:
  * everything is 64-bit; the networks are tiny and verification
    precision matters more than speed,
  * convolutions run as im2col + one BLAS matmul,
  * backward closures skip inputs that do not require gradients (the
    image batch is a leaf, so the first layer never computes d/d(input)).
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ._mem import tune_allocator

tune_allocator()


class Tensor:
    """A float64 array plus gradient bookkeeping."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


class Tape:
    """Ordered record of executed primitive operations.

    Ops append themselves in execution order, which for define-by-run is
    already a valid topological order, so backward is a single reversed
    sweep.  A tensor participates in gradient flow only once some op
    with a grad-requiring input has produced it.
    """

    def __init__(self):
        self._nodes: list[tuple[Tensor, Callable[[np.ndarray], None]]] = []
        # forward-value memo so sibling networks fed the same input can
        # share one im2col buffer (keyed on input id + geometry)
        self._col_cache: dict[tuple, np.ndarray] = {}

    def __len__(self) -> int:
        return len(self._nodes)

    def record(self, out: Tensor, backward_fn: Callable[[np.ndarray], None]) -> None:
        self._nodes.append((out, backward_fn))


def _accumulate(t: Tensor, g: np.ndarray, fresh: bool = True) -> None:
    # fresh=True promises g is a throwaway buffer this call may own;
    # pass fresh=False when g aliases another tensor's gradient.
    if t.grad is None:
        t.grad = g if fresh else g.copy()
    else:
        t.grad += g


def backward(loss: Tensor, tape: Tape) -> None:
    """Populate grads of every requires_grad tensor reachable from loss.

    Gradients of op outputs are consumed (cleared) during the sweep;
    only leaves keep theirs.  Several losses with disjoint subgraphs
    may therefore be backpropagated over one tape in sequence.
    """
    if loss.data.ndim != 0:
        raise ValueError(f"backward expects a scalar loss, got shape {loss.data.shape}")
    if loss.grad is None:
        loss.grad = np.ones((), dtype=np.float64)
    for out, fn in reversed(tape._nodes):
        if out.grad is not None:
            fn(out.grad)
            out.grad = None


def sgd_step(params: Iterable[Tensor], lr: float) -> None:
    """Plain SGD update p <- p - lr * grad; grads are cleared after use."""
    params = list(params)
    for p in params:
        if p.grad is None:
            raise ValueError("sgd_step: parameter has no gradient (missing backward?)")
    for p in params:
        p.data -= lr * p.grad
        p.grad = None


# ---------------------------------------------------------------------------
# convolution


def _as_batched(x: np.ndarray) -> tuple[np.ndarray, bool]:
    if x.ndim == 3:
        return x[None], True
    if x.ndim == 4:
        return x, False
    raise ValueError(f"expected (H,W,C) or (N,H,W,C) input, got shape {x.shape}")


def _im2col(xp: np.ndarray, kh: int, kw: int) -> np.ndarray:
    # xp (N,Hp,Wp,C) -> (N*OH*OW, kh*kw*C); the trailing (kw,C) block of
    # each window is contiguous in memory, which keeps this copy cheap.
    n, hp, wp, c = xp.shape
    win = sliding_window_view(xp, (kh, kw), axis=(1, 2))
    oh, ow = hp - kh + 1, wp - kw + 1
    return win.transpose(0, 1, 2, 4, 5, 3).reshape(n * oh * ow, kh * kw * c)


def conv2d(
    x: Tensor,
    kernels: Tensor,
    bias: Tensor,
    padding: str = "same",
    tape: Tape | None = None,
) -> Tensor:
    """2-D cross-correlation, channels-last.

    x: (N,H,W,C_in) or (H,W,C_in); kernels: (kh,kw,C_in,C_out);
    bias: (C_out,).  "same" zero-pads (odd kernels only) so H'=H, W'=W;
    "valid" gives H'=H-kh+1.  Differentiable w.r.t. all three inputs.
    """
    xb, squeeze = _as_batched(x.data)
    n, h, w, c = xb.shape
    if kernels.data.ndim != 4:
        raise ValueError(f"kernels must be (kh,kw,C_in,C_out), got shape {kernels.data.shape}")
    kh, kw, kc, co = kernels.data.shape
    if kc != c:
        raise ValueError(f"conv2d: input has {c} channels but kernels expect {kc}")
    if bias.data.shape != (co,):
        raise ValueError(f"conv2d: bias shape {bias.data.shape} != ({co},)")
    if padding == "same":
        if kh % 2 == 0 or kw % 2 == 0:
            raise ValueError(f"same-padding requires odd kernel extents, got {kh}x{kw}")
        ph, pw = kh // 2, kw // 2
    elif padding == "valid":
        if kh > h or kw > w:
            raise ValueError(f"kernel {kh}x{kw} larger than input {h}x{w}")
        ph = pw = 0
    else:
        raise ValueError(f"unknown padding {padding!r}")

    if ph or pw:
        xp = np.zeros((n, h + 2 * ph, w + 2 * pw, c))
        xp[:, ph:ph + h, pw:pw + w, :] = xb
    else:
        xp = xb

    cache_key = (id(x), kh, kw, padding)
    col = tape._col_cache.get(cache_key) if tape is not None else None
    if col is None:
        col = _im2col(xp, kh, kw)
        if tape is not None:
            tape._col_cache[cache_key] = col
    oh, ow = h + 2 * ph - kh + 1, w + 2 * pw - kw + 1
    kmat = kernels.data.reshape(kh * kw * c, co)
    y = col @ kmat
    y += bias.data
    y = y.reshape(n, oh, ow, co)

    out = Tensor(y[0] if squeeze else y,
                 requires_grad=x.requires_grad or kernels.requires_grad or bias.requires_grad)
    if tape is not None and out.requires_grad:

        def _bwd(g: np.ndarray) -> None:
            gb = np.ascontiguousarray(g[None] if squeeze else g)
            gcol = gb.reshape(n * oh * ow, co)
            if bias.requires_grad:
                _accumulate(bias, gcol.sum(axis=0))
            if kernels.requires_grad:
                _accumulate(kernels, (col.T @ gcol).reshape(kernels.data.shape))
            if x.requires_grad:
                # d/dx is the full correlation of dY with flipped kernels,
                # expressed as a second im2col + GEMM (no scatter loops)
                bh, bw = kh - 1 - ph, kw - 1 - pw
                if bh or bw:
                    gp = np.zeros((n, oh + 2 * bh, ow + 2 * bw, co))
                    gp[:, bh:bh + oh, bw:bw + ow, :] = gb
                else:
                    gp = gb
                wflip = kernels.data[::-1, ::-1].transpose(0, 1, 3, 2)
                gcol2 = _im2col(gp, kh, kw)
                dx = (gcol2 @ wflip.reshape(kh * kw * co, c)).reshape(n, h, w, c)
                _accumulate(x, dx[0] if squeeze else dx)

        tape.record(out, _bwd)
    return out


def maxpool2(x: Tensor, tape: Tape | None = None) -> Tensor:
    """2x2 max pooling; odd extents are first padded by edge replication.

    Backward routes the gradient to the argmax cell of each window
    (first cell in scan order on ties).
    """
    xb, squeeze = _as_batched(x.data)
    n, h, w, c = xb.shape
    h2, w2 = (h + 1) // 2, (w + 1) // 2
    padded = h % 2 or w % 2
    if padded:
        xq = np.empty((n, 2 * h2, 2 * w2, c))
        xq[:, :h, :w, :] = xb
        if h % 2:
            xq[:, h, :w, :] = xb[:, h - 1, :, :]
        if w % 2:
            xq[:, :h, w, :] = xb[:, :, w - 1, :]
        if h % 2 and w % 2:
            xq[:, h, w, :] = xb[:, h - 1, w - 1, :]
    else:
        xq = xb
    win = xq.reshape(n, h2, 2, w2, 2, c).transpose(0, 1, 3, 5, 2, 4).reshape(n, h2, w2, c, 4)
    idx = win.argmax(axis=4)
    y = np.take_along_axis(win, idx[..., None], axis=4)[..., 0]

    out = Tensor(y[0] if squeeze else y, requires_grad=x.requires_grad)
    if tape is not None and out.requires_grad:

        def _bwd(g: np.ndarray) -> None:
            gb = g[None] if squeeze else g
            dwin = np.zeros((n, h2, w2, c, 4))
            np.put_along_axis(dwin, idx[..., None], gb[..., None], axis=4)
            dxq = dwin.reshape(n, h2, w2, c, 2, 2).transpose(0, 1, 4, 2, 5, 3).reshape(
                n, 2 * h2, 2 * w2, c)
            if padded:
                dx = dxq[:, :h, :w, :].copy()
                if h % 2:
                    dx[:, h - 1, :, :] += dxq[:, h, :w, :]
                if w % 2:
                    dx[:, :, w - 1, :] += dxq[:, :h, w, :]
                if h % 2 and w % 2:
                    dx[:, h - 1, w - 1, :] += dxq[:, h, w, :]
            else:
                dx = dxq
            _accumulate(x, dx[0] if squeeze else dx)

        tape.record(out, _bwd)
    return out


def relu(x: Tensor, tape: Tape | None = None) -> Tensor:
    y = np.maximum(x.data, 0.0)
    out = Tensor(y, requires_grad=x.requires_grad)
    if tape is not None and out.requires_grad:
        mask = x.data > 0

        def _bwd(g: np.ndarray) -> None:
            _accumulate(x, g * mask)

        tape.record(out, _bwd)
    return out


def sigmoid(x: Tensor, tape: Tape | None = None) -> Tensor:
    """Numerically stable logistic; output clamped strictly inside (0,1)."""
    d = x.data
    y = np.empty_like(d)
    pos = d >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    ex = np.exp(d[~pos])
    y[~pos] = ex / (1.0 + ex)
    np.clip(y, np.finfo(np.float64).tiny, np.nextafter(1.0, 0.0), out=y)
    out = Tensor(y, requires_grad=x.requires_grad)
    if tape is not None and out.requires_grad:

        def _bwd(g: np.ndarray) -> None:
            _accumulate(x, g * y * (1.0 - y))

        tape.record(out, _bwd)
    return out


# ---------------------------------------------------------------------------
# bilinear resampling


def _lerp_axes(h: int, hh: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # corner-aligned source positions for target length hh
    if hh == 1:
        pos = np.zeros(1) if h == 1 else np.full(1, (h - 1) / 2.0)
    else:
        pos = np.arange(hh) * ((h - 1) / (hh - 1)) if h > 1 else np.zeros(hh)
    lo = np.floor(pos).astype(np.intp)
    lo = np.minimum(lo, max(h - 2, 0))
    frac = pos - lo
    return lo, np.minimum(lo + 1, h - 1), frac


def _bilinear(xb: np.ndarray, hh: int, ww: int) -> np.ndarray:
    # xb (N,h,w,C) -> (N,hh,ww,C), corner-aligned
    n, h, w, c = xb.shape
    r0, r1, fr = _lerp_axes(h, hh)
    c0, c1, fc = _lerp_axes(w, ww)
    top = xb[:, r0][:, :, c0] * (1 - fc)[None, None, :, None] + \
        xb[:, r0][:, :, c1] * fc[None, None, :, None]
    bot = xb[:, r1][:, :, c0] * (1 - fc)[None, None, :, None] + \
        xb[:, r1][:, :, c1] * fc[None, None, :, None]
    return top * (1 - fr)[None, :, None, None] + bot * fr[None, :, None, None]


def _bilinear_adjoint(g: np.ndarray, h: int, w: int) -> np.ndarray:
    # transpose of _bilinear: scatter target grads back to the source grid
    n, hh, ww, c = g.shape
    r0, r1, fr = _lerp_axes(h, hh)
    c0, c1, fc = _lerp_axes(w, ww)
    rows = np.zeros((n, h, ww, c))
    np.add.at(rows, (slice(None), r0), g * (1 - fr)[None, :, None, None])
    np.add.at(rows, (slice(None), r1), g * fr[None, :, None, None])
    dx = np.zeros((n, h, w, c))
    np.add.at(dx, (slice(None), slice(None), c0), rows * (1 - fc)[None, None, :, None])
    np.add.at(dx, (slice(None), slice(None), c1), rows * fc[None, None, :, None])
    return dx


def upsample_bilinear(x: Tensor, size: tuple[int, int], tape: Tape | None = None) -> Tensor:
    """Corner-aligned bilinear upsampling to (H, W); rejects downscaling."""
    xb, squeeze = _as_batched(x.data)
    n, h, w, c = xb.shape
    hh, ww = size
    if hh < h or ww < w:
        raise ValueError(f"upsample_bilinear: target {size} smaller than input ({h},{w})")
    if (hh, ww) == (h, w):
        y = xb
    else:
        y = _bilinear(xb, hh, ww)
    out = Tensor(y[0] if squeeze else y, requires_grad=x.requires_grad)
    if tape is not None and out.requires_grad:

        def _bwd(g: np.ndarray) -> None:
            gb = g[None] if squeeze else g
            dx = gb.copy() if (hh, ww) == (h, w) else _bilinear_adjoint(gb, h, w)
            _accumulate(x, dx[0] if squeeze else dx)

        tape.record(out, _bwd)
    return out


def upsample_conserving(x: Tensor, size: tuple[int, int], tape: Tape | None = None) -> Tensor:
    """Bilinear upsample rescaled so the total sum is preserved.

    y = u(x) * sum(x)/sum(u(x)).  Differentiable (used when the
    quality branch is allowed to backpropagate into the regressor).
    """
    xb, squeeze = _as_batched(x.data)
    n, h, w, c = xb.shape
    hh, ww = size
    if hh < h or ww < w:
        raise ValueError(f"upsample_conserving: target {size} smaller than input ({h},{w})")
    u = xb if (hh, ww) == (h, w) else _bilinear(xb, hh, ww)
    s_in = xb.sum(axis=(1, 2, 3))
    s_up = u.sum(axis=(1, 2, 3))
    scale = np.where(s_up != 0.0, s_in / np.where(s_up == 0.0, 1.0, s_up), 0.0)
    y = u * scale[:, None, None, None]

    out = Tensor(y[0] if squeeze else y, requires_grad=x.requires_grad)
    if tape is not None and out.requires_grad:

        def _bwd(g: np.ndarray) -> None:
            gb = g[None] if squeeze else g
            # dL/du = g*scale ; dL/ds_in = <g,u>/s_up ; dL/ds_up = -<g,u>*s_in/s_up^2
            gu = (gb * u).sum(axis=(1, 2, 3))
            inv = np.where(s_up != 0.0, 1.0 / np.where(s_up == 0.0, 1.0, s_up), 0.0)
            d_qty = gb * scale[:, None, None, None]
            dvia_up = d_qty + (-gu * s_in * inv * inv)[:, None, None, None] * np.ones_like(u)
            dx = dvia_up.copy() if (hh, ww) == (h, w) else _bilinear_adjoint(dvia_up, h, w)
            dx += (gu * inv)[:, None, None, None]
            _accumulate(x, dx[0] if squeeze else dx)

        tape.record(out, _bwd)
    return out


# ---------------------------------------------------------------------------
# elementwise / reduction


def _binary_shapes(a: Tensor, b: Tensor, opname: str) -> None:
    if a.data.shape != b.data.shape:
        raise ValueError(f"{opname}: shape {a.data.shape} != {b.data.shape}")


def add(a: Tensor, b: Tensor, tape: Tape | None = None) -> Tensor:
    _binary_shapes(a, b, "add")
    out = Tensor(a.data + b.data, requires_grad=a.requires_grad or b.requires_grad)
    if tape is not None and out.requires_grad:

        def _bwd(g: np.ndarray) -> None:
            if a.requires_grad:
                _accumulate(a, g, fresh=False)
            if b.requires_grad:
                _accumulate(b, g, fresh=False)

        tape.record(out, _bwd)
    return out


def sub(a: Tensor, b: Tensor, tape: Tape | None = None) -> Tensor:
    _binary_shapes(a, b, "sub")
    out = Tensor(a.data - b.data, requires_grad=a.requires_grad or b.requires_grad)
    if tape is not None and out.requires_grad:

        def _bwd(g: np.ndarray) -> None:
            if a.requires_grad:
                _accumulate(a, g, fresh=False)
            if b.requires_grad:
                _accumulate(b, -g)

        tape.record(out, _bwd)
    return out


def mul(a: Tensor, b: Tensor, tape: Tape | None = None) -> Tensor:
    """Hadamard product."""
    _binary_shapes(a, b, "mul")
    out = Tensor(a.data * b.data, requires_grad=a.requires_grad or b.requires_grad)
    if tape is not None and out.requires_grad:

        def _bwd(g: np.ndarray) -> None:
            if a.requires_grad:
                _accumulate(a, g * b.data)
            if b.requires_grad:
                _accumulate(b, g * a.data)

        tape.record(out, _bwd)
    return out


def scale(x: Tensor, s: float, tape: Tape | None = None) -> Tensor:
    out = Tensor(x.data * s, requires_grad=x.requires_grad)
    if tape is not None and out.requires_grad:

        def _bwd(g: np.ndarray) -> None:
            _accumulate(x, g * s)

        tape.record(out, _bwd)
    return out


def tensor_sum(x: Tensor, tape: Tape | None = None) -> Tensor:
    out = Tensor(x.data.sum(), requires_grad=x.requires_grad)
    if tape is not None and out.requires_grad:

        def _bwd(g: np.ndarray) -> None:
            _accumulate(x, np.broadcast_to(g, x.data.shape).copy())

        tape.record(out, _bwd)
    return out


def sq_diff_sum(x: Tensor, target: Tensor, tape: Tape | None = None) -> Tensor:
    """sum((x - target)^2) as one fused node."""
    _binary_shapes(x, target, "sq_diff_sum")
    diff = x.data - target.data
    out = Tensor(np.dot(diff.ravel(), diff.ravel()),
                 requires_grad=x.requires_grad or target.requires_grad)
    if tape is not None and out.requires_grad:

        def _bwd(g: np.ndarray) -> None:
            d = (2.0 * float(g)) * diff
            if x.requires_grad:
                _accumulate(x, d)
            if target.requires_grad:
                _accumulate(target, -d)

        tape.record(out, _bwd)
    return out


# ---------------------------------------------------------------------------
# parameter initialisation


def he_kernel(rng: np.random.Generator, kh: int, kw: int, c_in: int, c_out: int) -> Tensor:
    """Zero-mean Gaussian kernels with std sqrt(2/fan_in); grads enabled."""
    std = np.sqrt(2.0 / (kh * kw * c_in))
    return Tensor(rng.normal(0.0, std, size=(kh, kw, c_in, c_out)), requires_grad=True)


def zero_bias(c_out: int) -> Tensor:
    return Tensor(np.zeros(c_out), requires_grad=True)
