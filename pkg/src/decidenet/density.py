"""Closed-form density-map math.

A density map is a non-negative (H, W) float64 grid whose sum is a
person count.  Ground-truth maps place one truncated, renormalised
Gaussian per annotated head; detection maps place the identical kernel
at detected-box centers (scores never scale the kernel).  Kernel mass
falling outside the grid is lost, so a head hugging the border
contributes less than one count; interior heads contribute exactly one.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

DMAP_MAGIC = b"DMAP1\n"


@dataclass(frozen=True)
class GaussianKernelSpec:
    """Truncated discrete Gaussian: std `sigma` px over an odd `window`."""

    sigma: float = 4.0
    window: int = 15
    normalized: bool = True

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")
        if self.window <= 0 or self.window % 2 == 0:
            raise ValueError(f"window must be odd and positive, got {self.window}")


@dataclass(frozen=True)
class Detection:
    """Head box: center (cx, cy), extents, detector confidence in [0,1]."""

    cx: float
    cy: float
    width: float
    height: float
    score: float

    def __post_init__(self):
        for name in ("cx", "cy", "width", "height", "score"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"detection box extents must be positive, got "
                             f"{self.width}x{self.height}")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"detection score {self.score} outside [0,1]")


DetectionSet = list[Detection]


class DensityMap:
    """Non-negative float64 grid; its sum is the crowd count."""

    __slots__ = ("values",)

    def __init__(self, values: np.ndarray):
        v = np.asarray(values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError(f"density map must be 2-D, got shape {v.shape}")
        if v.size and v.min() < 0:
            raise ValueError("density map has negative values")
        if not np.isfinite(v).all():
            raise ValueError("density map has non-finite values")
        self.values = v

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def count(self) -> float:
        return float(self.values.sum())

    def __eq__(self, other):
        return isinstance(other, DensityMap) and np.array_equal(self.values, other.values)


def count(m: DensityMap) -> float:
    """Total person count: the sum of all pixel values."""
    return m.count()


def as_points(points) -> np.ndarray:
    """Coerce to an (n, 2) float64 array of (x, y) pixel coordinates."""
    p = np.asarray(points, dtype=np.float64)
    if p.size == 0:
        return p.reshape(0, 2)
    if p.ndim != 2 or p.shape[1] != 2:
        raise ValueError(f"points must be (n, 2) (x, y) pairs, got shape {p.shape}")
    return p


def validate_points(points: np.ndarray, shape: tuple[int, int]) -> None:
    """Reject points outside [0, W-1] x [0, H-1]."""
    p = as_points(points)
    h, w = shape
    if p.size:
        bad = ((p[:, 0] < 0) | (p[:, 0] > w - 1) | (p[:, 1] < 0) | (p[:, 1] > h - 1))
        if bad.any():
            i = int(np.argmax(bad))
            raise ValueError(f"point {i} at ({p[i, 0]}, {p[i, 1]}) outside "
                             f"{w}x{h} image bounds")


def _stamp(grid: np.ndarray, x: float, y: float, kernel: GaussianKernelSpec) -> None:
    # sample the Gaussian at the window's pixel centers, renormalise the
    # in-window mass to 1, then clip to the grid (border mass is lost)
    h, w = grid.shape
    r = kernel.window // 2
    ci = int(np.floor(x + 0.5))
    ri = int(np.floor(y + 0.5))
    cols = np.arange(ci - r, ci + r + 1, dtype=np.float64)
    rows = np.arange(ri - r, ri + r + 1, dtype=np.float64)
    inv2s2 = 1.0 / (2.0 * kernel.sigma * kernel.sigma)
    gx = np.exp(-((cols - x) ** 2) * inv2s2)
    gy = np.exp(-((rows - y) ** 2) * inv2s2)
    g = gy[:, None] * gx[None, :]
    if kernel.normalized:
        g /= g.sum()
    else:
        g /= 2.0 * np.pi * kernel.sigma * kernel.sigma
    r0, r1 = max(0, ri - r), min(h, ri + r + 1)
    c0, c1 = max(0, ci - r), min(w, ci + r + 1)
    if r0 >= r1 or c0 >= c1:
        return
    grid[r0:r1, c0:c1] += g[r0 - (ri - r):r1 - (ri - r), c0 - (ci - r):c1 - (ci - r)]


def gt_density(points, shape: tuple[int, int], kernel: GaussianKernelSpec) -> DensityMap:
    """Ground-truth density: one kernel per annotated head point."""
    p = as_points(points)
    grid = np.zeros(shape)
    for x, y in p:
        _stamp(grid, x, y, kernel)
    return DensityMap(grid)


def det_density(dets: DetectionSet, shape: tuple[int, int],
                kernel: GaussianKernelSpec) -> DensityMap:
    """Detection density: the same kernel at box centers; scores ignored."""
    grid = np.zeros(shape)
    for d in dets:
        _stamp(grid, d.cx, d.cy, kernel)
    return DensityMap(grid)


def score_map(dets: DetectionSet, shape: tuple[int, int], default: float) -> np.ndarray:
    """Per-pixel detector confidence.

    Pixels inside at least one box hold the maximum score among the
    covering boxes; all remaining pixels hold `default`.
    """
    if not 0.0 <= default <= 1.0:
        raise ValueError(f"score map default {default} outside [0,1]")
    h, w = shape
    m = np.full((h, w), float(default))
    painted = np.zeros((h, w), dtype=bool)
    for d in dets:
        c0 = max(0, int(np.ceil(d.cx - d.width / 2.0)))
        c1 = min(w - 1, int(np.floor(d.cx + d.width / 2.0)))
        r0 = max(0, int(np.ceil(d.cy - d.height / 2.0)))
        r1 = min(h - 1, int(np.floor(d.cy + d.height / 2.0)))
        if c0 > c1 or r0 > r1:
            continue
        box = m[r0:r1 + 1, c0:c1 + 1]
        seen = painted[r0:r1 + 1, c0:c1 + 1]
        np.maximum(np.where(seen, box, d.score), d.score, out=box)
        seen[:] = True
    return m


def _axis_positions(n_src: int, n_dst: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if n_dst == 1:
        pos = np.array([0.0]) if n_src == 1 else np.array([(n_src - 1) / 2.0])
    elif n_src == 1:
        pos = np.zeros(n_dst)
    else:
        pos = np.arange(n_dst) * ((n_src - 1) / (n_dst - 1))
    lo = np.minimum(np.floor(pos).astype(np.intp), max(n_src - 2, 0))
    return lo, np.minimum(lo + 1, n_src - 1), pos - lo


def bilinear_resize(values: np.ndarray, target: tuple[int, int]) -> np.ndarray:
    """Corner-aligned bilinear resample of a 2-D grid (up or down)."""
    h, w = values.shape
    th, tw = target
    if (th, tw) == (h, w):
        return values.copy()
    r0, r1, fr = _axis_positions(h, th)
    c0, c1, fc = _axis_positions(w, tw)
    top = values[r0][:, c0] * (1 - fc) + values[r0][:, c1] * fc
    bot = values[r1][:, c0] * (1 - fc) + values[r1][:, c1] * fc
    return top * (1 - fr)[:, None] + bot * fr[:, None]


def resize_conserving(m: DensityMap, target: tuple[int, int]) -> DensityMap:
    """Bilinear resample rescaled globally so the count is preserved.

    A zero map stays zero.  If the sample grid misses all the mass
    (possible on extreme downscales), the count is spread uniformly.
    """
    out = bilinear_resize(m.values, target)
    total = m.values.sum()
    s = out.sum()
    if total > 0.0:
        if s > 0.0:
            out *= total / s
        else:
            out[:] = total / out.size
    return DensityMap(out)


def save_density(path: str | Path, m: DensityMap) -> None:
    """DMAP1 container: magic, ASCII "H W" header, raw little-endian f64."""
    h, w = m.shape
    with open(path, "wb") as fh:
        fh.write(DMAP_MAGIC)
        fh.write(f"{h} {w}\n".encode("ascii"))
        fh.write(m.values.astype("<f8", copy=False).tobytes())


def load_density(path: str | Path) -> DensityMap:
    path = Path(path)
    with open(path, "rb") as fh:
        if fh.read(len(DMAP_MAGIC)) != DMAP_MAGIC:
            raise ValueError(f"{path}: missing DMAP1 magic")
        header = fh.readline().decode("ascii").split()
        if len(header) != 2:
            raise ValueError(f"{path}: bad density header {header}")
        h, w = int(header[0]), int(header[1])
        raw = fh.read(h * w * 8)
        if len(raw) != h * w * 8:
            raise ValueError(f"{path}: truncated density values")
    return DensityMap(np.frombuffer(raw, dtype="<f8").reshape(h, w).copy())
