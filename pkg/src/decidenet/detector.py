"""Pluggable detection providers.

The synthetic detector stands in for a real head detector: it keeps
each ground-truth head with a probability that decays with the local
crowd density and assigns a confidence that decays the same way, so
dense regions get both missed detections and low scores (the failure
mode the attention network is meant to exploit).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .density import DensityMap, Detection, DetectionSet, as_points

RECALL_FLOOR = 0.02
DENSITY_WINDOW = 33  # ~2x the kernel window; neighborhood crowding gauge


@dataclass(frozen=True)
class DetectorProfile:
    """Calibration of the synthetic detector.

    Per-head recall and score are clamp(base - decay * rho, 0.02, 1)
    where rho is the local ground-truth density around the head
    (own kernel mass excluded, so an isolated head sees rho ~ 0).
    """

    base_recall: float = 0.95
    recall_decay: float = 0.05
    base_score: float = 0.92
    score_decay: float = 0.08
    position_jitter_sigma: float = 0.5
    box_size: tuple[float, float] = (10.0, 10.0)
    score_noise_sigma: float = 0.02
    false_positive_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("base_recall", "base_score"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0,1]")
        for name in ("recall_decay", "score_decay", "position_jitter_sigma",
                     "score_noise_sigma", "false_positive_rate"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.box_size[0] <= 0 or self.box_size[1] <= 0:
            raise ValueError(f"box_size must be positive, got {self.box_size}")


def _clamp01(v: float) -> float:
    return min(1.0, max(0.0, v))


def local_density(gt_map: DensityMap, x: float, y: float,
                  window: int = DENSITY_WINDOW) -> float:
    """Ground-truth mass in a window around (x, y), self-mass excluded."""
    h, w = gt_map.shape
    r = window // 2
    ci = int(np.floor(x + 0.5))
    ri = int(np.floor(y + 0.5))
    r0, r1 = max(0, ri - r), min(h, ri + r + 1)
    c0, c1 = max(0, ci - r), min(w, ci + r + 1)
    total = float(gt_map.values[r0:r1, c0:c1].sum())
    return max(0.0, total - 1.0)


def simulate_detections(points, gt_map: DensityMap, profile: DetectorProfile,
                        rng: np.random.Generator | None = None) -> DetectionSet:
    """Degraded detections for the given heads; deterministic per seed.

    Each head survives with probability clamp(base_recall -
    recall_decay*rho, 0.02, 1); survivors get a jittered center (clamped
    inside the image), the profile's fixed box size and a score of
    clamp(base_score - score_decay*rho, 0.02, 1) plus Gaussian noise.
    With false_positive_rate > 0, spurious boxes are added at random
    positions with low scores.
    """
    p = as_points(points)
    if rng is None:
        rng = np.random.default_rng(profile.seed)
    h, w = gt_map.shape
    bw, bh = profile.box_size
    dets: DetectionSet = []
    for x, y in p:
        rho = local_density(gt_map, x, y)
        recall = min(1.0, max(RECALL_FLOOR, profile.base_recall - profile.recall_decay * rho))
        if rng.random() >= recall:
            continue
        jx, jy = rng.normal(0.0, profile.position_jitter_sigma, size=2) \
            if profile.position_jitter_sigma > 0 else (0.0, 0.0)
        cx = min(w - 1.0, max(0.0, x + jx))
        cy = min(h - 1.0, max(0.0, y + jy))
        score = min(1.0, max(RECALL_FLOOR, profile.base_score - profile.score_decay * rho))
        if profile.score_noise_sigma > 0:
            score = _clamp01(score + rng.normal(0.0, profile.score_noise_sigma))
        dets.append(Detection(cx, cy, bw, bh, score))
    if profile.false_positive_rate > 0:
        n_fp = rng.poisson(profile.false_positive_rate)
        for _ in range(n_fp):
            cx = rng.uniform(0, w - 1)
            cy = rng.uniform(0, h - 1)
            score = _clamp01(rng.uniform(RECALL_FLOOR, 0.4))
            dets.append(Detection(cx, cy, bw, bh, score))
    return dets


def save_detections(path: str | Path, dets: DetectionSet) -> None:
    """One detection per line: "cx cy w h score"; '#' starts a comment."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write("# cx cy w h score\n")
        for d in dets:
            fh.write(f"{d.cx!r} {d.cy!r} {d.width!r} {d.height!r} {d.score!r}\n")


def load_detections(path: str | Path) -> DetectionSet:
    """Parse a detections file, rejecting malformed lines by number."""
    path = Path(path)
    dets: DetectionSet = []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            parts = text.split()
            if len(parts) != 5:
                raise ValueError(f"{path}:{lineno}: expected 5 fields, got {len(parts)}")
            try:
                cx, cy, bw, bh, score = (float(v) for v in parts)
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric field") from None
            try:
                dets.append(Detection(cx, cy, bw, bh, score))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    return dets
