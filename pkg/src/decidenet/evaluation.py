"""Count metrics, the five-variant ablation grid and trend analyses.

MAE is the mean absolute count error.  MSE follows the root convention
of the crowd-counting literature (reported table magnitudes are only
consistent with root-mean-squared error); the unrooted form is
available behind a flag.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .density import GaussianKernelSpec
from .networks import QualityNetParams, RegNetParams
from .scenes import Scene
from .training import EvalScene, make_eval_scene, predict_counts

VARIANTS = ("reg_only", "det_only", "late_fusion", "decidenet_plain", "decidenet_quality")


def mae(preds: Sequence[float], gts: Sequence[float]) -> float:
    """Mean absolute count error."""
    p, g = _check_pair(preds, gts)
    return float(np.abs(p - g).mean())


def mse(preds: Sequence[float], gts: Sequence[float], rooted: bool = True) -> float:
    """Root-mean-squared count error (set rooted=False for the plain mean)."""
    p, g = _check_pair(preds, gts)
    m = float(((p - g) ** 2).mean())
    return float(np.sqrt(m)) if rooted else m


def _check_pair(preds, gts) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(preds, dtype=np.float64)
    g = np.asarray(gts, dtype=np.float64)
    if p.ndim != 1 or g.ndim != 1:
        raise ValueError("metric inputs must be 1-D sequences")
    if len(p) != len(g):
        raise ValueError(f"length mismatch: {len(p)} predictions vs {len(g)} truths")
    if len(p) == 0:
        raise ValueError("metrics need at least one scene")
    return p, g


# ---------------------------------------------------------------------------
# variant evaluation


def eval_threads() -> int:
    """Worker cap for per-scene evaluation (DECIDENET_THREADS overrides)."""
    env = os.environ.get("DECIDENET_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValueError(f"DECIDENET_THREADS={env!r} is not an integer") from None
    return max(1, os.cpu_count() or 1)


@dataclass
class EvalReport:
    """Per-scene counts per variant plus recomputable aggregates."""

    scene_ids: list[str]
    gt_counts: list[float]
    preds: dict[str, list[float]] = field(default_factory=dict)

    def mae(self, variant: str) -> float:
        return mae(self.preds[variant], self.gt_counts)

    def mse(self, variant: str, rooted: bool = True) -> float:
        return mse(self.preds[variant], self.gt_counts, rooted)

    def signed_errors(self, variant: str) -> np.ndarray:
        return np.asarray(self.preds[variant]) - np.asarray(self.gt_counts)

    def tercile_order(self) -> list[np.ndarray]:
        """Scene indices split into GT-count terciles (low, mid, high)."""
        order = np.argsort(np.asarray(self.gt_counts), kind="stable")
        return list(np.array_split(order, 3))

    def tercile_errors(self, variant: str) -> list[float]:
        """Mean signed error per density tercile, low to high."""
        errs = self.signed_errors(variant)
        return [float(errs[idx].mean()) if len(idx) else float("nan")
                for idx in self.tercile_order()]

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", encoding="ascii") as fh:
            fh.write("scene_id,gt_count," + ",".join(VARIANTS) + "\n")
            for i, sid in enumerate(self.scene_ids):
                cells = [sid, _fmt(self.gt_counts[i])]
                for v in VARIANTS:
                    vals = self.preds.get(v)
                    cells.append(_fmt(vals[i]) if vals is not None else "nan")
                fh.write(",".join(cells) + "\n")


def _fmt(v: float) -> str:
    return repr(float(v))


def evaluate_scenes(scenes: list[Scene], regnet: RegNetParams,
                    quanet_quality: QualityNetParams | None,
                    quanet_plain: QualityNetParams | None,
                    kernel: GaussianKernelSpec, score_default: float = 0.1,
                    downscale: int = 1) -> EvalReport:
    """All five variants over frozen parameters, scenes in parallel.

    late_fusion is the exact arithmetic mean of the reg_only and
    det_only predictions (equal to counting the averaged maps, by
    linearity of the count).  Variants whose attention net is missing
    get NaN predictions.
    """
    quanets = {}
    if quanet_quality is not None:
        quanets["decidenet_quality"] = quanet_quality
    if quanet_plain is not None:
        quanets["decidenet_plain"] = quanet_plain

    def one(scene: Scene) -> tuple[str, float, dict[str, float]]:
        ev = make_eval_scene(scene, kernel, score_default, downscale)
        preds = predict_counts(ev, regnet, quanets, downscale)
        preds["late_fusion"] = 0.5 * (preds["reg_only"] + preds["det_only"])
        return ev.scene_id, ev.gt_count, preds

    workers = min(eval_threads(), max(1, len(scenes)))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(one, scenes))
    else:
        rows = [one(s) for s in scenes]

    report = EvalReport([r[0] for r in rows], [r[1] for r in rows])
    for v in VARIANTS:
        report.preds[v] = [r[2].get(v, float("nan")) for r in rows]
    return report


def evaluate_variant(variant: str, scenes: list[Scene], checkpoint_models: dict,
                     kernel: GaussianKernelSpec, score_default: float = 0.1,
                     downscale: int = 1) -> list[float]:
    """Per-scene predicted counts for a single named variant.

    checkpoint_models holds "regnet" and optionally "qualitynet" /
    "qualitynet_plain" parameter objects; learned variants reject a
    missing model.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    regnet = checkpoint_models.get("regnet")
    if variant != "det_only" and regnet is None:
        raise ValueError(f"variant {variant} requires regnet parameters")
    needed = None
    if variant == "decidenet_quality":
        needed = checkpoint_models.get("qualitynet")
    elif variant == "decidenet_plain":
        needed = checkpoint_models.get("qualitynet_plain")
    if variant.startswith("decidenet") and needed is None:
        raise ValueError(f"variant {variant} requires its attention parameters "
                         f"in the checkpoint")
    report = evaluate_scenes(
        scenes, regnet if regnet is not None else RegNetParams.zeros(),
        needed if variant == "decidenet_quality" else None,
        needed if variant == "decidenet_plain" else None,
        kernel, score_default, downscale)
    return report.preds[variant]


# ---------------------------------------------------------------------------
# trend analyses


def score_trend(scenes: list[Scene], n_bins: int = 8) -> list[dict]:
    """Median detection score per GT-count bin (equal-population bins).

    Scenes are sorted by ground-truth count and split into n_bins
    groups; each row pools every detection score in its group.
    """
    if not scenes:
        return []
    counts = np.array([len(s.points) for s in scenes])
    order = np.argsort(counts, kind="stable")
    rows = []
    for b, idx in enumerate(np.array_split(order, n_bins)):
        if not len(idx):
            continue
        scores = [d.score for i in idx for d in (scenes[i].detections or [])]
        rows.append({
            "bin": b,
            "count_min": int(counts[idx].min()),
            "count_max": int(counts[idx].max()),
            "n_scenes": int(len(idx)),
            "n_detections": len(scores),
            "median_score": float(np.median(scores)) if scores else float("nan"),
        })
    return rows


def write_score_trend_csv(rows: list[dict], path: str | Path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write("bin,count_min,count_max,n_scenes,n_detections,median_score\n")
        for r in rows:
            fh.write(f"{r['bin']},{r['count_min']},{r['count_max']},{r['n_scenes']},"
                     f"{r['n_detections']},{_fmt(r['median_score'])}\n")


def write_tercile_csv(report: EvalReport, path: str | Path,
                      variants: Sequence[str] = VARIANTS) -> None:
    """Mean signed count error per GT-count tercile per variant."""
    terciles = report.tercile_order()
    with open(path, "w", encoding="ascii") as fh:
        fh.write("variant,tercile,n_scenes,mean_signed_error\n")
        for v in variants:
            if v not in report.preds:
                continue
            errs = report.signed_errors(v)
            for t, idx in enumerate(terciles):
                val = float(errs[idx].mean()) if len(idx) else float("nan")
                fh.write(f"{v},{t},{len(idx)},{_fmt(val)}\n")


def write_ablation_csv(results: dict[str, tuple[float, float]], path: str | Path) -> None:
    """Table rows "variant,mae,mse" in the canonical variant order."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write("variant,mae,mse\n")
        for v in VARIANTS:
            if v in results:
                m, s = results[v]
                fh.write(f"{v},{_fmt(m)},{_fmt(s)}\n")
