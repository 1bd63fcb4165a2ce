"""Figure rendering for the trend reports.

All figures are written as standalone SVG (vector) files.  Matplotlib
is pinned to the Agg backend and a fixed hash salt so identical inputs
produce identical bytes.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "decidenet"

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .evaluation import EvalReport, VARIANTS  # noqa: E402

_COLORS = {
    "reg_only": "tab:blue",
    "det_only": "tab:green",
    "late_fusion": "tab:purple",
    "decidenet_plain": "tab:orange",
    "decidenet_quality": "tab:cyan",
}


def _save(fig, path: str | Path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_score_trend(rows: list[dict], path: str | Path) -> None:
    """Median detection score per GT-count bin (detector reliability)."""
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    xs = [0.5 * (r["count_min"] + r["count_max"]) for r in rows]
    ys = [r["median_score"] for r in rows]
    ax.plot(xs, ys, marker="o", color="tab:red")
    ax.set_xlabel("ground-truth count (bin center)")
    ax.set_ylabel("median detection score")
    ax.set_ylim(0.0, 1.0)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    _save(fig, path)


def plot_pred_scatter(report: EvalReport, path: str | Path) -> None:
    """Predicted vs true counts, one marker set per variant."""
    fig, ax = plt.subplots(figsize=(5.0, 5.0))
    gts = report.gt_counts
    lim = max(max(gts, default=1.0), 1.0)
    for v in VARIANTS:
        preds = report.preds.get(v)
        if preds is None or all(p != p for p in preds):  # all-NaN column
            continue
        ax.scatter(gts, preds, s=9, alpha=0.55, label=v, color=_COLORS.get(v))
        lim = max(lim, max((p for p in preds if p == p), default=1.0))
    ax.plot([0, lim], [0, lim], "k--", linewidth=0.8)
    ax.set_xlabel("ground-truth count")
    ax.set_ylabel("predicted count")
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, path)


def plot_tercile_errors(report: EvalReport, path: str | Path) -> None:
    """Mean signed error per GT-count tercile, grouped by variant."""
    fig, ax = plt.subplots(figsize=(5.6, 3.4))
    labels = ["low", "mid", "high"]
    present = [v for v in VARIANTS if v in report.preds
               and not all(p != p for p in report.preds[v])]
    width = 0.8 / max(len(present), 1)
    for i, v in enumerate(present):
        errs = report.tercile_errors(v)
        xs = [t + i * width for t in range(3)]
        ax.bar(xs, errs, width=width, label=v, color=_COLORS.get(v))
    ax.axhline(0.0, color="k", linewidth=0.8)
    ax.set_xticks([t + 0.4 - width / 2 for t in range(3)])
    ax.set_xticklabels(labels)
    ax.set_xlabel("ground-truth count tercile")
    ax.set_ylabel("mean signed error (persons)")
    ax.legend(fontsize=7)
    fig.tight_layout()
    _save(fig, path)
