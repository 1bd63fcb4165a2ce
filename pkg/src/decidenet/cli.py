"""Command-line front door: synth, train, eval, ablate, trends.

Exit codes: 0 success, 2 configuration/usage errors, 1 runtime
failures.  Every command writes an effective-config dump (config.txt)
alongside its outputs.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .config import SCHEMA, ConfigError, RunConfig, build_config, write_effective_config
from .evaluation import (EvalReport, VARIANTS, evaluate_scenes, score_trend,
                         write_ablation_csv, write_score_trend_csv, write_tercile_csv)
from .scenes import load_split, synthesize_dataset
from .training import (TrainResult, quanet_from_checkpoint, regnet_from_checkpoint,
                       train, train_ablation)

METRICS_HEADER = "step,lr,loss_reg,loss_qua,val_mae,val_mse"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="decidenet",
        description="Attention-guided fusion of detection- and regression-based "
                    "crowd density estimation on synthetic scenes.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (
            ("synth", "generate train/val/test synthetic scenes with detections"),
            ("train", "train RegNet + QualityNet; writes checkpoint and metrics"),
            ("eval", "evaluate a checkpoint over the test split"),
            ("ablate", "train and evaluate all five variants under one seed"),
            ("trends", "emit detector-score and error-trend CSVs and figures")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", default=None, metavar="PATH",
                       help="key=value configuration file")
        for key, (_, default, helpstr) in SCHEMA.items():
            p.add_argument(f"--{key}", default=None, metavar="V",
                           help=f"{helpstr} (default {default!r})")
    return parser


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    overrides = {}
    for key in SCHEMA:
        raw = getattr(args, key)
        if raw is not None:
            overrides[key] = raw
    return build_config(args.config, overrides)


def _out_dir(cfg: RunConfig) -> Path:
    out = cfg["out_dir"]
    if not out:
        raise ConfigError("out_dir is required")
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _data_dir(cfg: RunConfig) -> Path:
    data = cfg["data_dir"]
    if not data:
        raise ConfigError("data_dir is required")
    path = Path(data)
    if not path.exists():
        raise FileNotFoundError(f"dataset directory not found: {path}")
    return path


def _write_metrics(rows: list[dict], path: Path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(METRICS_HEADER + "\n")
        for r in rows:
            fh.write(f"{r['step']},{r['lr']!r},{_nanfmt(r['loss_reg'])},"
                     f"{_nanfmt(r['loss_qua'])},{r['val_mae']!r},{r['val_mse']!r}\n")


def _nanfmt(v) -> str:
    return repr(float(v))


def cmd_synth(cfg: RunConfig) -> int:
    out = _out_dir(cfg)
    sizes = {"train": cfg["n_train"], "val": cfg["n_val"], "test": cfg["n_test"]}
    synthesize_dataset(out, cfg.scene_spec(), cfg.detector_profile(),
                       cfg.kernel_spec(), sizes, cfg["seed"])
    write_effective_config(cfg, out / "config.txt")
    print(f"synth: wrote {sum(sizes.values())} scenes to {out}")
    return 0


def cmd_train(cfg: RunConfig) -> int:
    data = _data_dir(cfg)
    out = _out_dir(cfg)
    train_scenes = load_split(data, "train")
    val_scenes = load_split(data, "val")
    resume = load_checkpoint(cfg["checkpoint"]) if cfg["checkpoint"] else None
    result = train(cfg.train_config(), train_scenes, val_scenes, resume=resume)
    save_checkpoint(out / "checkpoint.dcn", result.checkpoint)
    _write_metrics(result.metrics, out / "metrics.csv")
    write_effective_config(cfg, out / "config.txt")
    print(f"train: best val MAE {result.best_val_mae:.4f} at "
          f"step {int(result.checkpoint['meta.step'])}; wrote {out / 'checkpoint.dcn'}")
    return 0


def _models_from_checkpoint(ck: dict) -> dict:
    return {
        "regnet": regnet_from_checkpoint(ck),
        "qualitynet": quanet_from_checkpoint(ck, "qualitynet"),
        "qualitynet_plain": quanet_from_checkpoint(ck, "qualitynet_plain"),
    }


def cmd_eval(cfg: RunConfig) -> int:
    data = _data_dir(cfg)
    out = _out_dir(cfg)
    if not cfg["checkpoint"]:
        raise ConfigError("checkpoint is required for eval")
    ck = load_checkpoint(cfg["checkpoint"])
    models = _models_from_checkpoint(ck)
    scenes = load_split(data, "test")
    downscale = int(ck.get("meta.qua_downscale", np.float64(cfg["qua_downscale"])))
    report = evaluate_scenes(scenes, models["regnet"], models["qualitynet"],
                             models["qualitynet_plain"], cfg.kernel_spec(),
                             cfg["score_default"], downscale)
    report.write_csv(out / "eval.csv")
    write_effective_config(cfg, out / "config.txt")
    for v in VARIANTS:
        vals = report.preds.get(v)
        if vals and not all(p != p for p in vals):
            print(f"eval: {v}: MAE {report.mae(v):.4f}  MSE {report.mse(v):.4f}")
    return 0


def _ablation_reports(result: TrainResult, scenes, cfg: RunConfig) -> EvalReport:
    """Merge per-variant-best evaluations into one report.

    reg_only/det_only/late_fusion come from the reg_only-best snapshot,
    each attention variant from its own best snapshot.
    """
    kernel = cfg.kernel_spec()
    downscale = cfg["qua_downscale"]
    ck_reg = result.variant_checkpoints.get("reg_only", result.checkpoint)
    base = evaluate_scenes(scenes, regnet_from_checkpoint(ck_reg), None, None,
                           kernel, cfg["score_default"], downscale)
    report = EvalReport(base.scene_ids, base.gt_counts)
    for v in ("reg_only", "det_only", "late_fusion"):
        report.preds[v] = base.preds[v]
    for variant, name in (("decidenet_quality", "quality"), ("decidenet_plain", "plain")):
        ck = result.variant_checkpoints.get(name)
        if ck is None:
            report.preds[variant] = [float("nan")] * len(base.scene_ids)
            continue
        prefix = "qualitynet" if name == "quality" else "qualitynet_plain"
        sub = evaluate_scenes(
            scenes, regnet_from_checkpoint(ck),
            quanet_from_checkpoint(ck, prefix) if name == "quality" else None,
            quanet_from_checkpoint(ck, prefix) if name == "plain" else None,
            kernel, cfg["score_default"], downscale)
        report.preds[variant] = sub.preds[variant]
    return report


def cmd_ablate(cfg: RunConfig) -> int:
    data = _data_dir(cfg)
    out = _out_dir(cfg)
    train_scenes = load_split(data, "train")
    val_scenes = load_split(data, "val")
    test_scenes = load_split(data, "test")
    result = train_ablation(cfg.train_config(), train_scenes, val_scenes)
    report = _ablation_reports(result, test_scenes, cfg)
    report.write_csv(out / "eval.csv")
    results = {v: (report.mae(v), report.mse(v)) for v in VARIANTS
               if not all(p != p for p in report.preds[v])}
    write_ablation_csv(results, out / "ablation.csv")
    save_checkpoint(out / "checkpoint.dcn", result.checkpoint)
    _write_metrics(result.metrics, out / "metrics.csv")
    write_effective_config(cfg, out / "config.txt")
    for v in VARIANTS:
        if v in results:
            print(f"ablate: {v}: MAE {results[v][0]:.4f}  MSE {results[v][1]:.4f}")
    return 0


def cmd_trends(cfg: RunConfig) -> int:
    from . import plots  # deferred: pulls in matplotlib

    data = _data_dir(cfg)
    out = _out_dir(cfg)
    if not cfg["checkpoint"]:
        raise ConfigError("checkpoint is required for trends")
    ck = load_checkpoint(cfg["checkpoint"])
    models = _models_from_checkpoint(ck)
    scenes = load_split(data, "test")
    downscale = int(ck.get("meta.qua_downscale", np.float64(cfg["qua_downscale"])))
    report = evaluate_scenes(scenes, models["regnet"], models["qualitynet"],
                             models["qualitynet_plain"], cfg.kernel_spec(),
                             cfg["score_default"], downscale)
    rows = score_trend(scenes, cfg["trend_bins"])
    write_score_trend_csv(rows, out / "score_trend.csv")
    write_tercile_csv(report, out / "tercile_errors.csv")
    report.write_csv(out / "eval.csv")
    plots.plot_score_trend(rows, out / "score_trend.svg")
    plots.plot_pred_scatter(report, out / "pred_vs_gt.svg")
    plots.plot_tercile_errors(report, out / "tercile_errors.svg")
    write_effective_config(cfg, out / "config.txt")
    print(f"trends: wrote score_trend/tercile CSVs and figures to {out}")
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "trends": cmd_trends,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _config_from_args(args)
    except ConfigError as exc:
        print(f"decidenet: config error: {exc}", file=sys.stderr)
        return 2
    try:
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"decidenet: config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001  (CLI boundary)
        print(f"decidenet: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
