"""Run configuration: key=value file, command-line overrides, schema.

Every key is validated against the schema below; unknown keys are
rejected.  Each command writes the effective configuration next to its
outputs so a run can be reproduced from that dump alone.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .density import GaussianKernelSpec
from .detector import DetectorProfile
from .scenes import SceneSpec
from .training import TrainConfig


class ConfigError(ValueError):
    pass


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# key -> (type converter, default, help)
SCHEMA: dict[str, tuple] = {
    "seed": (int, 0, "master seed for synthesis and training"),
    "data_dir": (str, "", "dataset directory (synth output / train input)"),
    "out_dir": (str, "", "output directory for the command"),
    "checkpoint": (str, "", "checkpoint path (eval/trends input, train resume)"),
    # scene generation
    "scene_height": (int, 96, "scene height, divisible by 3"),
    "scene_width": (int, 128, "scene width, divisible by 4"),
    "count_min": (int, 0, "minimum heads per scene"),
    "count_max": (int, 60, "maximum heads per scene"),
    "layout": (str, "gradient", "head layout: uniform | gradient | clustered"),
    "head_radius": (float, 3.0, "rendered head disc radius (px)"),
    "texture_seed": (int, 0, "background texture seed"),
    "n_train": (int, 200, "training scenes to synthesize"),
    "n_val": (int, 40, "validation scenes to synthesize"),
    "n_test": (int, 100, "test scenes to synthesize"),
    # density kernel / score map
    "sigma": (float, 4.0, "Gaussian kernel std (px)"),
    "kernel_window": (int, 15, "Gaussian kernel window (odd px)"),
    "score_default": (float, 0.1, "score-map value outside detection boxes"),
    # synthetic detector
    "det_base_recall": (float, 0.95, "detector recall at zero local density"),
    "det_recall_decay": (float, 0.05, "recall drop per unit local density"),
    "det_base_score": (float, 0.92, "detection score at zero local density"),
    "det_score_decay": (float, 0.08, "score drop per unit local density"),
    "det_jitter": (float, 0.5, "detection center jitter std (px)"),
    "det_box_w": (float, 10.0, "fixed detection box width (px)"),
    "det_box_h": (float, 10.0, "fixed detection box height (px)"),
    "det_score_noise": (float, 0.02, "score noise std"),
    "det_fp_rate": (float, 0.0, "mean false positives per scene"),
    # training
    "lambda": (float, 1.0, "quality-loss regularizer weight"),
    "lr0": (float, 0.005, "initial learning rate"),
    "lr_halving_steps": (int, 10_000, "halve the learning rate every N steps"),
    "total_steps": (int, 40_000, "training steps"),
    "eval_interval": (int, 500, "validation cadence (steps)"),
    "flip_prob": (float, 0.5, "per-axis flip probability"),
    "noise_prob": (float, 0.5, "pixel-noise probability"),
    "noise_lo": (float, -5.0, "uniform pixel noise lower bound (0-255 scale)"),
    "noise_hi": (float, 5.0, "uniform pixel noise upper bound"),
    "qua_through_reg": (_bool, False, "let the quality loss update RegNet too"),
    "qua_downscale": (int, 1, "attention-map downscale factor (1 or 2)"),
    # reports
    "trend_bins": (int, 8, "equal-population GT-count bins for score trends"),
}


@dataclass(frozen=True)
class RunConfig:
    """Validated flat configuration; see SCHEMA for the key set."""

    values: dict

    def __getitem__(self, key: str):
        return self.values[key]

    def kernel_spec(self) -> GaussianKernelSpec:
        return GaussianKernelSpec(sigma=self["sigma"], window=self["kernel_window"])

    def detector_profile(self) -> DetectorProfile:
        return DetectorProfile(
            base_recall=self["det_base_recall"],
            recall_decay=self["det_recall_decay"],
            base_score=self["det_base_score"],
            score_decay=self["det_score_decay"],
            position_jitter_sigma=self["det_jitter"],
            box_size=(self["det_box_w"], self["det_box_h"]),
            score_noise_sigma=self["det_score_noise"],
            false_positive_rate=self["det_fp_rate"],
            seed=self["seed"],
        )

    def scene_spec(self) -> SceneSpec:
        return SceneSpec(
            height=self["scene_height"], width=self["scene_width"],
            count_min=self["count_min"], count_max=self["count_max"],
            layout=self["layout"], head_radius=self["head_radius"],
            texture_seed=self["texture_seed"],
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            lam=self["lambda"], lr0=self["lr0"],
            lr_halving_steps=self["lr_halving_steps"],
            total_steps=self["total_steps"], eval_interval=self["eval_interval"],
            flip_prob=self["flip_prob"], noise_prob=self["noise_prob"],
            noise_range=(self["noise_lo"], self["noise_hi"]),
            seed=self["seed"], qua_through_reg=self["qua_through_reg"],
            qua_downscale=self["qua_downscale"], kernel=self.kernel_spec(),
            score_default=self["score_default"],
        )


def _convert(key: str, raw: str):
    if key not in SCHEMA:
        raise ConfigError(f"unknown configuration key {key!r}")
    conv = SCHEMA[key][0]
    try:
        return conv(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {key}: {exc}") from None


def parse_config_file(path: str | Path) -> dict:
    """key=value lines; '#' comments and blank lines ignored."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    values = {}
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            key, raw = (part.strip() for part in text.split("=", 1))
            values[key] = _convert(key, raw)
    return values


def build_config(config_file: str | None = None,
                 overrides: dict[str, str] | None = None) -> RunConfig:
    """Defaults, then the config file, then command-line overrides."""
    values = {k: spec[1] for k, spec in SCHEMA.items()}
    if config_file:
        values.update(parse_config_file(config_file))
    for key, raw in (overrides or {}).items():
        values[key] = _convert(key, raw) if isinstance(raw, str) else raw
    try:
        cfg = RunConfig(values)
        cfg.kernel_spec()
        cfg.detector_profile()
        cfg.scene_spec()
        cfg.train_config()
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def write_effective_config(cfg: RunConfig, path: str | Path) -> None:
    """Sorted key=value dump; rerunning from it reproduces the command."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write("# effective configuration\n")
        for key in sorted(SCHEMA):
            v = cfg[key]
            if isinstance(v, bool):
                text = "true" if v else "false"
            elif isinstance(v, float):
                text = repr(v)
            else:
                text = str(v)
            fh.write(f"{key}={text}\n")
