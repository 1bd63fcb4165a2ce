"""Losses, data pipeline and the alternating training schedule.

Each training step runs two isolated updates: (a) the regression loss
updates RegNet only, (b) the quality-aware loss updates QualityNet(s)
only, with the regression map recomputed post-update and detached.  An
optional config flag lets the quality loss reach RegNet through the
blend (experimentation only; the detached reading is the default).

Scenes are tiled into a 4x3 grid of patches; per-patch ground-truth /
detection densities and score maps are crops of the scene-level maps,
so per-patch counts sum exactly to the scene-level count.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from . import autodiff as ad
from .autodiff import Tape, Tensor, backward, sgd_step
from .density import (DensityMap, Detection, DetectionSet, GaussianKernelSpec,
                      bilinear_resize, det_density, gt_density, resize_conserving,
                      score_map)
from .networks import (QualityNetParams, RegNetParams, blend_on_tape, qualitynet_apply,
                       regnet_forward, stack_quality_input)
from .scenes import PATCH_COLS, PATCH_ROWS, Scene


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    """Optimisation and data-pipeline settings."""

    lam: float = 1.0                     # quality-loss regulariser weight
    lr0: float = 0.005
    lr_halving_steps: int = 10_000
    total_steps: int = 40_000
    patch_grid: tuple[int, int] = (PATCH_COLS, PATCH_ROWS)
    flip_prob: float = 0.5
    noise_prob: float = 0.5
    noise_range: tuple[float, float] = (-5.0, 5.0)
    seed: int = 0
    eval_interval: int = 500
    qua_through_reg: bool = False
    qua_downscale: int = 1               # K at patch/qua_downscale resolution
    kernel: GaussianKernelSpec = field(default_factory=GaussianKernelSpec)
    score_default: float = 0.1

    def __post_init__(self):
        if self.lr0 <= 0:
            raise ValueError("lr0 must be positive")
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        for name in ("flip_prob", "noise_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be in [0,1]")
        if self.lr_halving_steps <= 0 or self.total_steps < 0 or self.eval_interval <= 0:
            raise ValueError("step counts must be positive")
        if self.qua_downscale not in (1, 2):
            raise ValueError("qua_downscale must be 1 or 2")
        if not 0.0 <= self.score_default <= 1.0:
            raise ValueError("score_default must be in [0,1]")


def learning_rate(config: TrainConfig, step: int) -> float:
    """lr0 halved once per lr_halving_steps steps."""
    return config.lr0 * 0.5 ** (step // config.lr_halving_steps)


# ---------------------------------------------------------------------------
# patches


@dataclass
class PatchSample:
    """One tile of a scene with its derived supervision maps."""

    pixels: np.ndarray          # (ph, pw, 3), 0..255 scale
    points: np.ndarray          # (n, 2) patch-local
    detections: DetectionSet    # patch-local centers
    d_gt: np.ndarray            # (ph, pw)
    d_det: np.ndarray           # (ph, pw)
    s_det: np.ndarray           # (ph, pw)
    d_gt_low: np.ndarray        # (ph//4, pw//4), count-conserving


def crop_patches(scene: Scene, kernel: GaussianKernelSpec,
                 score_default: float = 0.1,
                 grid: tuple[int, int] = (PATCH_COLS, PATCH_ROWS)) -> list[PatchSample]:
    """Tile a scene into grid cols x rows non-overlapping patches.

    Supervision maps are crops of the scene-level maps; points and
    detections go to the unique containing patch (by center).
    """
    cols, rows = grid
    h, w = scene.shape
    if h % rows or w % cols:
        raise ValueError(f"scene {h}x{w} not divisible by grid {cols}x{rows}")
    ph, pw = h // rows, w // cols
    if ph % 4 or pw % 4:
        raise ValueError(f"patch {ph}x{pw} not divisible by the network's 1/4 scale")
    dets = scene.detections or []
    gt_map = gt_density(scene.points, (h, w), kernel).values
    det_map = det_density(dets, (h, w), kernel).values
    s_map = score_map(dets, (h, w), score_default)

    patches = []
    for r in range(rows):
        for c in range(cols):
            y0, x0 = r * ph, c * pw
            sel = ((scene.points[:, 0] >= x0) & (scene.points[:, 0] < x0 + pw)
                   & (scene.points[:, 1] >= y0) & (scene.points[:, 1] < y0 + ph)) \
                if len(scene.points) else np.zeros(0, dtype=bool)
            local_pts = scene.points[sel] - [x0, y0] if len(scene.points) else scene.points
            local_dets = [Detection(d.cx - x0, d.cy - y0, d.width, d.height, d.score)
                          for d in dets
                          if x0 <= d.cx < x0 + pw and y0 <= d.cy < y0 + ph]
            d_gt = gt_map[y0:y0 + ph, x0:x0 + pw].copy()
            patches.append(PatchSample(
                pixels=scene.pixels[y0:y0 + ph, x0:x0 + pw].astype(np.float64),
                points=local_pts,
                detections=local_dets,
                d_gt=d_gt,
                d_det=det_map[y0:y0 + ph, x0:x0 + pw].copy(),
                s_det=s_map[y0:y0 + ph, x0:x0 + pw].copy(),
                d_gt_low=resize_conserving(DensityMap(d_gt), (ph // 4, pw // 4)).values,
            ))
    return patches


def augment(sample: PatchSample, rng: np.random.Generator,
            flip_prob: float = 0.5, noise_prob: float = 0.5,
            noise_range: tuple[float, float] = (-5.0, 5.0)) -> PatchSample:
    """Joint flips of pixels/points/detections/maps plus pixel noise.

    Horizontal and vertical flips are drawn independently; uniform
    noise on the 0-255 scale is added per pixel with probability
    noise_prob and the result clamped to [0, 255].  The patch count is
    invariant (maps are only permuted).
    """
    ph, pw = sample.pixels.shape[:2]
    flip_h = rng.random() < flip_prob
    flip_v = rng.random() < flip_prob
    add_noise = rng.random() < noise_prob

    pixels = sample.pixels
    points = sample.points
    dets = sample.detections
    d_gt, d_det, s_det, d_low = sample.d_gt, sample.d_det, sample.s_det, sample.d_gt_low
    if flip_h:
        pixels = pixels[:, ::-1]
        d_gt, d_det, s_det, d_low = (m[:, ::-1] for m in (d_gt, d_det, s_det, d_low))
        points = np.column_stack([pw - 1 - points[:, 0], points[:, 1]]) \
            if len(points) else points
        dets = [Detection(pw - 1 - d.cx, d.cy, d.width, d.height, d.score) for d in dets]
    if flip_v:
        pixels = pixels[::-1]
        d_gt, d_det, s_det, d_low = (m[::-1] for m in (d_gt, d_det, s_det, d_low))
        points = np.column_stack([points[:, 0], ph - 1 - points[:, 1]]) \
            if len(points) else points
        dets = [Detection(d.cx, ph - 1 - d.cy, d.width, d.height, d.score) for d in dets]
    if add_noise:
        pixels = np.clip(pixels + rng.uniform(*noise_range, size=pixels.shape), 0.0, 255.0)
    elif flip_h or flip_v:
        pixels = np.ascontiguousarray(pixels)
    return PatchSample(pixels, points, dets,
                       np.ascontiguousarray(d_gt), np.ascontiguousarray(d_det),
                       np.ascontiguousarray(s_det), np.ascontiguousarray(d_low))


# Pixels are normalised to [0, 1/3] rather than [0, 1]: the quadratic
# loss curvature at the regression head grows with activation energy,
# and at the fixed 0.005 learning rate full-scale inputs push the head
# past its stability bound (bias oscillation kills the output ReLU).
PIXEL_NORM = 765.0


def build_batch(samples: Sequence[PatchSample], downscale: int = 1) -> dict:
    """Stack patches into batched arrays for one training step."""
    x = np.stack([s.pixels for s in samples]) / PIXEL_NORM
    gt_low = np.stack([s.d_gt_low for s in samples])[..., None]
    if downscale == 1:
        d_det = np.stack([s.d_det for s in samples])
        s_det = np.stack([s.s_det for s in samples])
        d_gt = np.stack([s.d_gt for s in samples])
    else:
        ph, pw = samples[0].pixels.shape[:2]
        size = (ph // downscale, pw // downscale)
        d_det = np.stack([resize_conserving(DensityMap(s.d_det), size).values
                          for s in samples])
        s_det = np.stack([np.clip(bilinear_resize(s.s_det, size), 0.0, 1.0)
                          for s in samples])
        d_gt = np.stack([resize_conserving(DensityMap(s.d_gt), size).values
                         for s in samples])
    return {"x": x, "gt_low": gt_low, "d_det": d_det[..., None],
            "s_det": s_det[..., None], "d_gt": d_gt[..., None]}


def resize_conserving_batch(maps: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    """Count-conserving resize applied per batch element; (N,h,w,1)->(N,H,W,1).

    Vectorised across the batch (one gather for all elements), with the
    per-element rescale that keeps each map's total unchanged.
    """
    from .density import _axis_positions

    v = maps[..., 0]
    n, h, w = v.shape
    th, tw = size
    if (th, tw) == (h, w):
        return maps.copy()
    r0, r1, fr = _axis_positions(h, th)
    c0, c1, fc = _axis_positions(w, tw)
    rows_lo = v[:, r0]
    rows_hi = v[:, r1]
    rows = rows_lo * (1 - fr)[None, :, None] + rows_hi * fr[None, :, None]
    out = rows[:, :, c0] * (1 - fc)[None, None, :] + rows[:, :, c1] * fc[None, None, :]
    total = v.sum(axis=(1, 2))
    s = out.sum(axis=(1, 2))
    scale = np.where(total > 0, np.where(s > 0, total / np.where(s == 0, 1.0, s), 0.0), 1.0)
    out *= scale[:, None, None]
    # mass invisible to the sample grid is spread uniformly
    lost = (s == 0) & (total > 0)
    if lost.any():
        out[lost] += (total[lost] / (th * tw))[:, None, None]
    return out[..., None]


# ---------------------------------------------------------------------------
# losses


def _as_target(value, like: Tensor, opname: str) -> Tensor:
    arr = value.values if isinstance(value, DensityMap) else np.asarray(value,
                                                                        dtype=np.float64)
    if arr.shape != like.data.shape:
        raise ValueError(f"{opname}: target shape {arr.shape} != prediction "
                         f"{like.data.shape}")
    return Tensor(arr)


def _batch_size(t: Tensor) -> int:
    return t.data.shape[0] if t.data.ndim == 4 else 1


def loss_reg(d_reg: Tensor, d_gt, tape: Tape | None = None) -> Tensor:
    """Summed squared pixel error, averaged over the batch."""
    target = _as_target(d_gt, d_reg, "loss_reg")
    n = _batch_size(d_reg)
    return ad.scale(ad.sq_diff_sum(d_reg, target, tape), 1.0 / n, tape)


def loss_qua(d_final: Tensor, d_gt, k: Tensor, s_det, lam: float,
             tape: Tape | None = None) -> Tensor:
    """Quality-aware loss: |D_final - D_gt|^2 + lam * |K - S_det|^2, batch mean.

    Gradients flow into the attention parameters only unless the blend
    was built with a live regression tensor.
    """
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    gt_t = _as_target(d_gt, d_final, "loss_qua")
    n = _batch_size(d_final)
    total = ad.sq_diff_sum(d_final, gt_t, tape)
    if lam != 0.0:
        s_t = _as_target(s_det, k, "loss_qua(score)")
        total = ad.add(total, ad.scale(ad.sq_diff_sum(k, s_t, tape), lam, tape), tape)
    return ad.scale(total, 1.0 / n, tape)


# ---------------------------------------------------------------------------
# training state and steps


@dataclass
class QuanetSlot:
    """One attention network being trained, with its loss weight."""

    name: str
    params: QualityNetParams
    lam: float


@dataclass
class TrainState:
    regnet: RegNetParams
    quanets: list[QuanetSlot]
    step: int = 0


def init_state(config: TrainConfig, variants: Sequence[tuple[str, float]]) -> TrainState:
    """Fresh parameters; independent named RNG streams per network."""
    reg_rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0x0e6]))
    slots = []
    for i, (name, lam) in enumerate(variants):
        rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0x40a, i]))
        slots.append(QuanetSlot(name, QualityNetParams.init(rng), lam))
    return TrainState(RegNetParams.init(reg_rng), slots)


def train_step(state: TrainState, batch: dict, config: TrainConfig) -> dict:
    """One alternating update; returns the step's loss values."""
    lr = learning_rate(config, state.step)
    n, ph, pw = batch["x"].shape[0], batch["x"].shape[1], batch["x"].shape[2]
    k_size = (ph // config.qua_downscale, pw // config.qua_downscale)

    # (a) regression update
    tape = Tape()
    x = Tensor(batch["x"])
    d_reg = regnet_forward(state.regnet, x, tape)
    l_reg = loss_reg(d_reg, batch["gt_low"], tape)
    if not np.isfinite(l_reg.data):
        raise TrainingDiverged(f"step {state.step}: non-finite regression loss")
    backward(l_reg, tape)
    sgd_step(state.regnet.parameters(), lr)

    # (b) attention update(s) against the post-update regression map
    losses = {"loss_reg": float(l_reg.data)}
    if state.quanets:
        if config.qua_through_reg:
            if len(state.quanets) > 1:
                raise ValueError("qua_through_reg supports a single attention net")
            tape_b = Tape()
            d_reg2 = regnet_forward(state.regnet, x, tape_b)
            if not np.isfinite(d_reg2.data).all():
                raise TrainingDiverged(f"step {state.step}: non-finite regression map "
                                       f"after update (loss_reg={losses['loss_reg']})")
            reg_up = ad.upsample_conserving(d_reg2, k_size, tape_b)
            reg_arr = reg_up.data
        else:
            tape_b = Tape()
            d_reg2 = regnet_forward(state.regnet, x, None)
            if not np.isfinite(d_reg2.data).all():
                raise TrainingDiverged(f"step {state.step}: non-finite regression map "
                                       f"after update (loss_reg={losses['loss_reg']})")
            reg_up = resize_conserving_batch(d_reg2.data, k_size)
            reg_arr = reg_up
        qx = Tensor(stack_quality_input(
            batch["x"] if config.qua_downscale == 1 else _downscale_pixels(batch["x"],
                                                                           k_size),
            batch["d_det"][..., 0], reg_arr[..., 0]))
        qua_params = []
        for slot in state.quanets:
            k = qualitynet_apply(slot.params, qx, tape_b)
            d_final = blend_on_tape(
                k, batch["d_det"],
                reg_up if config.qua_through_reg else reg_arr, tape_b)
            l_q = loss_qua(d_final, batch["d_gt"], k, batch["s_det"], slot.lam, tape_b)
            if not np.isfinite(l_q.data):
                raise TrainingDiverged(f"step {state.step}: non-finite quality loss "
                                       f"({slot.name})")
            losses[f"loss_qua:{slot.name}"] = float(l_q.data)
            backward(l_q, tape_b)
            qua_params.extend(slot.params.parameters())
        if config.qua_through_reg:
            qua_params.extend(state.regnet.parameters())
        sgd_step(qua_params, lr)
    state.step += 1
    return losses


def _downscale_pixels(x: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    out = np.empty((x.shape[0], size[0], size[1], x.shape[3]))
    for i in range(x.shape[0]):
        for c in range(x.shape[3]):
            out[i, :, :, c] = bilinear_resize(x[i, :, :, c], size)
    return out


# ---------------------------------------------------------------------------
# evaluation batches (shared with the evaluation module)


@dataclass
class EvalScene:
    """Preprocessed per-scene arrays for fast repeated evaluation."""

    scene_id: str
    gt_count: float             # number of annotated heads
    x: np.ndarray               # (12, ph, pw, 3) normalised pixels
    d_det: np.ndarray           # (12, kh, kw, 1) at K resolution
    s_det: np.ndarray           # (12, kh, kw, 1)
    det_count: float            # sum over the patch detection maps


def make_eval_scene(scene: Scene, kernel: GaussianKernelSpec, score_default: float,
                    downscale: int = 1) -> EvalScene:
    patches = crop_patches(scene, kernel, score_default)
    batch = build_batch(patches, downscale)
    return EvalScene(scene.id, float(len(scene.points)), batch["x"],
                     batch["d_det"], batch["s_det"], float(batch["d_det"].sum()))


def predict_counts(ev: EvalScene, regnet: RegNetParams,
                   quanets: dict[str, QualityNetParams],
                   downscale: int = 1) -> dict[str, float]:
    """Per-variant scene counts from frozen parameters.

    Returns reg_only/det_only plus one entry per supplied attention net
    (the blended count).  late_fusion is derived later as the exact
    mean of the two pure counts.
    """
    k_size = ev.d_det.shape[1:3]
    d_reg = regnet_forward(regnet, Tensor(ev.x), None).data
    reg_count = float(d_reg.sum())
    out = {"reg_only": reg_count, "det_only": ev.det_count}
    if quanets:
        reg_up = resize_conserving_batch(d_reg, k_size)
        qx = Tensor(stack_quality_input(
            ev.x if downscale == 1 else _downscale_pixels(ev.x, k_size),
            ev.d_det[..., 0], reg_up[..., 0]))
        for name, qp in quanets.items():
            k = qualitynet_apply(qp, qx, None).data
            final = k * ev.d_det + (1.0 - k) * reg_up
            out[name] = float(final.sum())
    return out


# ---------------------------------------------------------------------------
# the training loop


@dataclass
class TrainResult:
    checkpoint: dict[str, np.ndarray]          # best full snapshot (see train())
    best_val_mae: float
    metrics: list[dict]                        # one row per evaluation
    state: TrainState
    variant_checkpoints: dict[str, dict[str, np.ndarray]]
    variant_best_mae: dict[str, float]


def state_checkpoint(state: TrainState, config: TrainConfig) -> dict[str, np.ndarray]:
    """Named-parameter snapshot of the full training state."""
    ck: dict[str, np.ndarray] = {}
    for name, t in state.regnet.tensors().items():
        ck[name] = t.data.copy()
    for slot in state.quanets:
        prefix = "qualitynet" if slot.name == "quality" else f"qualitynet_{slot.name}"
        for name, t in slot.params.tensors(prefix).items():
            ck[name] = t.data.copy()
    ck["meta.step"] = np.float64(state.step)
    ck["meta.qua_downscale"] = np.float64(config.qua_downscale)
    return ck


def _params_from_checkpoint(ck: dict[str, np.ndarray], prefix: str, cls):
    ws, bs = [], []
    i = 1
    while f"{prefix}.conv{i}.w" in ck:
        ws.append(Tensor(ck[f"{prefix}.conv{i}.w"].copy(), requires_grad=True))
        bs.append(Tensor(ck[f"{prefix}.conv{i}.b"].copy(), requires_grad=True))
        i += 1
    if not ws:
        return None
    return cls(ws, bs)


def regnet_from_checkpoint(ck: dict[str, np.ndarray]) -> RegNetParams:
    p = _params_from_checkpoint(ck, "regnet", RegNetParams)
    if p is None:
        raise ValueError("checkpoint has no regnet parameters")
    return p


def quanet_from_checkpoint(ck: dict[str, np.ndarray],
                           prefix: str = "qualitynet") -> QualityNetParams | None:
    return _params_from_checkpoint(ck, prefix, QualityNetParams)


def _evaluate_val(state: TrainState, val: list[EvalScene], config: TrainConfig,
                  variants: list[str]) -> dict[str, tuple[float, float]]:
    """(mae, rmse) of scene counts per tracked variant."""
    quanets = {s.name: s.params for s in state.quanets}
    errs: dict[str, list[float]] = {v: [] for v in variants}
    for ev in val:
        preds = predict_counts(ev, state.regnet, quanets, config.qua_downscale)
        for v in variants:
            errs[v].append(preds[v] - ev.gt_count)
    out = {}
    for v, e in errs.items():
        arr = np.array(e)
        out[v] = (float(np.abs(arr).mean()), float(np.sqrt((arr ** 2).mean())))
    return out


def run_training(config: TrainConfig, train_scenes: list[Scene],
                 val_scenes: list[Scene],
                 variants: Sequence[tuple[str, float]] = (("quality", None),),
                 resume: dict[str, np.ndarray] | None = None) -> TrainResult:
    """Alternating training of RegNet plus one attention net per variant.

    `variants` maps names to quality-loss weights (None = config.lam).
    Validation MAE is computed every eval_interval steps for reg_only
    and every attention variant; each tracked variant keeps the full
    snapshot of its best step.  The returned checkpoint is the best
    snapshot of the first attention variant (or reg_only when there is
    none).
    """
    if not train_scenes or not val_scenes:
        raise ValueError("training requires non-empty train and validation splits")
    variants = [(n, config.lam if lam is None else lam) for n, lam in variants]
    seen = set()
    for n, _ in variants:
        if n in seen:
            raise ValueError(f"duplicate variant name {n!r}")
        seen.add(n)

    state = init_state(config, variants)
    if resume is not None:
        state.regnet = regnet_from_checkpoint(resume)
        for slot in state.quanets:
            prefix = "qualitynet" if slot.name == "quality" else f"qualitynet_{slot.name}"
            loaded = quanet_from_checkpoint(resume, prefix)
            if loaded is not None:
                slot.params = loaded
        state.step = int(resume.get("meta.step", 0.0))

    rng_data = np.random.default_rng(np.random.SeedSequence([config.seed, 0xda7a]))
    rng_aug = np.random.default_rng(np.random.SeedSequence([config.seed, 0xa06]))

    patch_cache = [crop_patches(s, config.kernel, config.score_default, config.patch_grid)
                   for s in train_scenes]
    val_cache = [make_eval_scene(s, config.kernel, config.score_default,
                                 config.qua_downscale) for s in val_scenes]
    tracked = ["reg_only"] + [n for n, _ in variants]
    primary = variants[0][0] if variants else "reg_only"

    best_mae = {v: np.inf for v in tracked}
    best_ck: dict[str, dict[str, np.ndarray]] = {}
    metrics: list[dict] = []

    def evaluate(losses: dict | None) -> None:
        stats = _evaluate_val(state, val_cache, config, tracked)
        for v in tracked:
            if stats[v][0] < best_mae[v]:
                best_mae[v] = stats[v][0]
                best_ck[v] = state_checkpoint(state, config)
        row = {"step": state.step, "lr": learning_rate(config, state.step),
               "loss_reg": np.nan, "loss_qua": np.nan,
               "val_mae": stats[primary][0], "val_mse": stats[primary][1]}
        if losses is not None:
            row["loss_reg"] = losses.get("loss_reg", np.nan)
            row["loss_qua"] = losses.get(f"loss_qua:{primary}", np.nan)
        metrics.append(row)

    with threadpool_limits(limits=1):
        evaluate(None)
        losses = None
        while state.step < config.total_steps:
            scene_idx = int(rng_data.integers(len(patch_cache)))
            samples = [augment(p, rng_aug, config.flip_prob, config.noise_prob,
                               config.noise_range)
                       for p in patch_cache[scene_idx]]
            batch = build_batch(samples, config.qua_downscale)
            losses = train_step(state, batch, config)
            if state.step % config.eval_interval == 0 or state.step == config.total_steps:
                evaluate(losses)

    if primary not in best_ck:
        best_ck[primary] = state_checkpoint(state, config)
    return TrainResult(
        checkpoint=best_ck[primary],
        best_val_mae=best_mae[primary],
        metrics=metrics,
        state=state,
        variant_checkpoints=best_ck,
        variant_best_mae={v: best_mae[v] for v in tracked},
    )


def train(config: TrainConfig, train_scenes: list[Scene], val_scenes: list[Scene],
          resume: dict[str, np.ndarray] | None = None) -> TrainResult:
    """Standard run: RegNet plus one QualityNet at the configured lambda."""
    return run_training(config, train_scenes, val_scenes,
                        variants=(("quality", None),), resume=resume)


def train_ablation(config: TrainConfig, train_scenes: list[Scene],
                   val_scenes: list[Scene]) -> TrainResult:
    """Shared-pass ablation run: one RegNet, two QualityNets.

    The "quality" net trains with the configured lambda, the "plain"
    net with lambda=0.  Gradient isolation makes the shared RegNet
    trajectory identical to two separate runs with the same seed.
    """
    return run_training(config, train_scenes, val_scenes,
                        variants=(("quality", None), ("plain", 0.0)))
