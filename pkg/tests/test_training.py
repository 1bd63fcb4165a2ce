"""Pipeline, losses and the alternating schedule."""

import math

import numpy as np
import pytest

from decidenet import autodiff as ad
from decidenet.autodiff import Tape, Tensor
from decidenet.density import DensityMap, GaussianKernelSpec, gt_density
from decidenet.detector import DetectorProfile, simulate_detections
from decidenet.networks import RegNetParams, blend_on_tape, qualitynet_apply
from decidenet.scenes import SceneSpec, generate_scene
from decidenet.training import (PatchSample, TrainConfig, TrainState, TrainingDiverged,
                                augment, build_batch, crop_patches, init_state,
                                learning_rate, loss_qua, loss_reg, make_eval_scene,
                                predict_counts, run_training, state_checkpoint, train,
                                train_ablation, train_step)

KERNEL = GaussianKernelSpec()


def make_scene(seed=0, count=(6, 14), size=(48, 64), layout="uniform", with_dets=True):
    spec = SceneSpec(height=size[0], width=size[1], count_min=count[0],
                     count_max=count[1], layout=layout)
    scene = generate_scene(spec, seed=seed)
    if with_dets:
        gt = gt_density(scene.points, scene.shape, KERNEL)
        scene.detections = simulate_detections(scene.points, gt, DetectorProfile(),
                                               np.random.default_rng(seed + 1000))
    return scene


def small_config(**kw):
    defaults = dict(total_steps=6, eval_interval=3, lr0=0.003, seed=0)
    defaults.update(kw)
    return TrainConfig(**defaults)


class TestCropPatches:
    def test_empty_scene_gives_zero_patches(self):
        scene = make_scene(seed=1, count=(0, 0))
        patches = crop_patches(scene, KERNEL)
        assert len(patches) == 12
        for p in patches:
            assert p.d_gt.sum() == 0.0
            assert len(p.points) == 0

    def test_head_in_exactly_one_patch(self):
        scene = make_scene(seed=2, count=(0, 0))
        scene.points = np.array([[40.0, 20.0]])  # patch center-ish
        patches = crop_patches(scene, KERNEL)
        owners = [i for i, p in enumerate(patches) if len(p.points)]
        assert len(owners) == 1

    def test_patch_counts_sum_to_scene_count(self):
        for seed in range(5):
            scene = make_scene(seed=seed, count=(5, 40))
            patches = crop_patches(scene, KERNEL)
            scene_map_count = gt_density(scene.points, scene.shape, KERNEL).count()
            patch_sum = sum(p.d_gt.sum() for p in patches)
            assert abs(patch_sum - scene_map_count) < 1e-12
            assert sum(len(p.points) for p in patches) == len(scene.points)

    def test_low_res_map_count_matches(self):
        scene = make_scene(seed=3)
        for p in crop_patches(scene, KERNEL):
            assert abs(p.d_gt_low.sum() - p.d_gt.sum()) < 1e-9

    def test_detections_assigned_by_center(self):
        scene = make_scene(seed=4, count=(20, 30))
        patches = crop_patches(scene, KERNEL)
        assert sum(len(p.detections) for p in patches) == len(scene.detections)


class TestAugment:
    def test_double_flip_identity(self):
        scene = make_scene(seed=5)
        patch = crop_patches(scene, KERNEL)[1]

        class FlipOnce:
            """rng stub: flip h only, no noise, then flip h only again."""

            def __init__(self):
                self.calls = 0

            def random(self):
                self.calls += 1
                return 0.0 if self.calls % 3 == 1 else 1.0

        rng = FlipOnce()
        once = augment(patch, rng, flip_prob=0.5, noise_prob=0.5)
        twice = augment(once, rng, flip_prob=0.5, noise_prob=0.5)
        np.testing.assert_array_equal(twice.pixels, patch.pixels)
        np.testing.assert_array_equal(twice.d_gt, patch.d_gt)
        np.testing.assert_allclose(np.sort(twice.points, axis=0),
                                   np.sort(patch.points, axis=0), atol=1e-12)

    def test_count_invariant(self):
        scene = make_scene(seed=6, count=(15, 25))
        rng = np.random.default_rng(7)
        for patch in crop_patches(scene, KERNEL):
            out = augment(patch, rng)
            assert math.fsum(out.d_gt.ravel()) == math.fsum(patch.d_gt.ravel())
            assert len(out.points) == len(patch.points)

    def test_reflection_formula(self):
        scene = make_scene(seed=8, count=(10, 20))
        patch = crop_patches(scene, KERNEL)[0]
        pw = patch.pixels.shape[1]

        class AlwaysFlipH:
            def __init__(self):
                self.calls = 0

            def random(self):
                self.calls += 1
                return 0.0 if self.calls % 3 == 1 else 1.0

        out = augment(patch, AlwaysFlipH())
        if len(patch.points):
            np.testing.assert_allclose(
                np.sort(out.points[:, 0]), np.sort(pw - 1 - patch.points[:, 0]),
                atol=1e-12)

    def test_noise_clamped(self):
        scene = make_scene(seed=9)
        patch = crop_patches(scene, KERNEL)[0]
        patch.pixels[:] = 255.0
        rng = np.random.default_rng(10)
        for _ in range(8):
            out = augment(patch, rng, flip_prob=0.0, noise_prob=1.0)
            assert out.pixels.max() <= 255.0 and out.pixels.min() >= 0.0


class TestLosses:
    def test_loss_reg_zero_at_match(self):
        rng = np.random.default_rng(11)
        v = rng.uniform(0, 1, (2, 4, 4, 1))
        assert float(loss_reg(Tensor(v), v).data) == 0.0

    def test_loss_reg_constant_offset(self):
        c, h, w = 0.3, 4, 6
        pred = Tensor(np.full((1, h, w, 1), c))
        got = float(loss_reg(pred, np.zeros((1, h, w, 1))).data)
        assert abs(got - c * c * h * w) < 1e-12

    def test_loss_reg_matches_loop_oracle(self):
        rng = np.random.default_rng(12)
        pred = rng.uniform(0, 1, (3, 5, 5, 1))
        gt = rng.uniform(0, 1, (3, 5, 5, 1))
        want = math.fsum(((pred - gt) ** 2).ravel()) / 3.0
        got = float(loss_reg(Tensor(pred), gt).data)
        assert abs(got - want) < 1e-12

    def test_loss_reg_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape"):
            loss_reg(Tensor(np.zeros((2, 4, 4, 1))), np.zeros((2, 5, 4, 1)))

    def test_loss_qua_zero_at_joint_match(self):
        rng = np.random.default_rng(13)
        d = rng.uniform(0, 1, (2, 4, 4, 1))
        k = rng.uniform(0, 1, (2, 4, 4, 1))
        assert float(loss_qua(Tensor(d), d, Tensor(k), k, 1.0).data) == 0.0

    def test_loss_qua_lambda_zero_reduces(self):
        rng = np.random.default_rng(14)
        d = rng.uniform(0, 1, (2, 4, 4, 1))
        gt = rng.uniform(0, 1, (2, 4, 4, 1))
        k = rng.uniform(0, 1, (2, 4, 4, 1))
        s = rng.uniform(0, 1, (2, 4, 4, 1))
        got = float(loss_qua(Tensor(d), gt, Tensor(k), s, 0.0).data)
        want = math.fsum(((d - gt) ** 2).ravel()) / 2.0
        assert abs(got - want) < 1e-12

    def test_loss_qua_matches_loop_oracle(self):
        rng = np.random.default_rng(15)
        d = rng.uniform(0, 1, (2, 4, 4, 1))
        gt = rng.uniform(0, 1, (2, 4, 4, 1))
        k = rng.uniform(0, 1, (2, 4, 4, 1))
        s = rng.uniform(0, 1, (2, 4, 4, 1))
        lam = 0.7
        want = (math.fsum(((d - gt) ** 2).ravel())
                + lam * math.fsum(((k - s) ** 2).ravel())) / 2.0
        got = float(loss_qua(Tensor(d), gt, Tensor(k), s, lam).data)
        assert abs(got - want) < 1e-12


class TestSchedule:
    def test_lr_halving(self):
        cfg = TrainConfig(lr0=0.005, lr_halving_steps=10_000)
        assert learning_rate(cfg, 0) == 0.005
        assert learning_rate(cfg, 9_999) == 0.005
        assert learning_rate(cfg, 10_000) == 0.0025
        assert learning_rate(cfg, 20_000) == 0.00125

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(lr0=0.0)
        with pytest.raises(ValueError):
            TrainConfig(lam=-1.0)
        with pytest.raises(ValueError):
            TrainConfig(qua_downscale=3)


class TestTrainStep:
    def _batch(self, seed=16):
        scene = make_scene(seed=seed)
        patches = crop_patches(scene, KERNEL)
        return build_batch(patches)

    def test_gradient_isolation(self):
        cfg = small_config()
        state = init_state(cfg, [("quality", cfg.lam), ("plain", 0.0)])
        batch = self._batch()
        reg_before = [w.data.copy() for w in state.regnet.parameters()]
        qua_before = [[t.data.copy() for t in slot.params.parameters()]
                      for slot in state.quanets]
        # phase (a)+(b): after the full step, phase (b) must not have
        # touched RegNet, and phase (a) must not have touched QualityNets
        train_step(state, batch, cfg)
        reg_after = [w.data.copy() for w in state.regnet.parameters()]
        assert any(not np.array_equal(b, a) for b, a in zip(reg_before, reg_after))
        for slot, before in zip(state.quanets, qua_before):
            after = [t.data for t in slot.params.parameters()]
            assert any(not np.array_equal(b, a) for b, a in zip(before, after))

        # rerun phase (b) alone on fresh state to confirm bit-isolation
        state2 = init_state(cfg, [("quality", cfg.lam)])
        regnet_snapshot = [w.data.copy() for w in state2.regnet.parameters()]
        cfg_frozen = TrainConfig(total_steps=1, eval_interval=1, lr0=cfg.lr0, seed=0)
        # regnet update happens in (a); isolate (b) by zeroing lr for (a)?
        # instead: verify quality-loss backward leaves regnet grads empty
        batch2 = self._batch(seed=17)
        tape = Tape()
        from decidenet.networks import stack_quality_input
        from decidenet.training import resize_conserving_batch
        from decidenet.networks import regnet_forward
        d_reg = regnet_forward(state2.regnet, Tensor(batch2["x"]), None)
        reg_up = resize_conserving_batch(d_reg.data, batch2["d_det"].shape[1:3])
        qx = Tensor(stack_quality_input(batch2["x"], batch2["d_det"][..., 0],
                                        reg_up[..., 0]))
        k = qualitynet_apply(state2.quanets[0].params, qx, tape)
        d_final = blend_on_tape(k, batch2["d_det"], reg_up, tape)
        lq = loss_qua(d_final, batch2["d_gt"], k, batch2["s_det"], 1.0, tape)
        ad.backward(lq, tape)
        ad.sgd_step(state2.quanets[0].params.parameters(), 0.01)
        for w, before in zip(state2.regnet.parameters(), regnet_snapshot):
            assert w.grad is None
            assert np.array_equal(w.data, before)

    def test_determinism_across_runs(self):
        def run():
            cfg = small_config(total_steps=4)
            scenes = [make_scene(seed=s) for s in range(3)]
            val = [make_scene(seed=99)]
            return run_training(cfg, scenes, val,
                                variants=(("quality", None), ("plain", 0.0)))

        r1, r2 = run(), run()
        c1 = state_checkpoint(r1.state, small_config())
        c2 = state_checkpoint(r2.state, small_config())
        assert list(c1) == list(c2)
        for key in c1:
            assert np.array_equal(c1[key], c2[key]), key

    def test_divergence_detected(self):
        # lr large enough that parameter products overflow to inf
        cfg = small_config(lr0=1e160)
        state = init_state(cfg, [("quality", 1.0)])
        batch = self._batch()
        with np.errstate(over="ignore", invalid="ignore"):
            with pytest.raises(TrainingDiverged, match="step"):
                for _ in range(5):
                    train_step(state, batch, cfg)

    def test_qua_through_reg_flag_updates_regnet(self):
        cfg = small_config(qua_through_reg=True)
        state = init_state(cfg, [("quality", 1.0)])
        batch = self._batch()
        # phase (b) with the flag must leave regnet gradients applied:
        # compare against a run with the flag off from identical params
        state_off = TrainState(state.regnet.copy(),
                               [type(state.quanets[0])(
                                   "quality", state.quanets[0].params.copy(), 1.0)],
                               step=0)
        cfg_off = small_config(qua_through_reg=False)
        train_step(state, batch, cfg)
        train_step(state_off, batch, cfg_off)
        diffs = [not np.array_equal(a.data, b.data)
                 for a, b in zip(state.regnet.parameters(), state_off.regnet.parameters())]
        assert any(diffs)


class TestTrainLoop:
    def test_zero_steps_returns_initialization(self):
        cfg = small_config(total_steps=0)
        scenes = [make_scene(seed=s) for s in range(2)]
        result = train(cfg, scenes, [make_scene(seed=50)])
        fresh = init_state(cfg, [("quality", cfg.lam)])
        for key, arr in state_checkpoint(fresh, cfg).items():
            if not key.startswith("meta."):
                np.testing.assert_array_equal(arr, result.checkpoint[key])

    def test_metrics_log_and_best_selection(self):
        cfg = small_config(total_steps=30, eval_interval=10, lr0=0.005)
        scenes = [make_scene(seed=s) for s in range(4)]
        result = train(cfg, scenes, [make_scene(seed=60), make_scene(seed=61)])
        assert len(result.metrics) >= 3
        maes = [r["val_mae"] for r in result.metrics]
        assert result.best_val_mae == min(maes)
        assert result.best_val_mae <= maes[0]

    def test_empty_split_rejected(self):
        with pytest.raises(ValueError, match="non-empty"):
            train(small_config(), [], [make_scene(seed=1)])

    def test_resume_continues_step_counter(self):
        cfg = small_config(total_steps=4, eval_interval=2)
        scenes = [make_scene(seed=s) for s in range(2)]
        val = [make_scene(seed=70)]
        first = train(cfg, scenes, val)
        ck = state_checkpoint(first.state, cfg)
        assert int(ck["meta.step"]) == 4
        cfg2 = small_config(total_steps=6, eval_interval=2)
        second = train(cfg2, scenes, val, resume=ck)
        assert second.state.step == 6

    def test_ablation_shares_regnet_trajectory(self):
        cfg = small_config(total_steps=5)
        scenes = [make_scene(seed=s) for s in range(3)]
        val = [make_scene(seed=80)]
        ab = train_ablation(cfg, scenes, val)
        solo = train(cfg, scenes, val)
        for (wa, ws) in zip(ab.state.regnet.parameters(), solo.state.regnet.parameters()):
            assert np.array_equal(wa.data, ws.data)


class TestEvalHelpers:
    def test_predict_counts_variants(self):
        scene = make_scene(seed=30, count=(10, 20))
        ev = make_eval_scene(scene, KERNEL, 0.1)
        state = init_state(small_config(), [("quality", 1.0), ("plain", 0.0)])
        preds = predict_counts(ev, state.regnet,
                               {s.name: s.params for s in state.quanets})
        assert set(preds) == {"reg_only", "det_only", "quality", "plain"}
        assert preds["det_only"] == pytest.approx(ev.det_count)

    def test_det_only_equals_scene_map_mass(self):
        # per-patch maps are crops, so their counts sum to the scene-level
        # detection-map count exactly (scene-border truncation included)
        from decidenet.density import det_density
        scene = make_scene(seed=31, count=(15, 15))
        ev = make_eval_scene(scene, KERNEL, 0.1)
        scene_mass = det_density(scene.detections, scene.shape, KERNEL).count()
        assert ev.det_count == pytest.approx(scene_mass, abs=1e-12)

    def test_det_only_near_n_detections_when_interior(self):
        spec = SceneSpec(height=96, width=128, count_min=12, count_max=12,
                         layout="uniform")
        scene = generate_scene(spec, seed=77)
        # move all heads well inside so kernels are untruncated
        scene.points = np.column_stack([
            np.random.default_rng(5).uniform(12, 115, 12),
            np.random.default_rng(6).uniform(12, 83, 12)])
        gt = gt_density(scene.points, scene.shape, KERNEL)
        scene.detections = simulate_detections(
            scene.points, gt,
            DetectorProfile(base_recall=1.0, recall_decay=0.0,
                            position_jitter_sigma=0.0),
            np.random.default_rng(7))
        ev = make_eval_scene(scene, KERNEL, 0.1)
        assert ev.det_count == pytest.approx(len(scene.detections), abs=1e-9)
