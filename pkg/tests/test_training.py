"""Loss formula, optimizer, synthetic scenes, and the training loop."""

import numpy as np
import pytest

from spherereg.pipeline import EncoderConfig
from spherereg.spherevox import VoxelParams
from spherereg.training import (AdamState, PatchPairSet, TrainConfig,
                                adam_step, build_training_set,
                                contrastive_loss, default_network,
                                extract_patch_pairs, synth_pair_dataset,
                                train)
from spherereg.training.synth import load_scene_dir, save_scene_dir


def unit_rows(a):
    a = np.asarray(a, dtype=float)
    return a / np.linalg.norm(a, axis=1, keepdims=True)


class TestContrastiveLoss:
    def test_zero_when_margins_satisfied(self):
        eye = np.eye(4)
        loss, gp, gq = contrastive_loss(eye, eye, 0.1, 1.4)
        # identical pairs: positive distance 0; distinct one-hot rows are
        # sqrt(2) > 1.4 apart
        assert loss == 0.0
        assert np.all(gp == 0.0) and np.all(gq == 0.0)

    def test_two_pair_batch_matches_hand_expansion(self):
        p = unit_rows([[1.0, 0.0], [0.0, 1.0]])
        q = unit_rows([[0.8, 0.2], [0.1, 0.9]])
        margin_pos, margin_neg = 0.1, 1.4
        d = lambda a, b: float(np.linalg.norm(a - b))
        pos = [d(p[0], q[0]), d(p[1], q[1])]
        negs = [min(d(p[0], q[1]), d(q[0], p[1])),
                min(d(p[1], q[0]), d(q[1], p[0]))]
        want = np.mean([max(pos[0] - margin_pos, 0) + max(margin_neg - negs[0], 0),
                        max(pos[1] - margin_pos, 0) + max(margin_neg - negs[1], 0)])
        loss, _, _ = contrastive_loss(p, q, margin_pos, margin_neg)
        assert abs(loss - want) < 1e-12

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(0)
        p = unit_rows(rng.normal(size=(6, 5)))
        q = unit_rows(rng.normal(size=(6, 5)))
        loss, gp, gq = contrastive_loss(p, q, 0.1, 1.4)
        eps = 1e-6
        for arr, grad in ((p, gp), (q, gq)):
            for i in range(6):
                for j in range(5):
                    arr[i, j] += eps
                    up = contrastive_loss(p, q, 0.1, 1.4)[0]
                    arr[i, j] -= 2 * eps
                    down = contrastive_loss(p, q, 0.1, 1.4)[0]
                    arr[i, j] += eps
                    fd = (up - down) / (2 * eps)
                    assert abs(fd - grad[i, j]) \
                        <= 1e-4 * max(abs(fd), abs(grad[i, j]), 1.0)

    def test_batch_of_one_rejected(self):
        with pytest.raises(ValueError):
            contrastive_loss(np.ones((1, 3)), np.ones((1, 3)), 0.1, 1.4)

    def test_scalar_loss_permutation_invariant(self):
        rng = np.random.default_rng(1)
        p = unit_rows(rng.normal(size=(8, 4)))
        q = unit_rows(rng.normal(size=(8, 4)))
        base = contrastive_loss(p, q, 0.1, 1.4)[0]
        perm = rng.permutation(8)
        assert abs(contrastive_loss(p[perm], q[perm], 0.1, 1.4)[0] - base) < 1e-12

    def test_loss_nonnegative(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            p = unit_rows(rng.normal(size=(4, 3)))
            q = unit_rows(rng.normal(size=(4, 3)))
            assert contrastive_loss(p, q, 0.1, 1.4)[0] >= 0.0


class TestAdam:
    def test_zero_gradient_keeps_weights(self):
        params = [np.array([1.0, -2.0]), np.array([[0.5]])]
        grads = [np.zeros(2), np.zeros((1, 1))]
        state = AdamState.zeros_like(params)
        new, state = adam_step(params, grads, state, lr=0.01)
        for a, b in zip(params, new):
            np.testing.assert_array_equal(a, b)

    def test_first_step_magnitude_near_lr(self):
        params = [np.array([1.0])]
        grads = [np.array([0.5])]
        state = AdamState.zeros_like(params)
        new, _ = adam_step(params, grads, state, lr=0.01)
        # bias correction makes the first update lr * sign(g) up to eps
        assert abs((params[0][0] - new[0][0]) - 0.01) < 1e-6

    def test_identical_calls_identical_results(self):
        rng = np.random.default_rng(3)
        params = [rng.normal(size=(3, 2))]
        grads = [rng.normal(size=(3, 2))]
        state = AdamState.zeros_like(params)
        a, sa = adam_step(params, grads, state, lr=0.003)
        b, sb = adam_step(params, grads, state, lr=0.003)
        np.testing.assert_array_equal(a[0], b[0])
        np.testing.assert_array_equal(sa.m[0], sb.m[0])
        assert sa.step == sb.step == 1

    def test_inputs_not_mutated(self):
        params = [np.array([1.0])]
        grads = [np.array([2.0])]
        state = AdamState.zeros_like(params)
        adam_step(params, grads, state, lr=0.1)
        assert params[0][0] == 1.0 and state.step == 0 and state.m[0][0] == 0.0


class TestSynthDataset:
    def test_full_overlap_no_noise_identity_correspondences(self):
        pair = synth_pair_dataset(seed=0, scene_count=1, points_per_scene=800,
                                  noise_sigma=0.0, overlap_fraction=1.0)[0]
        np.testing.assert_array_equal(pair.correspondences[:, 0],
                                      pair.correspondences[:, 1])
        assert len(pair.correspondences) == len(pair.source)

    def test_seed_reproducibility(self):
        a = synth_pair_dataset(seed=5, scene_count=2, points_per_scene=500,
                               noise_sigma=0.01, overlap_fraction=0.7)
        b = synth_pair_dataset(seed=5, scene_count=2, points_per_scene=500,
                               noise_sigma=0.01, overlap_fraction=0.7)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.source.points, y.source.points)
            np.testing.assert_array_equal(x.target.points, y.target.points)
            np.testing.assert_array_equal(x.correspondences, y.correspondences)

    def test_correspondences_match_brute_force(self):
        pair = synth_pair_dataset(seed=7, scene_count=1, points_per_scene=400,
                                  noise_sigma=0.02, overlap_fraction=0.6,
                                  tau1=0.1)[0]
        moved = pair.transform.transform_points(pair.source.points)
        dists = np.linalg.norm(moved[:, None] - pair.target.points[None],
                               axis=2)
        nn = dists.argmin(axis=1)
        keep = dists[np.arange(len(moved)), nn] <= 0.1
        expected = np.stack([np.nonzero(keep)[0], nn[keep]], axis=1)
        np.testing.assert_array_equal(pair.correspondences, expected)

    def test_overlap_fraction_respected(self):
        pair = synth_pair_dataset(seed=9, scene_count=1, points_per_scene=2000,
                                  noise_sigma=0.0, overlap_fraction=0.5)[0]
        assert 0.45 <= len(pair.correspondences) / len(pair.source) <= 0.62

    def test_scene_dir_roundtrip(self, tmp_path):
        pairs = synth_pair_dataset(seed=11, scene_count=2, points_per_scene=300,
                                   noise_sigma=0.01, overlap_fraction=0.8)
        save_scene_dir(pairs, tmp_path)
        loaded = load_scene_dir(tmp_path, tau1=0.1)
        assert len(loaded) == 2
        for a, b in zip(pairs, loaded):
            np.testing.assert_array_equal(a.source.points, b.source.points)
            np.testing.assert_array_equal(b.correspondences, a.correspondences)

    def test_extract_patch_pairs_filters(self):
        pair = synth_pair_dataset(seed=13, scene_count=1, points_per_scene=3000,
                                  noise_sigma=0.01, overlap_fraction=0.8)[0]
        pp, qq = extract_patch_pairs(pair, radius=0.6, count=40, seed=3,
                                     min_points=12)
        assert 0 < len(pp) <= 40 and len(pp) == len(qq)
        for a, b in zip(pp, qq):
            assert len(a) >= 12 and len(b) >= 12
            moved = pair.transform.transform_points(a.center[None])[0]
            assert np.linalg.norm(moved - b.center) <= 0.1 + 1e-9


def micro_training_setup(n_pairs=12):
    enc = EncoderConfig(VoxelParams(4, 4, 8, 0.6))
    scenes = synth_pair_dataset(seed=21, scene_count=2, points_per_scene=2500,
                                noise_sigma=0.005, overlap_fraction=0.9)
    dataset = build_training_set(scenes, enc, pairs_per_scene=n_pairs // 2,
                                 seed=4)
    weights = default_network(enc, descriptor_dim=8, seed=9)
    return enc, dataset, weights


class TestTrainLoop:
    def test_lr_schedule_halves_every_five_epochs(self):
        cfg = TrainConfig()
        assert cfg.lr_at(0) == 0.001
        assert cfg.lr_at(4) == 0.001
        assert cfg.lr_at(5) == 0.0005
        assert cfg.lr_at(9) == 0.0005
        assert cfg.lr_at(10) == 0.00025

    def test_zero_lr_leaves_weights_unchanged(self):
        _, dataset, weights = micro_training_setup()
        cfg = TrainConfig(learning_rate=0.0, epochs=1, batch_size=8, seed=0)
        result = train(cfg, dataset, weights)
        for a, b in zip(weights.param_arrays(),
                        result.weights.param_arrays()):
            np.testing.assert_array_equal(a, b)

    def test_short_run_reduces_loss_and_logs(self):
        _, dataset, weights = micro_training_setup()
        cfg = TrainConfig(epochs=4, batch_size=8, seed=1, margin_neg=1.0)
        result = train(cfg, dataset, weights)
        assert len(result.log) == 4
        assert result.log[-1].mean_loss < result.log[0].mean_loss
        assert result.log[0].lr == 0.001

    def test_checkpoints_written_and_loadable(self, tmp_path):
        from spherereg.scnn import load_checkpoint
        _, dataset, weights = micro_training_setup()
        cfg = TrainConfig(epochs=2, batch_size=8, seed=3)
        train(cfg, dataset, weights, checkpoint_every=1,
              checkpoint_dir=tmp_path)
        files = sorted(tmp_path.glob("checkpoint_epoch*.snck"))
        assert len(files) == 2
        w, state = load_checkpoint(files[-1])
        assert state.step > 0
        assert w.arch.descriptor_dim == weights.arch.descriptor_dim

    def test_first_epoch_loss_deterministic(self):
        _, dataset, weights = micro_training_setup()
        cfg = TrainConfig(epochs=1, batch_size=8, seed=2)
        a = train(cfg, dataset, weights)
        b = train(cfg, dataset, weights)
        assert a.log[0].mean_loss == b.log[0].mean_loss

    def test_margin_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(margin_pos=1.5, margin_neg=1.4)

    def test_empty_dataset_rejected(self):
        _, _, weights = micro_training_setup()
        empty = PatchPairSet(np.zeros((0, 1, 4, 4, 8)),
                             np.zeros((0, 1, 4, 4, 8)))
        with pytest.raises(ValueError):
            train(TrainConfig(epochs=1), empty, weights)


class TestTrainingImprovesMatching:
    def test_trained_fmr_beats_untrained_baseline(self, desk_run):
        # cloud-level feature-matching recall on noisy held-out pairs, the
        # trained network against a fresh random initialization
        from dataclasses import replace

        from spherereg.evalmetrics import fmr, inlier_ratio
        from spherereg.noisegen import gaussian_clipped
        from spherereg.pipeline import describe_cloud, random_weights
        from spherereg.registration import match_features
        from conftest import desk_pipeline_config

        config = desk_pipeline_config(keypoints=550, seed=0)
        untrained = random_weights(config, seed=17)
        overlaps = (0.45, 0.55, 0.65)
        scores = {"trained": [], "untrained": []}
        for i in range(8):
            clean = synth_pair_dataset(3100 + i, 1, 5000, 0.0,
                                       overlaps[i % 3])[0]
            pair = replace(
                clean,
                source=gaussian_clipped(clean.source, 0.07, 0.07, 900 + 17 * i),
                target=gaussian_clipped(clean.target, 0.07, 0.07, 901 + 17 * i))
            for name, w in (("trained", desk_run.weights),
                            ("untrained", untrained)):
                src = describe_cloud(pair.source, config, w)
                tgt = describe_cloud(pair.target, config, w)
                corr = match_features(src.descriptors, src.keypoints,
                                      tgt.descriptors, tgt.keypoints,
                                      mode="mutual")
                scores[name].append(inlier_ratio(corr, pair.transform, 0.1))
        assert fmr(scores["trained"], 0.05) > fmr(scores["untrained"], 0.05)


class TestEndToEndGradient:
    def test_training_step_gradient_matches_finite_differences(self):
        from spherereg.scnn import backward_batch, forward_batch

        enc = EncoderConfig(VoxelParams(3, 3, 6, 0.5))
        weights = default_network(enc, descriptor_dim=4, seed=2)
        rng = np.random.default_rng(5)
        gp = rng.random((2, 1, 3, 3, 6))
        gq = rng.random((2, 1, 3, 3, 6))

        def loss_of(w):
            dp, _ = forward_batch(gp, w)
            dq, _ = forward_batch(gq, w)
            return contrastive_loss(dp, dq, 0.1, 1.4)[0]

        dp, cp = forward_batch(gp, weights, want_cache=True)
        dq, cq = forward_batch(gq, weights, want_cache=True)
        _, grad_p, grad_q = contrastive_loss(dp, dq, 0.1, 1.4)
        ggp, _ = backward_batch(cp, weights, grad_p)
        ggq, _ = backward_batch(cq, weights, grad_q)
        full = [a + b for a, b in zip(ggp, ggq)]

        eps = 1e-5
        params = weights.param_arrays()
        checked = 0
        for ai, arr in enumerate(params):
            flat = arr.reshape(-1)
            for j in range(0, flat.size, max(1, flat.size // 12)):
                plus = [a.copy() for a in params]
                plus[ai].reshape(-1)[j] += eps
                minus = [a.copy() for a in params]
                minus[ai].reshape(-1)[j] -= eps
                fd = (loss_of(weights.with_params(plus))
                      - loss_of(weights.with_params(minus))) / (2 * eps)
                an = full[ai].reshape(-1)[j]
                assert abs(fd - an) <= 1e-3 * max(abs(fd), abs(an), 1e-3)
                checked += 1
        assert checked >= 30
