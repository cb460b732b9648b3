import numpy as np
import pytest

from clickseg import bench, dataio, model
from clickseg.adapt import AdaptationConfig, AdaptationEngine, OptimizerState, adam_step
from clickseg.clicksim import Click
from clickseg.masks import sparse_mask_from_clicks


def _random_case(seed, h=8, w=8):
    rng = np.random.default_rng(seed)
    image = rng.uniform(0, 1, (h, w, 3))
    features = model.encode_image(image)
    n = int(rng.integers(1, 5))
    clicks = [
        Click(int(rng.integers(h)), int(rng.integers(w)), bool(rng.integers(2)))
        for _ in range(n)
    ]
    clicks.append(Click(0, 0, True))  # ensure at least one positive label
    prompts = model.encode_prompts(clicks, rng.uniform(0, 1, (h, w)), 3.0)
    params = model.init_params(seed)
    target = sparse_mask_from_clicks(clicks, h, w)
    return features, prompts, params, target


class TestEncodeImage:
    def test_constant_image_has_zero_gradient_channel(self):
        img = np.full((10, 10, 3), 0.5)
        feats = model.encode_image(img)
        assert (feats.data[:, :, 3] == 0).all()

    def test_deterministic(self):
        rng = np.random.default_rng(0)
        img = rng.uniform(0, 1, (12, 9, 3))
        a = model.encode_image(img)
        b = model.encode_image(img.copy())
        assert (a.data == b.data).all()

    def test_step_edge_peaks_gradient(self):
        img = np.zeros((10, 10, 3))
        img[:, 5:, :] = 1.0
        grad = model.encode_image(img).data[:, :, 3]
        # np.gradient spreads the unit step over the two adjacent columns
        assert grad[:, 4].mean() == pytest.approx(0.5)
        assert grad[:, 5].mean() == pytest.approx(0.5)
        assert (grad[:, [0, 1, 8, 9]] == 0).all()

    def test_too_small_rejected(self):
        with pytest.raises(ValueError):
            model.encode_image(np.zeros((4, 4, 3)))


class TestEncodePrompts:
    def test_empty(self):
        p = model.encode_prompts([], np.zeros((6, 6)), 5.0)
        assert (p == 0).all()

    def test_single_positive_peak(self):
        p = model.encode_prompts([Click(2, 3, True)], np.zeros((6, 6)), 2.0)
        assert p[2, 3, 0] == 1.0
        assert p[2, 4, 0] == pytest.approx(np.exp(-1 / 8))
        assert (p[:, :, 1] == 0).all()

    def test_two_clicks_pointwise_max(self):
        clicks = [Click(1, 1, True), Click(4, 4, True)]
        p = model.encode_prompts(clicks, np.zeros((6, 6)), 2.0)
        for r, c in ((0, 0), (2, 3), (5, 5)):
            expected = max(
                np.exp(-((r - 1) ** 2 + (c - 1) ** 2) / 8),
                np.exp(-((r - 4) ** 2 + (c - 4) ** 2) / 8),
            )
            assert p[r, c, 0] == pytest.approx(expected)

    def test_bad_sigma(self):
        with pytest.raises(ValueError):
            model.encode_prompts([], np.zeros((6, 6)), 0.0)


class TestPredict:
    def test_zero_params_give_half(self):
        feats, prompts, params, _ = _random_case(0)
        params.w1[...] = 0
        params.b1[...] = 0
        params.w2[...] = 0
        params.b2 = 0.0
        assert (model.predict(feats, prompts, params) == 0.5).all()

    def test_deterministic_and_bounded(self):
        feats, prompts, params, _ = _random_case(1)
        a = model.predict(feats, prompts, params)
        b = model.predict(feats, prompts, params)
        assert (a == b).all()
        assert (a > 0).all() and (a < 1).all()
        assert np.isfinite(a).all()

    def test_nonfinite_params_rejected(self):
        feats, prompts, params, _ = _random_case(2)
        params.b2 = float("nan")
        with pytest.raises(ValueError):
            model.predict(feats, prompts, params)

    def test_positive_click_step_raises_probability(self):
        feats, prompts, params, _ = _random_case(3)
        click = Click(4, 4, True)
        target = sparse_mask_from_clicks([click], 8, 8)
        prompts = model.encode_prompts([click], np.zeros((8, 8)), 3.0)
        before = model.predict(feats, prompts, params)[4, 4]
        _, grads = model.loss_gradients(feats, prompts, params, target)
        adam_step(params, grads, OptimizerState.for_params(params), lr=1e-3)
        after = model.predict(feats, prompts, params)[4, 4]
        assert after > before


class TestLossGradients:
    def test_saturated_correct_prediction(self):
        feats, prompts, params, _ = _random_case(4)
        params.w1[...] = 0
        params.b1[...] = 0
        params.w2[...] = 0
        params.b2 = 30.0  # saturated foreground everywhere
        target = np.ones((8, 8), dtype=np.int8)
        loss, grads = model.loss_gradients(feats, prompts, params, target)
        assert loss < 1e-6
        for arr in grads.arrays().values():
            assert np.abs(arr).max() < 1e-6

    def test_all_ignore_rejected(self):
        feats, prompts, params, _ = _random_case(5)
        with pytest.raises(ValueError):
            model.loss_gradients(feats, prompts, params, np.full((8, 8), -1, np.int8))

    def test_loss_matches_public_loss_function(self):
        from clickseg.adapt import sparse_bce

        feats, prompts, params, target = _random_case(6)
        loss, _ = model.loss_gradients(feats, prompts, params, target)
        pred = model.predict(feats, prompts, params)
        assert loss == pytest.approx(sparse_bce(pred, target), abs=1e-12)

    @pytest.mark.parametrize("seed", range(20))
    def test_finite_differences(self, seed):
        feats, prompts, params, target = _random_case(seed)
        _, grads = model.loss_gradients(feats, prompts, params, target)
        step = 1e-4
        rng = np.random.default_rng(seed + 999)
        for name, grad_arr in grads.arrays().items():
            flat_idx = int(rng.integers(grad_arr.size))
            plus = params.copy()
            minus = params.copy()
            if name == "b2":
                plus.b2 += step
                minus.b2 -= step
            else:
                getattr(plus, name).reshape(-1)[flat_idx] += step
                getattr(minus, name).reshape(-1)[flat_idx] -= step
            lp, _ = model.loss_gradients(feats, prompts, plus, target)
            lm, _ = model.loss_gradients(feats, prompts, minus, target)
            fd = (lp - lm) / (2 * step)
            analytic = grad_arr.reshape(-1)[flat_idx]
            denom = max(abs(fd), abs(analytic), 1e-8)
            assert abs(analytic - fd) / denom < 1e-4


class TestSnapshotRestore:
    def test_round_trip_bit_exact(self):
        params = model.init_params(0)
        snap = model.snapshot(params)
        params.w1 += 1.0
        params.b2 = 7.0
        model.restore(snap, params)
        assert params.equals(model.init_params(0))

    def test_restore_idempotent(self):
        params = model.init_params(1)
        snap = model.snapshot(params)
        params.w2 *= 2.0
        model.restore(snap, params)
        first = params.copy()
        model.restore(snap, params)
        assert params.equals(first)

    def test_optimizer_state_replay(self):
        feats, prompts, params, target = _random_case(7)
        state = OptimizerState.for_params(params)
        # advance the optimizer so the moments are nontrivial
        _, grads = model.loss_gradients(feats, prompts, params, target)
        adam_step(params, grads, state, lr=1e-3)
        snap = model.snapshot(params, state)
        _, grads = model.loss_gradients(feats, prompts, params, target)
        adam_step(params, grads, state, lr=1e-3)
        after_first = params.copy()
        model.restore(snap, params, state)
        _, grads = model.loss_gradients(feats, prompts, params, target)
        adam_step(params, grads, state, lr=1e-3)
        assert params.equals(after_first)


class TestParamsIO:
    def test_round_trip(self, tmp_path):
        params = model.init_params(3)
        path = tmp_path / "params.json"
        model.save_params(params, path)
        loaded = model.load_params(path)
        assert loaded.equals(params)

    def test_rejects_foreign_file(self, tmp_path):
        path = tmp_path / "other.json"
        path.write_text('{"format": "something-else"}')
        with pytest.raises(ValueError):
            model.load_params(path)


class TestPretrain:
    def test_zero_epochs_returns_init(self):
        ds = dataio.synth_dataset(0, 3)
        pairs = [(img, gt) for inst in ds.values() for _, img, gt in inst]
        params = model.pretrain_base(pairs, epochs=0, seed=5)
        assert params.equals(model.init_params(5))

    def test_deterministic(self):
        ds = dataio.synth_dataset(1, 4)
        pairs = [(img, gt) for inst in ds.values() for _, img, gt in inst]
        a = model.pretrain_base(pairs, epochs=2, seed=3)
        b = model.pretrain_base(pairs, epochs=2, seed=3)
        assert a.equals(b)

    def test_empty_dataset_rejected(self):
        with pytest.raises(ValueError):
            model.pretrain_base([], epochs=1)

    def test_pretraining_beats_untrained_at_click_5(self, pretrained_params):
        held_out = dataio.synth_dataset(
            seed=777, n_instances=12, shape_family="disk", domain_shift="none"
        )
        cfg = AdaptationConfig(max_clicks=5, iou_threshold=0.999)

        def mean_iou(params):
            engine = AdaptationEngine(params.copy(), cfg)
            ious = []
            for _, image, gt in held_out["disk"]:
                result = bench.run_session(engine, image, gt)
                ious.append(result.final_iou)
            return float(np.mean(ious))

        assert mean_iou(pretrained_params) > mean_iou(model.init_params(0))
