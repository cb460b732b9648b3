import math

import numpy as np
import pytest

from clickseg import adapt, model
from clickseg.adapt import (
    AdaptationConfig,
    AdaptationEngine,
    AllIgnoreError,
    OptimizerState,
    adam_step,
    dense_pseudo_bce,
    sparse_bce,
)
from clickseg.clicksim import Click
from clickseg.masks import binarize, sparse_mask_from_clicks


def _tri(labels):
    return np.asarray(labels, dtype=np.int8)


class TestSparseBce:
    def test_single_positive_at_half(self):
        pred = np.full((3, 3), 0.5)
        target = sparse_mask_from_clicks([Click(1, 1, True)], 3, 3)
        assert sparse_bce(pred, target) == pytest.approx(math.log(2), abs=1e-12)

    def test_both_classes_at_half(self):
        pred = np.full((3, 3), 0.5)
        target = sparse_mask_from_clicks([Click(0, 0, True), Click(2, 2, False)], 3, 3)
        assert sparse_bce(pred, target) == pytest.approx(2 * math.log(2), abs=1e-12)

    def test_hand_computed_mixed_case(self):
        pred = np.array([[0.9, 0.8, 0.7, 0.2]])
        target = _tri([[1, 1, 1, 0]])
        expected = -(math.log(0.9) + math.log(0.8) + math.log(0.7)) / 3 - math.log(0.8)
        assert sparse_bce(pred, target) == pytest.approx(expected, abs=1e-12)

    def test_all_ignore_rejected(self):
        with pytest.raises(AllIgnoreError):
            sparse_bce(np.full((2, 2), 0.5), np.full((2, 2), -1, np.int8))

    def test_single_class_term_dropped(self):
        pred = np.full((2, 2), 0.6)
        assert sparse_bce(pred, _tri([[1, -1], [-1, -1]])) == pytest.approx(
            -math.log(0.6), abs=1e-12
        )


class TestDensePseudoBce:
    def test_same_function_as_sparse(self):
        assert dense_pseudo_bce is sparse_bce

    def test_saturated_self_consistent(self):
        pred = np.where(np.eye(4) == 1, 0.99, 0.01)
        pseudo = binarize(pred, 0.5).astype(np.int8)
        assert dense_pseudo_bce(pred, pseudo) < 0.05

    def test_uniform_all_ones(self):
        pred = np.full((3, 3), 0.6)
        pseudo = np.ones((3, 3), dtype=np.int8)
        assert dense_pseudo_bce(pred, pseudo) == pytest.approx(-math.log(0.6), abs=1e-12)


class TestAdamStep:
    def test_zero_gradient_leaves_params(self):
        params = model.init_params(0)
        before = params.copy()
        zero = model.DecoderParams(
            np.zeros_like(params.w1), np.zeros_like(params.b1),
            np.zeros_like(params.w2), 0.0,
        )
        state = OptimizerState.for_params(params)
        adam_step(params, zero, state, lr=0.1)
        assert params.equals(before)
        assert state.step == 1
        assert (state.m["w1"] == 0).all() and (state.v["w1"] == 0).all()

    def test_first_step_formula(self):
        params = model.init_params(1)
        g = model.DecoderParams(
            np.full_like(params.w1, 0.3), np.full_like(params.b1, -0.2),
            np.zeros_like(params.w2), 0.0,
        )
        before = params.copy()
        lr, eps = 1e-2, 1e-8
        adam_step(params, g, OptimizerState.for_params(params), lr=lr, eps=eps)
        # t=1 bias correction cancels: update = lr * g / (|g| + eps)
        expected_w1 = before.w1 - lr * 0.3 / (0.3 + eps)
        expected_b1 = before.b1 - lr * (-0.2) / (0.2 + eps)
        np.testing.assert_allclose(params.w1, expected_w1, rtol=1e-12)
        np.testing.assert_allclose(params.b1, expected_b1, rtol=1e-12)
        assert (params.w2 == before.w2).all()

    def test_deterministic(self):
        grads = model.init_params(3)
        results = []
        for _ in range(2):
            params = model.init_params(2)
            state = OptimizerState.for_params(params)
            adam_step(params, grads, state, lr=1e-3)
            results.append((params, state.step))
        assert results[0][0].equals(results[1][0])
        assert results[0][1] == results[1][1]

    def test_nonfinite_gradient_rejected(self):
        params = model.init_params(0)
        bad = params.copy()
        bad.w1[0, 0] = np.inf
        with pytest.raises(ValueError):
            adam_step(params, bad, OptimizerState.for_params(params), lr=1e-3)


class TestAdaptationConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            AdaptationConfig(ca_mode="sometimes")
        with pytest.raises(ValueError):
            AdaptationConfig(delta=0.6)
        with pytest.raises(ValueError):
            AdaptationConfig(lr=0.0)
        with pytest.raises(ValueError):
            AdaptationConfig(rm_mode="erosion", erosion_k=0)

    def test_labels(self):
        assert AdaptationConfig().label() == "baseline"
        assert AdaptationConfig(
            ca_mode="reset", rm_mode="erosion", cm_enabled=True
        ).label() == "R+E+CM"
        assert AdaptationConfig(ca_mode="continuous").label() == "C"
        assert AdaptationConfig(rm_mode="confidence").label() == "CT"

    def test_text_round_trip(self):
        cfg = AdaptationConfig(
            ca_mode="continuous", rm_mode="confidence", cm_enabled=True,
            lr=0.05, erosion_k=3, delta=0.3, steps_per_event=2,
        )
        assert AdaptationConfig.from_text(cfg.to_text()) == cfg

    def test_from_text_errors(self):
        with pytest.raises(ValueError):
            AdaptationConfig.from_text("nonsense line")
        with pytest.raises(ValueError):
            AdaptationConfig.from_text("unknown_key = 3")


def _session_inputs(seed=0, h=12, w=12):
    rng = np.random.default_rng(seed)
    image = rng.uniform(0, 1, (h, w, 3))
    features = model.encode_image(image)
    clicks = [Click(4, 4, True), Click(9, 9, False)]
    prev = np.zeros((h, w))
    return features, clicks, prev


class TestEngine:
    def test_click_step_increases_clicked_probability(self):
        features, _, prev = _session_inputs()
        clicks = [Click(4, 4, True)]
        cfg = AdaptationConfig(ca_mode="reset", lr=1e-3, sigma=3.0)
        engine = AdaptationEngine(model.init_params(0), cfg)
        prompts = model.encode_prompts(clicks, prev, cfg.sigma)
        before = model.predict(features, prompts, engine.params)[4, 4]
        engine.begin_image()
        prob = engine.click_adapt_step(features, clicks, prev)
        assert prob[4, 4] > before

    def test_ca_off_rejected(self):
        features, clicks, prev = _session_inputs()
        engine = AdaptationEngine(model.init_params(0), AdaptationConfig())
        with pytest.raises(ValueError):
            engine.click_adapt_step(features, clicks, prev)

    def test_loss_non_increasing_on_frozen_clicks(self):
        features, clicks, prev = _session_inputs(1)
        cfg = AdaptationConfig(ca_mode="continuous", lr=1e-3, sigma=3.0)
        engine = AdaptationEngine(model.init_params(1), cfg)
        target = sparse_mask_from_clicks(clicks, features.height, features.width)
        prompts = model.encode_prompts(clicks, prev, cfg.sigma)
        losses = []
        for _ in range(5):
            losses.append(sparse_bce(model.predict(features, prompts, engine.params), target))
            engine.click_adapt_step(features, clicks, prev)
        losses.append(sparse_bce(model.predict(features, prompts, engine.params), target))
        assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))

    def test_pure_reset_restores_params_bit_exact(self):
        features, clicks, prev = _session_inputs(2)
        cfg = AdaptationConfig(ca_mode="reset", lr=1e-2)
        engine = AdaptationEngine(model.init_params(2), cfg)
        before = engine.params.copy()
        engine.begin_image()
        prob = engine.click_adapt_step(features, clicks, prev)
        assert not engine.params.equals(before)
        engine.finish_image(features, clicks, prev, prob)
        assert engine.params.equals(before)

    def test_baseline_finish_is_noop(self):
        features, clicks, prev = _session_inputs(3)
        engine = AdaptationEngine(model.init_params(3), AdaptationConfig())
        before = engine.params.copy()
        engine.begin_image()
        prompts = model.encode_prompts(clicks, prev, engine.config.sigma)
        prob = model.predict(features, prompts, engine.params)
        engine.finish_image(features, clicks, prev, prob)
        assert engine.params.equals(before)
        assert engine.persistent_state.step == 0

    def test_r_e_cm_runs_two_persistent_steps(self):
        features, clicks, prev = _session_inputs(4)
        cfg = AdaptationConfig(
            ca_mode="reset", rm_mode="erosion", cm_enabled=True, erosion_k=1, lr=1e-3
        )
        engine = AdaptationEngine(model.init_params(4), cfg)
        engine.begin_image()
        prob = engine.click_adapt_step(features, clicks, prev)
        # pick a result map whose erosion pseudo label is not all-ignore
        prob = np.clip(prob, 0.1, 0.9)
        prob[:6, :] = 0.9
        prob[6:, :] = 0.1
        engine.finish_image(features, clicks, prev, prob)
        assert engine.persistent_state.step == 2
        assert engine.transient_state.step == 0  # reset discarded the moments

    def test_persistent_never_sees_transient_gradients(self):
        features, clicks, prev = _session_inputs(5)
        cfg = AdaptationConfig(ca_mode="reset", lr=1e-3)
        engine = AdaptationEngine(model.init_params(5), cfg)
        engine.begin_image()
        for _ in range(3):
            engine.click_adapt_step(features, clicks, prev)
        assert engine.transient_state.step == 3
        assert engine.persistent_state.step == 0

    def test_all_ignore_pseudo_is_skipped_not_fatal(self):
        features, clicks, prev = _session_inputs(6)
        cfg = AdaptationConfig(rm_mode="confidence", delta=0.45)
        engine = AdaptationEngine(model.init_params(6), cfg)
        engine.begin_image()
        prob = np.full((features.height, features.width), 0.5)
        engine.finish_image(features, clicks, prev, prob)
        assert engine.skipped_updates == 1
        assert engine.persistent_state.step == 0

    def test_build_pseudo_trimask_modes(self):
        prob = np.array([[0.99, 0.6], [0.4, 0.01]])
        u = adapt.build_pseudo_trimask(prob, AdaptationConfig(rm_mode="untreated"))
        assert (u == np.array([[1, 1], [0, 0]])).all()
        ct = adapt.build_pseudo_trimask(prob, AdaptationConfig(rm_mode="confidence"))
        assert (ct == np.array([[1, -1], [-1, 0]])).all()
