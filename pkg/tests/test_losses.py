import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from centerpercept.losses import (
    HeatmapLossParams,
    count_peaks,
    cross_entropy,
    log_softmax,
    occlusion_bce,
    offset_l1_loss,
    params_for_target,
    sigmoid,
    weighted_l2_grad,
    weighted_l2_loss,
)
from centerpercept.oracles import central_difference

unit = arrays(np.float64, (6, 6), elements=st.floats(0, 1, allow_nan=False))


class TestWeightedL2:
    def test_examples(self):
        assert weighted_l2_loss([[1.0]], [[1.0]]) == 0.0
        assert weighted_l2_loss([[1.0]], [[0.0]]) == pytest.approx(16.0)
        assert weighted_l2_loss([[0.0]], [[1.0]]) == pytest.approx(4.0)
        assert weighted_l2_grad([[1.0]], [[0.0]])[0, 0] == pytest.approx(-32.0)

    def test_n_k_normalises(self):
        t = np.zeros((4, 4))
        t[1, 1] = t[2, 3] = 1
        p = params_for_target(t)
        assert p.n_k == 2 and count_peaks(np.zeros((3, 3))) == 1
        assert weighted_l2_loss(t, np.zeros_like(t), p) == pytest.approx(16.0)

    def test_invalid_params(self):
        with pytest.raises(ValueError):
            HeatmapLossParams(n_k=0)
        with pytest.raises(ValueError):
            HeatmapLossParams(alpha=-1)
        with pytest.raises(ValueError):
            weighted_l2_loss(np.zeros((2, 2)), np.zeros((2, 3)))

    @given(unit, unit)
    @settings(max_examples=60, deadline=None)
    def test_bounded_below_by_mse(self, t, p):
        params = params_for_target(t)
        loss = weighted_l2_loss(t, p, params)
        assert loss >= 0
        assert loss >= np.sum((t - p) ** 2) / params.n_k - 1e-12

    @pytest.mark.parametrize("seed", range(10))
    def test_gradient_matches_finite_differences(self, seed):
        rng = np.random.Generator(np.random.PCG64(seed))
        t = rng.random((8, 8))
        t[rng.integers(0, 8), rng.integers(0, 8)] = 1.0
        p = rng.random((8, 8))
        params = params_for_target(t)
        h = 1e-5
        num = central_difference(lambda x: weighted_l2_loss(t, x, params), p, h)
        ana = weighted_l2_grad(t, p, params)
        wt = (1 + t) ** params.alpha
        stable = (wt >= (1 + p - h) ** params.beta) == (wt >= (1 + p + h) ** params.beta)
        assert stable.mean() > 0.9
        np.testing.assert_allclose(ana[stable], num[stable], rtol=1e-5, atol=1e-5)

    def test_gradient_on_prediction_branch(self):
        # target 0, pred 1: weight (1+P)^2 dominates, d/dP [(1+P)^2 P^2] = 2(1+P)P^2 + 2(1+P)^2 P = 12
        assert weighted_l2_grad([[0.0]], [[1.0]])[0, 0] == pytest.approx(12.0)


class TestOffsetL1:
    def test_example(self):
        pred = np.zeros((2, 3, 3))
        target = np.zeros((2, 3, 3))
        target[:, 1, 1] = (2, 3)
        mask = np.zeros((3, 3), bool)
        mask[1, 1] = True
        assert offset_l1_loss(pred, target, mask) == pytest.approx(2.5)
        assert offset_l1_loss(pred, target, np.zeros((3, 3), bool)) == 0.0

    def test_ignores_unmasked(self, rng):
        pred = rng.random((4, 5, 5))
        mask = np.zeros((5, 5), bool)
        mask[2, 2] = True
        target = pred.copy()
        target[:, 0, 0] += 100
        assert offset_l1_loss(pred, target, mask) == 0.0

    def test_mask_shape(self):
        with pytest.raises(ValueError):
            offset_l1_loss(np.zeros((2, 3, 3)), np.zeros((2, 3, 3)), np.zeros((3, 4), bool))


class TestTags:
    def test_uniform_logits(self):
        assert cross_entropy(np.zeros(7), 3) == pytest.approx(math.log(7))

    @given(arrays(np.float64, 5, elements=st.floats(-50, 50)), st.floats(-100, 100), st.integers(0, 4))
    @settings(max_examples=60, deadline=None)
    def test_shift_invariant(self, z, c, label):
        assert cross_entropy(z + c, label) == pytest.approx(cross_entropy(z, label), abs=1e-8)

    def test_log_softmax_normalised(self, rng):
        assert np.exp(log_softmax(rng.normal(0, 30, 9))).sum() == pytest.approx(1.0)

    def test_large_logits_stable(self):
        assert cross_entropy([1000.0, 0.0], 0) == pytest.approx(0.0, abs=1e-12)
        assert cross_entropy([1000.0, 0.0], 1) == pytest.approx(1000.0)

    def test_bad_label(self):
        with pytest.raises(ValueError):
            cross_entropy(np.zeros(4), 4)


class TestOcclusion:
    def test_bias_init(self):
        assert float(sigmoid(4.6)) == pytest.approx(0.990, abs=5e-4)
        np.testing.assert_allclose(sigmoid([-800.0, 0.0, 800.0]), [0.0, 0.5, 1.0])

    def test_bce(self):
        m = np.zeros((1, 4, 4))
        m[0, 1, 2] = 3.0
        assert occlusion_bce(m, [], []) == 0.0
        assert occlusion_bce(m, [(2, 1)], [1]) == pytest.approx(-math.log(sigmoid(3.0)))
        assert occlusion_bce(m, [(0, 0), (2, 1)], [0, 0]) == pytest.approx(
            (math.log(2) - math.log(1 - sigmoid(3.0))) / 2
        )

    def test_bce_errors(self):
        m = np.zeros((4, 4))
        with pytest.raises(ValueError):
            occlusion_bce(m, [(4, 0)], [1])
        with pytest.raises(ValueError):
            occlusion_bce(m, [(0, 0)], [])
