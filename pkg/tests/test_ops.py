"""Forward-value oracles for the neural-network operations."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from ptgnn.errors import ConfigError, ContractError, DimensionError
from ptgnn.numerics import (EVAL, TRAIN, Tensor, batchnorm, conv1d, conv2d,
                            cross_entropy, dropout, maxpool1d, mean, mse,
                            softmax, tsum)


class TestConv1d:
    def test_identity_kernel(self):
        x = Tensor(np.ones((1, 1, 4)))
        w = Tensor(np.ones((1, 1, 1)))
        np.testing.assert_array_equal(conv1d(x, w).data, np.ones((1, 1, 4)))

    def test_sliding_dot_product(self):
        # x=[1,2,3], w=[1,1] -> [1+2, 2+3] = [3, 5]
        x = Tensor([[[1.0, 2.0, 3.0]]])
        w = Tensor([[[1.0, 1.0]]])
        np.testing.assert_array_equal(conv1d(x, w).data, [[[3.0, 5.0]]])

    def test_zero_input_gives_zeros(self):
        x = Tensor(np.zeros((2, 1, 3)))
        w = Tensor(np.random.default_rng(0).normal(size=(4, 1, 2)))
        np.testing.assert_array_equal(conv1d(x, w).data, np.zeros((2, 4, 2)))

    def test_kernel_larger_than_padded_input(self):
        with pytest.raises(DimensionError):
            conv1d(Tensor(np.zeros((1, 1, 3))), Tensor(np.zeros((1, 1, 5))))

    def test_output_length_formula(self):
        for L, K, s, p in [(10, 3, 1, 0), (10, 3, 2, 1), (7, 5, 3, 2), (4, 4, 1, 0)]:
            x = Tensor(np.zeros((1, 1, L)))
            w = Tensor(np.zeros((1, 1, K)))
            out = conv1d(x, w, stride=s, padding=p)
            assert out.shape[2] == (L + 2 * p - K) // s + 1

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(42)
        x = rng.normal(size=(2, 3, 9)).astype(np.float32)
        w = rng.normal(size=(4, 3, 3)).astype(np.float32)
        b = rng.normal(size=4).astype(np.float32)
        stride, pad = 2, 1
        xp = np.pad(x, ((0, 0), (0, 0), (pad, pad)))
        L_out = (9 + 2 * pad - 3) // stride + 1
        want = np.zeros((2, 4, L_out), dtype=np.float32)
        for bi in range(2):
            for o in range(4):
                for l in range(L_out):
                    acc = b[o]
                    for c in range(3):
                        for k in range(3):
                            acc += w[o, c, k] * xp[bi, c, l * stride + k]
                    want[bi, o, l] = acc
        got = conv1d(Tensor(x), Tensor(w), Tensor(b), stride=stride, padding=pad)
        np.testing.assert_allclose(got.data, want, rtol=1e-5)


def test_conv2d_matches_loop_oracle():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(2, 2, 6, 5)).astype(np.float32)
    w = rng.normal(size=(3, 2, 3, 3)).astype(np.float32)
    b = rng.normal(size=3).astype(np.float32)
    s, p = 2, 1
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    Ho = (6 + 2 * p - 3) // s + 1
    Wo = (5 + 2 * p - 3) // s + 1
    want = np.zeros((2, 3, Ho, Wo), dtype=np.float32)
    for bi in range(2):
        for o in range(3):
            for i in range(Ho):
                for j in range(Wo):
                    patch = xp[bi, :, i * s:i * s + 3, j * s:j * s + 3]
                    want[bi, o, i, j] = (patch * w[o]).sum() + b[o]
    got = conv2d(Tensor(x), Tensor(w), Tensor(b), stride=s, padding=p)
    np.testing.assert_allclose(got.data, want, rtol=1e-4)


class TestMaxPool:
    def test_basic(self):
        x = Tensor([[[1.0, 3.0, 2.0, 5.0]]])
        np.testing.assert_array_equal(maxpool1d(x, 2).data, [[[3.0, 5.0]]])

    def test_window_too_large(self):
        with pytest.raises(DimensionError):
            maxpool1d(Tensor(np.zeros((1, 1, 2))), 3)

    def test_tie_gradient_goes_to_first(self):
        x = Tensor([[[2.0, 2.0]]], requires_grad=True)
        tsum(maxpool1d(x, 2)).backward()
        np.testing.assert_array_equal(x.grad, [[[1.0, 0.0]]])


class TestSoftmax:
    def test_symmetry(self):
        np.testing.assert_allclose(softmax(Tensor([0.0, 0.0])).data, [0.5, 0.5])

    def test_closed_form(self):
        # e^0 / (e^0 + 3) = 0.25
        np.testing.assert_allclose(
            softmax(Tensor([0.0, float(np.log(3.0))])).data, [0.25, 0.75], atol=1e-7)

    def test_empty_axis_rejected(self):
        with pytest.raises(DimensionError):
            softmax(Tensor(np.zeros((2, 0))))

    @settings(max_examples=50, deadline=None)
    @given(hnp.arrays(np.float32, (3, 5),
                      elements=st.floats(-50, 50, width=32)))
    def test_rows_sum_to_one(self, arr):
        rows = softmax(Tensor(arr), axis=-1).data.sum(axis=-1)
        np.testing.assert_allclose(rows, 1.0, atol=1e-6)


class TestDropout:
    def test_eval_is_identity(self):
        x = Tensor(np.random.default_rng(0).normal(size=(3, 3)))
        assert dropout(x, 0.5, EVAL) is x

    def test_train_needs_rng(self):
        with pytest.raises(ContractError):
            dropout(Tensor(np.ones(3)), 0.5, TRAIN)

    def test_train_deterministic_given_seed(self):
        x = Tensor(np.ones((100,)))
        a = dropout(x, 0.3, TRAIN, rng=7).data
        b = dropout(x, 0.3, TRAIN, rng=7).data
        np.testing.assert_array_equal(a, b)
        # inverted scaling: surviving entries are 1/(1-p)
        kept = a[a != 0]
        np.testing.assert_allclose(kept, 1.0 / 0.7, rtol=1e-6)

    def test_bad_rate(self):
        with pytest.raises(ConfigError):
            dropout(Tensor(np.ones(3)), 1.0, TRAIN, rng=0)


class TestBatchNorm:
    def test_train_normalizes(self):
        rng = np.random.default_rng(5)
        x = Tensor(rng.normal(3.0, 2.0, size=(64, 4)))
        g = Tensor(np.ones(4))
        b = Tensor(np.zeros(4))
        rm, rv = np.zeros(4), np.ones(4)
        y = batchnorm(x, g, b, rm, rv, mode=TRAIN).data
        np.testing.assert_allclose(y.mean(axis=0), 0.0, atol=1e-5)
        np.testing.assert_allclose(y.std(axis=0), 1.0, atol=1e-3)
        assert not np.allclose(rm, 0.0)  # running stats updated

    def test_eval_uses_running_stats(self):
        x = Tensor(np.array([[2.0], [4.0]]))
        g, b = Tensor(np.ones(1)), Tensor(np.zeros(1))
        rm, rv = np.array([1.0]), np.array([4.0])
        y = batchnorm(x, g, b, rm, rv, eps=0.0, mode=EVAL).data
        np.testing.assert_allclose(y, [[0.5], [1.5]])

    def test_train_requires_batch(self):
        with pytest.raises(ContractError):
            batchnorm(Tensor(np.ones((1, 3))), Tensor(np.ones(3)),
                      Tensor(np.zeros(3)), np.zeros(3), np.ones(3), mode=TRAIN)


class TestLossOps:
    def test_mse_hand_case(self):
        # N=1, d=3, difference (1,1,1) -> 3
        a = Tensor([[1.0, 1.0, 1.0]])
        b = Tensor([[0.0, 0.0, 0.0]])
        assert mse(a, b).item() == pytest.approx(3.0)

    def test_mse_scaling_homogeneity(self):
        rng = np.random.default_rng(1)
        a = Tensor(rng.normal(size=(4, 3)))
        b = Tensor(rng.normal(size=(4, 3)))
        base = mse(a, b).item()
        scaled = mse(a * 2.0, b * 2.0).item()
        assert scaled == pytest.approx(4.0 * base, rel=1e-5)

    def test_mse_backward_convention(self):
        # loss = sum((x-0)^2)/1 -> d/dx = 2x = 4 at x=2
        x = Tensor([2.0], requires_grad=True)
        mse(x, Tensor([0.0])).backward()
        np.testing.assert_allclose(x.grad, [4.0])

    def test_mse_shape_mismatch(self):
        with pytest.raises(ContractError):
            mse(Tensor(np.ones((2, 2))), Tensor(np.ones((2, 3))))

    def test_cross_entropy_uniform(self):
        logits = Tensor(np.zeros((2, 11)))
        loss = cross_entropy(logits, np.array([0, 10]))
        assert loss.item() == pytest.approx(np.log(11.0), rel=1e-6)

    def test_cross_entropy_label_range(self):
        with pytest.raises(ContractError, match="label"):
            cross_entropy(Tensor(np.zeros((1, 3))), np.array([3]))

    def test_cross_entropy_gradient_oracle(self):
        # d/dz of -log softmax(z)[y] is softmax(z) - onehot(y), / batch
        rng = np.random.default_rng(2)
        z = rng.normal(size=(3, 5)).astype(np.float64)
        y = np.array([1, 4, 0])
        logits = Tensor(z, requires_grad=True, dtype=np.float64)
        cross_entropy(logits, y).backward()
        e = np.exp(z - z.max(axis=1, keepdims=True))
        p = e / e.sum(axis=1, keepdims=True)
        p[np.arange(3), y] -= 1.0
        np.testing.assert_allclose(logits.grad, p / 3.0, atol=1e-12)


def test_mean_matches_numpy():
    rng = np.random.default_rng(9)
    x = rng.normal(size=(3, 4, 5)).astype(np.float32)
    np.testing.assert_allclose(mean(Tensor(x), axis=1).data, x.mean(axis=1), atol=1e-6)
