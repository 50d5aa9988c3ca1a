"""Optimizer update rules and state persistence."""

import numpy as np
import pytest

from ptgnn.errors import ConfigError, NumericError
from ptgnn.numerics import SGD, Adam, Tensor


def test_sgd_single_step():
    p = Tensor([0.0], requires_grad=True)
    p.grad = np.array([1.0], dtype=np.float32)
    SGD({"p": p}, lr=0.1).step()
    np.testing.assert_allclose(p.data, [-0.1])


def test_zero_grad_leaves_params_unchanged():
    p = Tensor([1.5], requires_grad=True)
    p.grad = np.array([0.0], dtype=np.float32)
    opt = Adam({"p": p}, lr=0.1)
    opt.step()
    np.testing.assert_allclose(p.data, [1.5])


def test_none_grad_skipped():
    p = Tensor([1.5], requires_grad=True)
    SGD({"p": p}, lr=0.1).step()
    np.testing.assert_allclose(p.data, [1.5])


def test_adam_first_step_magnitude():
    # bias-corrected first step with g=1 moves by ~lr
    p = Tensor([0.0], requires_grad=True)
    p.grad = np.array([1.0], dtype=np.float32)
    Adam({"p": p}, lr=0.01).step()
    assert p.data[0] == pytest.approx(-0.01, rel=1e-4)


def test_nan_gradient_aborts_with_name():
    p = Tensor([0.0], requires_grad=True)
    p.grad = np.array([np.nan], dtype=np.float32)
    with pytest.raises(NumericError, match="badparam"):
        Adam({"badparam": p}, lr=0.01).step()


def test_bad_lr_rejected():
    with pytest.raises(ConfigError):
        SGD({}, lr=0.0)


def test_adam_state_round_trip():
    rng = np.random.default_rng(0)
    p1 = Tensor(rng.normal(size=4).astype(np.float32), requires_grad=True)
    p2 = Tensor(p1.data.copy(), requires_grad=True)
    opt1 = Adam({"p": p1}, lr=0.05)
    opt2 = Adam({"p": p2}, lr=0.05)

    g = rng.normal(size=4).astype(np.float32)
    p1.grad = g.copy()
    opt1.step()
    state = opt1.state_dict()

    p2.grad = g.copy()
    opt2.step()
    opt2.load_state_dict(state)

    # after the same second step both trajectories coincide exactly
    g2 = rng.normal(size=4).astype(np.float32)
    p1.grad = g2.copy()
    p2.grad = g2.copy()
    opt1.step()
    opt2.step()
    np.testing.assert_array_equal(p1.data, p2.data)
