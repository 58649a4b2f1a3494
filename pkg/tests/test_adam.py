"""Adam update rules: zero-grad fixpoint, first-step magnitude, convergence."""

import numpy as np
import pytest

from srt import tensor as T
from srt.tensor import Tensor, AdamState, adam_step, GradientError, backward


def test_zero_grad_leaves_params_unchanged():
    p = Tensor(np.array([1.0, -2.0]), requires_grad=True)
    p.grad = np.zeros(2)
    before = p.data.copy()
    state = adam_step({"p": p}, AdamState(), lr=0.1)
    assert np.array_equal(p.data, before)
    assert np.all(state.m["p"] == 0) and np.all(state.v["p"] == 0)
    assert state.step == 1


def test_first_step_is_minus_lr_for_unit_grad():
    # bias correction makes m-hat = v-hat = 1 at step 1, so the update is -lr
    p = Tensor(np.array([0.0]), requires_grad=True)
    p.grad = np.ones(1)
    adam_step({"p": p}, AdamState(), lr=0.1)
    assert abs(float(p.data[0]) + 0.1) < 1e-9


def test_step_counter_increments():
    p = Tensor(np.array([0.0]), requires_grad=True)
    state = AdamState()
    for k in range(1, 4):
        p.grad = np.ones(1)
        adam_step({"p": p}, state, lr=0.01)
        assert state.step == k


def test_nan_gradient_names_parameter():
    p = Tensor(np.array([0.0]), requires_grad=True)
    p.grad = np.array([np.nan])
    with pytest.raises(GradientError, match="theta_bad"):
        adam_step({"theta_bad": p}, AdamState(), lr=0.1)


def test_invalid_lr_rejected():
    p = Tensor(np.array([0.0]), requires_grad=True)
    p.grad = np.ones(1)
    with pytest.raises(ValueError):
        adam_step({"p": p}, AdamState(), lr=0.0)


def test_quadratic_converges_in_100_steps():
    x = Tensor(np.array([0.0]), requires_grad=True)
    state = AdamState()
    for _ in range(100):
        x.zero_grad()
        diff = x - 3.0
        backward(T.tsum(diff * diff))
        adam_step({"x": x}, state, lr=0.1)
    assert abs(float(x.data[0]) - 3.0) < 0.1
