import numpy as np
import pytest

from former.errors import OptimizerError
from former.numerics import Graph, Tensor, seeded_rng, sum_sq
from former.optim import AdamState, adam_step, zero_grads
from runtime.config import TrainConfig
from runtime.state import TrainState

CFG = TrainConfig(learning_rate=1e-3)


def _params(seed=0):
    rng = seeded_rng(seed)
    return {"a": Tensor(rng.normal(size=(3, 2)), requires_grad=True),
            "b": Tensor(rng.normal(size=4), requires_grad=True)}


def test_zero_gradient_leaves_params_and_decays_moments():
    params = _params()
    before = {k: p.data.copy() for k, p in params.items()}
    state = AdamState.for_params(params)
    adam_step(params, state, CFG)
    for k, p in params.items():
        np.testing.assert_array_equal(p.data, before[k])

    state.m["a"][:] = 1.0
    state.v["a"][:] = 1.0
    adam_step(params, state, CFG)
    np.testing.assert_allclose(state.m["a"], 0.9)
    np.testing.assert_allclose(state.v["a"], 0.999)
    assert state.step == 2


def test_first_step_moves_by_lr_against_the_gradient():
    params = _params()
    grads = {"a": np.array([[2.0, -3.0], [0.5, -0.1], [7.0, 1.0]]), "b": np.array([1.0, -1.0, 4.0, -9.0])}
    before = {k: p.data.copy() for k, p in params.items()}
    for k, p in params.items():
        p.grad = grads[k].astype(np.float32)
    adam_step(params, AdamState.for_params(params), CFG)
    for k, p in params.items():
        np.testing.assert_allclose(before[k] - p.data, 1e-3 * np.sign(grads[k]), rtol=1e-3)


def test_non_finite_gradient_changes_nothing():
    params = _params()
    state = AdamState.for_params(params)
    params["a"].grad = np.ones((3, 2), dtype=np.float32)
    params["b"].grad = np.array([1.0, np.nan, 0.0, 0.0], dtype=np.float32)
    before = params["a"].data.copy()
    with pytest.raises(OptimizerError, match="b"):
        adam_step(params, state, CFG)
    np.testing.assert_array_equal(params["a"].data, before)
    assert state.step == 0 and not state.m["a"].any()


def test_missing_moment_names_parameter():
    params = _params()
    state = AdamState.for_params({"a": params["a"]})
    with pytest.raises(OptimizerError, match="b"):
        adam_step(params, state, CFG)


def _trajectory(seed):
    params = _params(seed)
    state = AdamState.for_params(params)
    target = Tensor(np.ones(4))
    for _ in range(5):
        zero_grads(params)
        with Graph() as g:
            loss = sum_sq(params["a"]) + sum_sq(params["b"] - target)
        g.backward(loss)
        adam_step(params, state, CFG)
    return {k: p.data.copy() for k, p in params.items()}


def test_identical_runs_are_bit_identical():
    a, b = _trajectory(3), _trajectory(3)
    for k in a:
        np.testing.assert_array_equal(a[k], b[k])


def test_train_state_improvement():
    s = TrainState()
    assert s.improved(5.0)
    s.best_val = 4.0
    assert s.improved(3.9) and not s.improved(4.0)
