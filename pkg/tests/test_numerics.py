import numpy as np
import pytest

from former.errors import ConfigError, ContractError, NumericsError, ShapeError
from former.numerics import (
    Graph, Tensor, add, check_gradient, concat, conv1d, conv2d, inference, layer_norm, matmul, mean,
    mul, relu, reshape, same_padding, scale, seeded_rng, select, sigmoid, softmax, stack, sum_all,
    sum_sq, take, transpose,
)


def param(a):
    return Tensor(np.asarray(a, dtype=np.float32), requires_grad=True)


# ── forward values ────────────────────────────────────────────────────────────

def test_matmul_identity_and_hand_values():
    m = Tensor([[1, 2], [3, 4]])
    np.testing.assert_array_equal(matmul(Tensor(np.eye(2)), m).data, m.data)
    out = matmul(Tensor([[1, 0], [0, 0]]), Tensor([[5, 6], [7, 8]]))
    np.testing.assert_array_equal(out.data, [[5, 6], [0, 0]])


def test_matmul_rejects_inner_mismatch():
    with pytest.raises(ShapeError) as exc:
        matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
    assert exc.value.dims == [[2, 3], [2, 3]]


def test_matmul_broadcasts_batches():
    a = Tensor(np.ones((4, 2, 3)))
    b = Tensor(np.ones((3, 5)))
    assert matmul(a, b).shape == (4, 2, 5)


@pytest.mark.parametrize("x, expected", [
    ([0.0, 0.0], [0.5, 0.5]),
    ([1.0, 2.0, 3.0], [0.09003, 0.24473, 0.66524]),
])
def test_softmax_values(x, expected):
    np.testing.assert_allclose(softmax(Tensor(x)).data, expected, atol=1e-5)


def test_softmax_shift_invariant_and_normalised():
    x = seeded_rng(3).normal(size=(5, 7))
    a = softmax(Tensor(x)).data
    b = softmax(Tensor(x + 40.0)).data
    np.testing.assert_allclose(a, b, atol=1e-6)
    np.testing.assert_allclose(a.sum(axis=-1), 1.0, atol=1e-6)
    assert np.all(a > 0)


def test_layer_norm_cases():
    ones, zeros = Tensor(np.ones(2)), Tensor(np.zeros(2))
    np.testing.assert_allclose(layer_norm(Tensor([1.0, 3.0]), ones, zeros).data, [-1, 1], atol=1e-3)
    np.testing.assert_array_equal(layer_norm(Tensor(np.full(4, 2.5)), Tensor(np.ones(4)), Tensor(np.zeros(4))).data, 0)
    bias = Tensor([0.3, -0.7])
    np.testing.assert_allclose(layer_norm(Tensor([4.0, 9.0]), Tensor(np.zeros(2)), bias).data, bias.data)


def test_layer_norm_needs_two_entries():
    with pytest.raises(ConfigError):
        layer_norm(Tensor([[1.0]]), Tensor([1.0]), Tensor([0.0]))


def test_conv1d_identity_and_box_filter():
    x = Tensor([[1.0, 2.0, 3.0, 4.0]])
    ident = conv1d(x, Tensor([[[0.0, 1.0, 0.0]]]), Tensor([0.0]), padding=same_padding(3))
    np.testing.assert_array_equal(ident.data, x.data)
    box = conv1d(x, Tensor([[[1.0, 1.0, 1.0]]]), Tensor([0.0]), padding=1)
    np.testing.assert_array_equal(box.data, [[3, 6, 9, 7]])


def test_conv1d_stride_two_halves_even_length():
    x = Tensor(np.ones((3, 8)))
    out = conv1d(x, Tensor(np.ones((2, 3, 3))), Tensor(np.zeros(2)), stride=2, padding=1)
    assert out.shape == (2, 4)


def test_conv1d_rejects_channel_mismatch():
    with pytest.raises(ShapeError):
        conv1d(Tensor(np.ones((2, 5))), Tensor(np.ones((1, 3, 3))), Tensor(np.zeros(1)))


def test_same_padding_needs_odd_kernel():
    with pytest.raises(ConfigError):
        same_padding(4)


def test_elementwise_values():
    np.testing.assert_array_equal(relu(Tensor([-1.0, 2.0])).data, [0, 2])
    assert sigmoid(Tensor(0.0)).item() == pytest.approx(0.5)
    assert sum_sq(Tensor([3.0, 4.0])).item() == pytest.approx(25.0)
    s = sigmoid(Tensor([-200.0, 0.0, 200.0])).data
    assert np.all(np.diff(s) >= 0) and s[0] >= 0 and s[-1] <= 1


def test_non_finite_value_names_the_node():
    with Graph():
        x = param([1.0])
        with pytest.raises(NumericsError, match="'mul'"):
            mul(x, Tensor([np.inf]))


# ── graph mechanics ───────────────────────────────────────────────────────────

def test_graph_is_consumed_once():
    x = param([1.0, 2.0])
    with Graph() as g:
        loss = sum_sq(x)
    g.backward(loss)
    np.testing.assert_allclose(x.grad, [2.0, 4.0])
    with pytest.raises(ContractError):
        g.backward(loss)


def test_inference_records_nothing():
    x = param([1.0, 2.0])
    with Graph() as g, inference():
        out = sum_sq(x)
    assert len(g) == 0
    assert not out.requires_grad


def test_gradients_accumulate_over_reuse():
    x = param([1.5])
    with Graph() as g:
        loss = sum_all(add(mul(x, x), x))
    g.backward(loss)
    np.testing.assert_allclose(x.grad, [4.0])


# ── finite differences ───────────────────────────────────────────────────────

def test_check_gradient_sum_sq():
    x = param(seeded_rng(0).normal(size=(3, 4)))
    assert check_gradient(lambda: sum_sq(x), x) < 1e-4


def test_check_gradient_constant_is_zero():
    x = param([1.0, 2.0])
    c = Tensor([5.0])
    assert check_gradient(lambda: sum_all(add(scale(x, 0.0), c)), x) < 1e-12


def test_check_gradient_step_range():
    x = param([1.0])
    with pytest.raises(ConfigError):
        check_gradient(lambda: sum_sq(x), x, step=0.5)


def test_matmul_gradient_matches_differences():
    rng = seeded_rng(1)
    a = param(rng.normal(size=(3, 4)))
    b = Tensor(rng.normal(size=(4, 2)))
    assert check_gradient(lambda: sum_all(matmul(a, b)), a) < 1e-6
    x = param(rng.normal(size=(3, 4)))
    w = Tensor(rng.normal(size=(3, 4)))
    check_gradient(lambda: sum_all(mul(x, w)), x, tol=1e-6)


@pytest.mark.parametrize("build", [
    lambda x, w: sum_sq(softmax(matmul(x, w))),
    lambda x, w: sum_sq(layer_norm(x, Tensor(np.linspace(0.5, 1.5, 4)), Tensor(np.zeros(4)))),
    lambda x, w: sum_sq(sigmoid(transpose(x))),
    lambda x, w: sum_sq(mean(concat([x, scale(x, 2.0)], axis=0), axis=1)),
    lambda x, w: sum_sq(stack([select(x, (slice(None), 0)), select(x, (slice(None), 2))], axis=1)),
    lambda x, w: sum_sq(take(reshape(x, (4, 3)), [0, 2, 2], axis=0)),
    lambda x, w: sum_sq(relu(sub_shift(x))),
])
def test_op_gradients(build):
    rng = seeded_rng(2)
    x = param(rng.normal(size=(3, 4)))
    w = Tensor(rng.normal(size=(4, 4)))
    assert check_gradient(lambda: build(x, w), x) < 1e-4


def sub_shift(x):
    # keep every entry away from the relu kink
    return add(x, Tensor(np.where(np.abs(x.data) < 0.05, 0.2, 0.0)))


def test_conv_gradients():
    rng = seeded_rng(4)
    x = param(rng.normal(size=(2, 3, 9)))
    k = param(rng.normal(size=(4, 3, 3)))
    b = Tensor(rng.normal(size=4))
    assert check_gradient(lambda: sum_sq(conv1d(x, k, b, stride=2, padding=1)), x) < 1e-4
    assert check_gradient(lambda: sum_sq(conv1d(x, k, b, padding=1)), k) < 1e-4
    img = param(rng.normal(size=(1, 1, 6, 6)))
    k2 = Tensor(rng.normal(size=(2, 1, 3, 3)))
    assert check_gradient(lambda: sum_sq(conv2d(img, k2, Tensor(np.zeros(2)), stride=2, padding=1)), img) < 1e-4


def test_check_gradient_restores_state():
    x = param([1.0, 2.0])
    other = param([3.0, 4.0])
    other.grad = np.array([7.0, 7.0], dtype=np.float32)
    check_gradient(lambda: sum_all(mul(x, other)), x)
    assert x.data.dtype == np.float32
    assert x.grad is None
    np.testing.assert_array_equal(other.grad, [7.0, 7.0])


RANDOM_OPS = [
    ("matmul", lambda x, w, k, away: sum_sq(matmul(x, w))),
    ("softmax", lambda x, w, k, away: sum_sq(softmax(matmul(x, w)))),
    ("layer_norm", lambda x, w, k, away: sum_sq(layer_norm(x, Tensor(np.linspace(0.5, 1.5, 4)), select(w, 0)))),
    ("sigmoid", lambda x, w, k, away: sum_sq(sigmoid(mul(x, select(w, slice(0, 3)))))),
    ("relu", lambda x, w, k, away: sum_sq(relu(add(x, away)))),
    ("mean", lambda x, w, k, away: sum_sq(mean(concat([x, scale(x, -0.5)], axis=0), axis=0))),
    ("take", lambda x, w, k, away: sum_sq(take(reshape(x, (6, 2)), [5, 0, 0], axis=0))),
    ("conv1d", lambda x, w, k, away: sum_sq(conv1d(reshape(x, (1, 3, 4)), k, select(w, 0), padding=1))),
]


def test_random_gradient_instances():
    """Every op family, one hundred random draws from U(-1, 1)."""
    for seed in range(100):
        name, build = RANDOM_OPS[seed % len(RANDOM_OPS)]
        rng = seeded_rng(1000 + seed)
        x = param(rng.uniform(-1, 1, size=(3, 4)))
        w = Tensor(rng.uniform(-1, 1, size=(4, 4)))
        k = Tensor(rng.uniform(-1, 1, size=(4, 3, 3)))
        away = Tensor(np.where(np.abs(x.data) < 0.05, 0.2, 0.0))
        err = check_gradient(lambda: build(x, w, k, away), x, step=1e-4)
        assert err < 1e-3, f"{name} (seed {seed}): {err:.2e}"
