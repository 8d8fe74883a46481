import dataclasses

import numpy as np
import pytest

import former.layers as layers
from former.encoder import Representation1D, Stage
from former.errors import ContractError, NumericsError, ShapeError
from former.layers import Initializer, LinearParams
from former.numerics import Tensor, inference, precision, seeded_rng
from former.temporal import (
    ConfidenceParams, TemporalStack, WindowBuffer, apply_alp, ce_mha, confidence_score, init_temporal,
    simple_mix, temporal_refine_sequence, temporal_refine_step,
)
from runtime.config import ModelConfig

CFG = ModelConfig(num_landmarks=3, feature_dim=4, heads=2, window=3, blocks=1, intra_group=False)


def _params(cfg=CFG, seed=0):
    return init_temporal(Initializer(seed), cfg)


def _sequence(cfg, t, seed=0):
    rng = seeded_rng(seed)
    data = rng.normal(size=(t, 2, cfg.num_landmarks, cfg.feature_dim)).astype(np.float32)
    xs = [Representation1D("x", Tensor(d[0])) for d in data]
    ys = [Representation1D("y", Tensor(d[1])) for d in data]
    return xs, ys


def _refined_x(steps):
    return np.stack([s.refined[0][0].values.data for s in steps])


# ── confidence / alp ─────────────────────────────────────────────────────────

def test_confidence_score_is_half_at_zero():
    z = lambda *shape: Tensor(np.zeros(shape))  # noqa: E731
    p = ConfidenceParams(LinearParams(z(2, 4), z(2)), LinearParams(z(1, 2), z(1)))
    np.testing.assert_allclose(confidence_score(z(3, 4), p).data, 0.5)


def test_confidence_score_in_open_interval():
    p = _params().x.confidence
    s = Tensor(seeded_rng(1).normal(size=(50, 4)) * 30)
    out = confidence_score(s, p).data
    assert out.shape == (50, 1)
    assert np.all(out > 0) and np.all(out < 1)


def test_alp_cases():
    window = Tensor(seeded_rng(2).normal(size=(3, 2, 4)))
    np.testing.assert_array_equal(apply_alp(window, Tensor(np.zeros((3, 3, 4)))).data, window.data)

    table = Tensor(seeded_rng(3).normal(size=(3, 3, 4)))
    one = Tensor(window.data[:, :1])
    np.testing.assert_allclose(apply_alp(one, table).data, window.data[:, :1] + table.data[:, :1])

    same = Tensor(np.repeat(window.data[:1], 3, axis=0))
    out = apply_alp(same, table).data
    assert not np.allclose(out[0], out[1])

    with pytest.raises(ShapeError):
        apply_alp(Tensor(np.zeros((3, 4, 4))), table)


# ── ce_mha ────────────────────────────────────────────────────────────────────

def _single_head():
    cfg = ModelConfig(num_landmarks=1, feature_dim=2, heads=1, window=2, intra_group=False)
    p = _params(cfg).x
    head = p.heads["head1"]
    head.wq = Tensor(np.eye(2))
    head.wk = Tensor(np.eye(2))
    return p


def test_single_row_window_weight_is_one():
    p = _params().x
    window = Tensor(seeded_rng(4).normal(size=(3, 1, 4)))
    _, weights = ce_mha(window, Tensor(np.full((3, 1, 1), 0.3)), p)
    for w in weights:
        np.testing.assert_array_equal(w.data, 1.0)


def test_confidence_rescales_equal_logits():
    p = _single_head()
    row = np.array([2 ** 0.25, 0.0])      # |row|² / sqrt(2) = 1
    window = Tensor(np.stack([row, row])[None])
    _, weights = ce_mha(window, Tensor([[[1.0, 0.5]]]), p)
    np.testing.assert_allclose(weights[0].data.reshape(-1), [0.6225, 0.3775], atol=1e-4)


def test_lower_confidence_lowers_weight():
    p = _single_head()
    row = np.array([1.3, 0.4])
    window = Tensor(np.stack([row, row])[None])
    previous = None
    for c in (1.0, 0.8, 0.5, 0.2, 0.05):
        _, weights = ce_mha(window, Tensor([[[1.0, c]]]), p)
        a = float(weights[0].data.reshape(-1)[1])
        if previous is not None:
            assert a < previous
        previous = a


def _raw_logits(window, head):
    q = window[:, :1] @ head.wq.data.T
    k = window @ head.wk.data.T
    return (q @ np.swapaxes(k, -1, -2))[:, 0] / np.sqrt(head.wq.shape[0])


def test_attention_weights_over_random_windows():
    """Ten parameter draws, a hundred landmark rows each."""
    for seed in range(10):
        p = _params(seed=seed).x
        rng = seeded_rng(200 + seed)
        rows = int(rng.integers(1, CFG.window + 1))
        window = rng.uniform(-2, 2, size=(100, rows, 4))
        conf = rng.uniform(0.05, 1.0, size=(100, 1, rows))
        with inference(), precision(np.float64):
            _, weights = ce_mha(Tensor(window), Tensor(conf), p)
        for a in weights:
            assert a.shape == (100, 1, rows)
            assert (a.data >= 0).all()
            np.testing.assert_allclose(a.data.sum(axis=-1), 1.0, atol=1e-6)
            if rows == 1:
                np.testing.assert_array_equal(a.data, 1.0)


def test_lowering_confidence_lowers_weight_of_positive_logits():
    for seed in range(10):
        p = _params(seed=seed).x
        rng = seeded_rng(300 + seed)
        window = rng.uniform(-2, 2, size=(100, 3, 4))
        conf = rng.uniform(0.2, 1.0, size=(100, 1, 3))
        lowered = conf.copy()
        lowered[..., 2] *= 0.5
        with inference(), precision(np.float64):
            _, before = ce_mha(Tensor(window), Tensor(conf), p)
            _, after = ce_mha(Tensor(window), Tensor(lowered), p)
        for head, a, b in zip(p.heads.values(), before, after):
            z = _raw_logits(window, head)[:, 2]
            up, down = z > 1e-6, z < -1e-6
            assert (b.data[up, 0, 2] < a.data[up, 0, 2]).all()
            assert (b.data[down, 0, 2] > a.data[down, 0, 2]).all()


def test_queries_come_from_the_current_row_only(monkeypatch):
    seen = []
    real_softmax = layers.softmax

    def recording_softmax(x, axis=-1):
        seen.append(x.data.copy())
        return real_softmax(x, axis)

    monkeypatch.setattr(layers, "softmax", recording_softmax)
    p = _params().x
    rng = seeded_rng(9)
    window = rng.normal(size=(3, 3, 4))
    moved = window.copy()
    moved[:, 1:] += rng.normal(size=(3, 2, 4))
    with inference():
        ce_mha(Tensor(window), None, p)
        ce_mha(Tensor(moved), None, p)
    heads = len(p.heads)
    assert len(seen) == 2 * heads
    for before, after in zip(seen[:heads], seen[heads:]):
        np.testing.assert_array_equal(before[..., 0], after[..., 0])
        assert (before[..., 1:] != after[..., 1:]).all()


def test_empty_window_rejected():
    with pytest.raises(ContractError):
        ce_mha(Tensor(np.zeros((3, 0, 4))), None, _params().x)


def test_simple_mix_shape():
    window = Tensor(seeded_rng(5).normal(size=(3, 2, 4)))
    cfg = dataclasses.replace(CFG, temporal="simple_mix")
    assert simple_mix(window, _params(cfg).x).shape == (3, 4)


# ── window buffer / recurrence ───────────────────────────────────────────────

def test_buffer_keeps_newest_first_up_to_capacity():
    buf = WindowBuffer(2)
    for t in (1, 2, 3):
        buf.push(t, Tensor(np.full((1, 1), t)), None)
    assert buf.times() == [3, 2]
    with pytest.raises(ContractError):
        buf.check_before(3)
    buf.check_before(4)


def test_first_step_uses_current_frame_only():
    xs, ys = _sequence(CFG, 1)
    buffers = {"x": WindowBuffer(CFG.window - 1), "y": WindowBuffer(CFG.window - 1)}
    sx, sy = temporal_refine_step(1, (xs[0], ys[0]), buffers, _params(), CFG)
    assert sx.refined.stage is Stage.REFINED
    assert all(w.shape == (3, 1, 1) for w in sx.weights)
    assert len(buffers["x"]) == 1 and len(buffers["y"]) == 1


def test_stale_buffer_entry_is_a_contract_error():
    xs, ys = _sequence(CFG, 1)
    stack = TemporalStack([_params()], CFG)
    stack.step(5, (xs[0], ys[0]))
    with pytest.raises(ContractError, match="block 1, t=3"):
        stack.step(3, (xs[0], ys[0]))


def test_window_grows_to_w():
    xs, ys = _sequence(CFG, 5)
    steps = temporal_refine_sequence(xs, ys, [_params()], CFG)
    lengths = [s.weights[0][0][0].shape[-1] for s in steps]
    assert lengths == [1, 2, 3, 3, 3]


def test_recurrence_carries_memory_beyond_the_window():
    cfg = dataclasses.replace(CFG, window=2)
    params = [_params(cfg)]
    xs, ys = _sequence(cfg, 5)
    base = _refined_x(temporal_refine_sequence(xs, ys, params, cfg))
    xs2 = list(xs)
    xs2[0] = Representation1D("x", Tensor(xs[0].values.data + 1.0))
    moved = _refined_x(temporal_refine_sequence(xs2, ys, params, cfg))
    assert np.abs(base[4] - moved[4]).max() > 0


def test_overflow_names_block_time_and_landmark():
    xs, ys = _sequence(CFG, 3)
    data = xs[1].values.data.copy()
    data[1] = 1e20
    xs[1] = Representation1D("x", Tensor(data))
    with pytest.raises(NumericsError, match=r"block 1, t=2, n=1: non-finite value") as exc:
        temporal_refine_sequence(xs, ys, [_params()], CFG)
    assert exc.value.where[0] == 1


def test_chunked_windows_forget_earlier_chunks():
    cfg = dataclasses.replace(CFG, window=2, recurrence=False)
    params = [_params(cfg)]
    xs, ys = _sequence(cfg, 5)
    base = _refined_x(temporal_refine_sequence(xs, ys, params, cfg))
    xs2 = list(xs)
    xs2[0] = Representation1D("x", Tensor(xs[0].values.data + 1.0))
    moved = _refined_x(temporal_refine_sequence(xs2, ys, params, cfg))
    # t=5 starts a fresh chunk
    np.testing.assert_array_equal(base[4], moved[4])
    assert np.abs(base[1] - moved[1]).max() > 0

    full = _refined_x(temporal_refine_sequence(xs, ys, [_params(dataclasses.replace(cfg, recurrence=True))],
                                               dataclasses.replace(cfg, recurrence=True)))
    assert not np.allclose(full[2:], base[2:])


def test_causality_under_truncation():
    xs, ys = _sequence(CFG, 6)
    params = [_params(), _params(seed=1)]
    cfg = dataclasses.replace(CFG, blocks=2)
    full = _refined_x(temporal_refine_sequence(xs, ys, params, cfg))
    prefix = _refined_x(temporal_refine_sequence(xs[:3], ys[:3], params, cfg))
    np.testing.assert_array_equal(full[:3], prefix)


def test_constant_input_settles():
    cfg = dataclasses.replace(CFG, window=3)
    p = _params(cfg)
    for axis in (p.x, p.y):
        for head in axis.heads.values():
            head.wv = Tensor(head.wv.data * 0.1)
    xs, ys = _sequence(cfg, 1)
    stack = TemporalStack([p], cfg)
    outputs = []
    with inference():
        for t in range(1, 5 * cfg.window + 11):
            outputs.append(stack.step(t, (xs[0], ys[0])).refined[0][0].values.data.copy())
    assert np.abs(outputs[-1] - outputs[-2]).max() < 1e-4


def test_disabled_temporal_passes_features_through():
    cfg = dataclasses.replace(CFG, temporal="off")
    assert init_temporal(Initializer(0), cfg) is None
    xs, ys = _sequence(cfg, 2)
    steps = temporal_refine_sequence(xs, ys, [None], cfg)
    np.testing.assert_array_equal(steps[1].final[0].values.data, xs[1].values.data)
    assert steps[1].final[0].stage is Stage.FINAL
    assert steps[1].confidences == [None]
