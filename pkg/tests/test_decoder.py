import numpy as np
import pytest

from former.decoder import (
    decode, extract_coord, in_joint_phase, init_decoder, loss_confidence, loss_heatmap, total_loss,
)
from former.errors import ContractError, ShapeError
from former.layers import Initializer, LinearParams
from former.numerics import Tensor, check_gradient, seeded_rng, sum_sq
from runtime.config import ModelConfig, TrainConfig
from tools.synthdata import make_heatmap_label

CFG = ModelConfig(num_landmarks=4, feature_dim=8, heatmap_dim=16, heads=2, image_size=32, intra_group=False)


def test_zero_decoder_gives_zero_heatmap():
    p = init_decoder(Initializer(0), CFG).x
    zero = lambda lp: LinearParams(Tensor(np.zeros_like(lp.weight.data)), Tensor(np.zeros_like(lp.bias.data)))  # noqa: E731
    p.w1, p.w2 = zero(p.w1), zero(p.w2)
    out = decode(Tensor(seeded_rng(0).normal(size=(4, 8))), p)
    assert out.shape == (4, 16)
    assert not out.data.any()


def test_decode_is_deterministic():
    p = init_decoder(Initializer(0), CFG).y
    f = Tensor(seeded_rng(1).normal(size=(4, 8)))
    np.testing.assert_array_equal(decode(f, p).data, decode(f, p).data)


def test_decode_gradient():
    p = init_decoder(Initializer(2), CFG).x
    f = Tensor(seeded_rng(3).normal(size=(4, 8)), requires_grad=True)
    check_gradient(lambda: sum_sq(decode(f, p)), f, tol=1e-4)


def test_extract_coord_bin_center_and_ties():
    onehot = np.zeros(8)
    onehot[0] = 1.0
    assert extract_coord(onehot, 64) == pytest.approx(4.0)
    assert extract_coord(np.ones(8), 64) == pytest.approx(4.0)
    onehot = np.zeros(8)
    onehot[5] = 1.0
    assert extract_coord(onehot, 64) == pytest.approx(44.0)
    with pytest.raises(ShapeError):
        extract_coord(np.ones(1), 64)


@pytest.mark.parametrize("coord", [0.0, 3.3, 15.99, 16.0, 23.7, 31.9])
def test_extract_recovers_label_within_half_a_bin(coord):
    label = make_heatmap_label(coord, 32, 16, 1.5)
    assert abs(extract_coord(label, 32) - coord) <= 32 / (2 * 16) + 1e-9


def test_loss_heatmap_values():
    labels = np.zeros((1, 2, 2))
    assert loss_heatmap(Tensor(labels[:, 0]), Tensor(labels[:, 1]), labels).item() == 0.0
    pred_x = Tensor([[0.3, -0.4]])
    assert loss_heatmap(pred_x, Tensor([[0.0, 0.0]]), labels).item() == pytest.approx(0.25)
    with pytest.raises(ShapeError):
        loss_heatmap(Tensor(np.zeros((1, 3))), Tensor(np.zeros((1, 2))), labels)


def test_loss_heatmap_order_invariant():
    rng = seeded_rng(4)
    px, py = rng.normal(size=(5, 3, 8)), rng.normal(size=(5, 3, 8))
    labels = rng.uniform(size=(5, 3, 2, 8))
    perm = rng.permutation(5)
    a = loss_heatmap(Tensor(px), Tensor(py), labels).item()
    b = loss_heatmap(Tensor(px[perm]), Tensor(py[perm]), labels[perm]).item()
    assert a == pytest.approx(b, rel=1e-5)


def test_loss_confidence_values():
    labels = np.array([[1.0, 1.0]])
    assert loss_confidence([(Tensor([[1.0]]), Tensor([[1.0]]))], labels).item() == 0.0
    assert loss_confidence([(Tensor([[0.5]]), Tensor([[0.5]]))], labels).item() == pytest.approx(0.5)
    two_blocks = [(Tensor([[0.5]]), Tensor([[0.5]]))] * 2
    assert loss_confidence(two_blocks, labels).item() == pytest.approx(1.0)
    with pytest.raises(ShapeError):
        loss_confidence([], labels)


def test_total_loss_schedule():
    cfg = TrainConfig(lambda_h=0.9, lambda_c=0.1, epochs=8)
    l_h, l_c = Tensor(2.0), Tensor(4.0)
    assert total_loss(l_h, l_c, cfg, 1).item() == pytest.approx(2.2)
    assert total_loss(l_h, l_c, cfg, 4).item() == pytest.approx(2.2)
    assert total_loss(l_h, l_c, cfg, 5).item() == 2.0
    assert total_loss(l_h, l_c, cfg, 8).item() == 2.0
    assert total_loss(l_h, None, cfg, 1).item() == pytest.approx(1.8)


def test_epoch_out_of_range():
    cfg = TrainConfig(epochs=4)
    assert in_joint_phase(2, cfg) and not in_joint_phase(3, cfg)
    for bad in (0, 5):
        with pytest.raises(ContractError):
            in_joint_phase(bad, cfg)
