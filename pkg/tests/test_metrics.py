import math

import numpy as np
import pytest

from former.errors import ConfigError, ShapeError
from former.numerics import seeded_rng
from former.structural import GROUP_NAMES, default_partition
from tools.metrics import (
    TrackResult, face_normalizer, mean_confidence, nrmse, per_group_nrmse, stability_error,
)


def _track(t=4, n=7, seed=0):
    return seeded_rng(seed).uniform(5, 60, size=(t, n, 2))


def test_exact_prediction_scores_zero():
    gt = _track()
    r = TrackResult.from_coords(gt, gt, 64)
    assert nrmse(r) == 0.0 and stability_error(r) == 0.0


def test_single_point_nrmse():
    r = TrackResult([[[0.6, 0.8]]], [[[0.0, 0.0]]], 100.0)
    assert nrmse(r) == pytest.approx(1.0)


def test_nrmse_scale_invariance():
    gt = _track()
    pred = gt + seeded_rng(1).normal(size=gt.shape)
    a = nrmse(TrackResult(pred, gt, 50.0))
    b = nrmse(TrackResult(2 * pred, 2 * gt, 100.0))
    assert a == pytest.approx(b)


def test_constant_offset_is_stable():
    gt = _track()
    r = TrackResult.from_coords(gt + np.array([3.0, -2.0]), gt, 64)
    assert nrmse(r) > 0
    assert stability_error(r) == pytest.approx(0.0, abs=1e-12)


def test_stability_hand_value():
    gt = np.zeros((2, 1, 2))
    pred = np.array([[[0.0, 0.0]], [[3.0, 4.0]]])
    assert stability_error(TrackResult(pred, gt, 10.0)) == pytest.approx(50.0)


def test_stability_needs_two_frames():
    with pytest.raises(ConfigError):
        stability_error(TrackResult(np.zeros((1, 2, 2)), np.zeros((1, 2, 2)), 1.0))


def test_face_normalizer():
    assert face_normalizer([[0.0, 0.0], [3.0, 4.0]], 64) == pytest.approx(5.0)
    assert face_normalizer([[7.0, 7.0], [7.0, 7.0]], 64) == pytest.approx(math.sqrt(2) * 64)
    pts = _track(1, 5)[0]
    assert face_normalizer(pts + 11.0, 64) == pytest.approx(face_normalizer(pts, 64))
    with pytest.raises(ShapeError):
        face_normalizer([[1.0, 1.0]], 64)


def test_track_result_validation():
    with pytest.raises(ShapeError):
        TrackResult(np.zeros((2, 3, 2)), np.zeros((2, 4, 2)), 1.0)
    with pytest.raises(ConfigError):
        TrackResult(np.zeros((2, 3, 2)), np.zeros((2, 3, 2)), 0.0)


def test_masked_subsets():
    gt = np.zeros((2, 2, 2))
    pred = gt.copy()
    pred[0, 1] = [3.0, 4.0]
    r = TrackResult(pred, gt, 10.0)
    mask = np.array([[False, True], [False, False]])
    assert nrmse(r, mask) == pytest.approx(50.0)
    assert nrmse(r, ~mask) == 0.0
    assert math.isnan(nrmse(r, np.zeros((2, 2), dtype=bool)))
    with pytest.raises(ShapeError):
        nrmse(r, np.ones((3, 2), dtype=bool))


def test_per_group_breakdown():
    partition = default_partition(14)
    gt = _track(3, 14)
    pred = gt.copy()
    pred[:, list(partition.groups[5])] += 2.0     # mouth only
    groups = per_group_nrmse(TrackResult.from_coords(pred, gt, 64), partition)
    assert list(groups) == list(GROUP_NAMES)
    assert groups["mouth"] > 0
    assert all(v == 0.0 for k, v in groups.items() if k != "mouth")


def test_mean_confidence():
    conf = np.array([[[0.2, 0.4], [1.0, 1.0]]])
    mask = np.array([[True, False]])
    assert mean_confidence(conf, mask) == pytest.approx(0.3)
    assert mean_confidence(conf, ~mask) == pytest.approx(1.0)
    assert math.isnan(mean_confidence(None, mask))
