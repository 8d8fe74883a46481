# tools/metrics.py — OneDF v1
"""
Tracking metrics, all in float64 and reported in percent.

  nrmse            100/(T·N) Σ_t Σ_n ‖p − g‖ / norm_t
  stability_error  100/((T−1)·N) Σ_{t≥2} Σ_n ‖Δp − Δg‖ / norm_t
  face_normalizer  diagonal of the tight GT bounding box (image diagonal if degenerate)

Subset variants take a [T, N] boolean mask and average over the selected
pairs only.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from former.errors import ConfigError, ShapeError
from former.structural import GROUP_NAMES, GroupPartition


@dataclass
class TrackResult:
    pred:       np.ndarray   # [T, N, 2]
    gt:         np.ndarray   # [T, N, 2]
    normalizer: np.ndarray   # [T]

    def __post_init__(self) -> None:
        self.pred = np.asarray(self.pred, dtype=np.float64)
        self.gt = np.asarray(self.gt, dtype=np.float64)
        if self.pred.shape != self.gt.shape or self.pred.ndim != 3 or self.pred.shape[2] != 2:
            raise ShapeError("prediction and ground truth extents differ", self.pred.shape, self.gt.shape)
        norm = np.asarray(self.normalizer, dtype=np.float64)
        self.normalizer = np.broadcast_to(norm, (self.pred.shape[0],)).copy()
        if np.any(self.normalizer <= 0):
            raise ConfigError("normalizer must be > 0 in every frame", "normalizer")

    @classmethod
    def from_coords(cls, pred: np.ndarray, gt: np.ndarray, image_size: int) -> "TrackResult":
        gt = np.asarray(gt, dtype=np.float64)
        norm = np.array([face_normalizer(frame, image_size) for frame in gt])
        return cls(pred, gt, norm)


def face_normalizer(frame_coords: np.ndarray, image_size: int) -> float:
    pts = np.asarray(frame_coords, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise ShapeError("face_normalizer needs at least 2 landmarks", pts.shape)
    span = pts.max(axis=0) - pts.min(axis=0)
    if span[0] <= 0 or span[1] <= 0:
        return math.sqrt(2.0) * image_size
    return float(np.hypot(span[0], span[1]))


def _per_pair_error(r: TrackResult) -> np.ndarray:
    """[T, N] normalised point-to-point error."""
    return np.linalg.norm(r.pred - r.gt, axis=-1) / r.normalizer[:, None]


def nrmse(r: TrackResult, mask: Optional[np.ndarray] = None) -> float:
    err = _per_pair_error(r)
    if mask is None:
        return 100.0 * float(err.mean())
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != err.shape:
        raise ShapeError("mask extent differs from the track", mask.shape, err.shape)
    if not mask.any():
        return float("nan")
    return 100.0 * float(err[mask].mean())


def stability_error(r: TrackResult) -> float:
    if r.pred.shape[0] < 2:
        raise ConfigError(f"stability needs T >= 2, got {r.pred.shape[0]}", "T")
    dp = np.diff(r.pred, axis=0)
    dg = np.diff(r.gt, axis=0)
    err = np.linalg.norm(dp - dg, axis=-1) / r.normalizer[1:, None]
    return 100.0 * float(err.mean())


def per_group_nrmse(r: TrackResult, partition: GroupPartition) -> Dict[str, float]:
    err = _per_pair_error(r)
    return {name: 100.0 * float(err[:, list(group)].mean()) for name, group in zip(GROUP_NAMES, partition.groups)}


def mean_confidence(confidence: Optional[np.ndarray], mask: np.ndarray) -> float:
    """Mean score over the (t, n) pairs selected by mask, both axes pooled."""
    if confidence is None:
        return float("nan")
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        return float("nan")
    return float(np.asarray(confidence, dtype=np.float64)[mask].mean())
