# former/decoder.py — OneDF v1
"""
1D heatmap decoders, peak extraction and the training losses.

  decode:          h = relu(f·W1ᵀ + b1)·W2ᵀ + b2        [.., L] → [.., D]
  extract_coord:   (argmax + 0.5) · S / D              ties go to the lower bin
  loss_heatmap:    Σ_t Σ_n ‖hx − hx*‖² + ‖hy − hy*‖²   (sum, not mean)
  loss_confidence: Σ_blocks Σ_t Σ_n (cx − cx*)² + (cy − cy*)²
  total_loss:      λh·Lh + λc·Lc for e ≤ E/2, Lh afterwards
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from former.errors import ContractError, ShapeError
from former.layers import Initializer, LinearParams, linear
from former.numerics import Tensor, relu, scale, sub, sum_sq
from runtime.config import ModelConfig, TrainConfig


@dataclass
class DecoderAxisParams:
    w1: LinearParams   # L → L
    w2: LinearParams   # L → D


@dataclass
class DecoderParams:
    x: DecoderAxisParams
    y: DecoderAxisParams


def init_decoder(init: Initializer, cfg: ModelConfig) -> DecoderParams:
    def axis() -> DecoderAxisParams:
        return DecoderAxisParams(init.linear(cfg.feature_dim, cfg.feature_dim),
                                 init.linear(cfg.feature_dim, cfg.heatmap_dim))

    return DecoderParams(x=axis(), y=axis())


def decode(f: Tensor, p: DecoderAxisParams) -> Tensor:
    return linear(relu(linear(f, p.w1)), p.w2)


def extract_coord(heatmap, image_size: int) -> np.ndarray:
    """Bin-center coordinate of the peak along the last axis (float64 px)."""
    h = heatmap.data if isinstance(heatmap, Tensor) else np.asarray(heatmap)
    d = h.shape[-1]
    if d < 2:
        raise ShapeError("extract_coord needs at least 2 bins", h.shape)
    # np.argmax returns the first maximum, i.e. the lower index on ties
    return (np.argmax(h, axis=-1).astype(np.float64) + 0.5) * image_size / d


def loss_heatmap(pred_x: Tensor, pred_y: Tensor, labels: np.ndarray) -> Tensor:
    """pred_* [.., D]; labels [.., 2, D] with index 0 = x, 1 = y."""
    labels = np.asarray(labels)
    for pred, target in ((pred_x, labels[..., 0, :]), (pred_y, labels[..., 1, :])):
        if pred.shape != target.shape:
            raise ShapeError("heatmap prediction and label extents differ", pred.shape, target.shape)
    return sum_sq(sub(pred_x, labels[..., 0, :])) + sum_sq(sub(pred_y, labels[..., 1, :]))


def loss_confidence(pred: Sequence[Tuple[Tensor, Tensor]], labels: np.ndarray) -> Tensor:
    """pred: per block (cx, cy), each [.., 1]; labels [.., 2]."""
    labels = np.asarray(labels)
    if not pred:
        raise ShapeError("loss_confidence needs at least one block of scores")
    total = None
    for cx, cy in pred:
        for score, target in ((cx, labels[..., 0:1]), (cy, labels[..., 1:2])):
            if score.shape != target.shape:
                raise ShapeError("confidence prediction and label counts differ", score.shape, target.shape)
        term = sum_sq(sub(cx, labels[..., 0:1])) + sum_sq(sub(cy, labels[..., 1:2]))
        total = term if total is None else total + term
    return total


def in_joint_phase(epoch: int, cfg: TrainConfig) -> bool:
    if not 1 <= epoch <= cfg.epochs:
        raise ContractError(f"epoch {epoch} outside 1..{cfg.epochs}")
    return epoch <= cfg.epochs // 2


def total_loss(l_h: Tensor, l_c: Optional[Tensor], cfg: TrainConfig, epoch: int) -> Tensor:
    """
    Phase 1 blends both terms; phase 2 is the heatmap term alone, and the
    caller should not even build l_c there. A model without confidence
    branches passes l_c=None in both phases.
    """
    if not in_joint_phase(epoch, cfg):
        return l_h
    blended = scale(l_h, cfg.lambda_h)
    if l_c is not None:
        blended = blended + scale(l_c, cfg.lambda_c)
    return blended
