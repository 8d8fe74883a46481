# former/encoder.py — OneDF v1
"""
Backbone 1D representation encoder.

image [S, S] ─ conv2d 1→8 (s2) ─ relu ─ conv2d 8→16 (s2) ─ relu ─┬─ mean over rows ──→ x marginalizer
                                                                 └─ mean over cols ──→ y marginalizer
marginalizer: conv1d 16→16 (s2) ─ relu ─ conv1d 16→16 (s2) ─ relu ─ flatten (F = S)
              ─ per-landmark heads W[N, L, F] ─→ Representation1D [N, L]

All T frames of a sequence run as one batch; frames never interact.

Public API:
  Stage, Representation1D
  AxisEncoderParams, EncoderParams, init_encoder
  encode_frame(image, params, cfg) -> (Sx, Sy)
  encode_sequence(frames, params, cfg) -> ([Sx_1..Sx_T], [Sy_1..Sy_T])
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np

from former.errors import ContractError, NumericsError, ShapeError
from former.layers import ConvParams, Initializer, LinearParams
from former.numerics import Tensor, conv1d, conv2d, inference, matmul, mean, relu, reshape, select
from runtime.config import ModelConfig

AXES = ("x", "y")
TRUNK_CHANNELS = (8, 16)


class Stage(str, Enum):
    RAW = "raw"            # s: backbone output, or a block's input
    REFINED = "refined"    # s′: temporal output
    INTRA = "intra"        # P
    FINAL = "final"        # F


@dataclass
class Representation1D:
    axis:   str
    values: Tensor        # [N, L]
    stage:  Stage = Stage.RAW

    def expect(self, *stages: Stage) -> "Representation1D":
        if self.stage not in stages:
            wanted = " or ".join(s.value for s in stages)
            raise ContractError(f"{self.axis}-representation is '{self.stage.value}', expected {wanted}")
        return self

    def retag(self, stage: Stage) -> "Representation1D":
        """Same values under another stage tag (used when a stage is switched off)."""
        return dataclasses.replace(self, stage=stage)


@dataclass
class AxisEncoderParams:
    marg1: ConvParams
    marg2: ConvParams
    head:  LinearParams   # weight [N, L, F], bias [N, L]


@dataclass
class EncoderParams:
    trunk1: ConvParams
    trunk2: ConvParams
    x: AxisEncoderParams
    y: AxisEncoderParams


def feature_width(image_size: int) -> int:
    """Flattened marginalizer width: 16 channels × S/16 positions."""
    return TRUNK_CHANNELS[-1] * (image_size // 16)


def init_encoder(init: Initializer, cfg: ModelConfig) -> EncoderParams:
    c1, c2 = TRUNK_CHANNELS
    n, dim, width = cfg.num_landmarks, cfg.feature_dim, feature_width(cfg.image_size)

    def axis() -> AxisEncoderParams:
        return AxisEncoderParams(
            marg1=init.conv(c2, c2, 3),
            marg2=init.conv(c2, c2, 3),
            head=LinearParams(init.xavier((n, dim, width), width, dim), init.zeros((n, dim))),
        )

    return EncoderParams(trunk1=init.conv(1, c1, 3, 3), trunk2=init.conv(c1, c2, 3, 3), x=axis(), y=axis())


def _marginal(pooled: Tensor, p: AxisEncoderParams, batch: int) -> Tensor:
    """[B, 16, S/4] → [B, N, L]."""
    h = relu(conv1d(pooled, p.marg1.kernel, p.marg1.bias, stride=2, padding=1))
    h = relu(conv1d(h, p.marg2.kernel, p.marg2.bias, stride=2, padding=1))
    width = h.shape[1] * h.shape[2]
    feat = reshape(h, (batch, 1, width, 1))
    n, dim, _ = p.head.weight.shape
    out = reshape(matmul(p.head.weight, feat), (batch, n, dim))
    return out + p.head.bias


def _encode_batch(frames: Tensor, params: EncoderParams, cfg: ModelConfig) -> Tuple[Tensor, Tensor]:
    """frames [B, S, S] → (sx, sy), each [B, N, L]."""
    s = cfg.image_size
    if frames.ndim != 3 or frames.shape[1:] != (s, s):
        raise ShapeError("encoder: image extent does not match model.image_size", frames.shape[1:], (s, s))
    batch = frames.shape[0]
    x = reshape(frames, (batch, 1, s, s))
    h = relu(conv2d(x, params.trunk1.kernel, params.trunk1.bias, stride=2, padding=1))
    h = relu(conv2d(h, params.trunk2.kernel, params.trunk2.bias, stride=2, padding=1))
    # the x marginal keeps columns and averages rows; y the other way round
    sx = _marginal(mean(h, axis=2), params.x, batch)
    sy = _marginal(mean(h, axis=3), params.y, batch)
    return sx, sy


def encode_frame(image, params: EncoderParams, cfg: ModelConfig) -> Tuple[Representation1D, Representation1D]:
    """image: [S, S] array, or a Tensor when gradients w.r.t. the pixels are wanted."""
    image = image if isinstance(image, Tensor) else Tensor(image)
    if image.ndim != 2:
        raise ShapeError("encode_frame expects one [S, S] image", image.shape)
    sx, sy = _encode_batch(reshape(image, (1,) + image.shape), params, cfg)
    return Representation1D("x", select(sx, 0)), Representation1D("y", select(sy, 0))


def encode_sequence(
    frames: np.ndarray, params: EncoderParams, cfg: ModelConfig
) -> Tuple[List[Representation1D], List[Representation1D]]:
    frames = np.asarray(frames, dtype=np.float32)
    if frames.ndim != 3:
        raise ShapeError("encode_sequence expects frames [T, S, S]", frames.shape)
    s = cfg.image_size
    if frames.shape[1:] != (s, s):
        raise ShapeError(f"frames 0..{len(frames) - 1}: image extent does not match model.image_size",
                         frames.shape[1:], (s, s))
    try:
        sx, sy = _encode_batch(Tensor(frames), params, cfg)
    except NumericsError as e:
        raise e.at(f"frame {_first_failing_frame(frames, params, cfg)}") from e
    xs = [Representation1D("x", select(sx, t)) for t in range(frames.shape[0])]
    ys = [Representation1D("y", select(sy, t)) for t in range(frames.shape[0])]
    return xs, ys


def _first_failing_frame(frames: np.ndarray, params: EncoderParams, cfg: ModelConfig) -> Optional[int]:
    with inference():
        for t, image in enumerate(frames):
            try:
                _encode_batch(Tensor(image[None]), params, cfg)
            except NumericsError:
                return t
    return None
