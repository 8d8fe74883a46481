# former/layers.py — OneDF v1
"""
Parameter containers and the building blocks shared across model stages.

Public API:
  ConvParams, LinearParams, NormParams, FFNParams, HeadParams
  Initializer          one seeded stream; draws happen in construction order
  linear, feed_forward, attend
  walk_tensors(prefix, obj) -> [(dotted_name, Tensor)]
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from former.numerics import (
    Tensor, concat, matmul, mul, relu, scale, seeded_rng, softmax, transpose,
)

ALP_INIT = 0.02


# ─────────────────────────────────────────────────────────────────────────────
# Containers
# ─────────────────────────────────────────────────────────────────────────────

@dataclass
class ConvParams:
    kernel: Tensor
    bias:   Tensor


@dataclass
class LinearParams:
    weight: Tensor   # [out, in]
    bias:   Tensor   # [out]


@dataclass
class NormParams:
    gain: Tensor
    bias: Tensor


@dataclass
class FFNParams:
    w1: LinearParams   # L → 4L
    w2: LinearParams   # 4L → L


@dataclass
class HeadParams:
    wq: Tensor   # [d_h, L]
    wk: Tensor
    wv: Tensor


def flat_field(**kwargs):
    """Dict field whose keys sit directly under the parent name (head1, head2, ...)."""
    return field(metadata={"flatten": True}, **kwargs)


def walk_tensors(prefix: str, obj) -> Iterator[Tuple[str, Tensor]]:
    """Yield every Tensor under obj with a canonical dotted name, in field order."""
    if obj is None:
        return
    if isinstance(obj, Tensor):
        yield prefix, obj
        return
    if isinstance(obj, dict):
        for key, value in obj.items():
            yield from walk_tensors(_join(prefix, key), value)
        return
    if dataclasses.is_dataclass(obj):
        for f in dataclasses.fields(obj):
            value = getattr(obj, f.name)
            name = prefix if f.metadata.get("flatten") else _join(prefix, f.name)
            yield from walk_tensors(name, value)
        return
    raise TypeError(f"cannot walk {type(obj).__name__} at {prefix!r}")


def _join(prefix: str, name: str) -> str:
    return f"{prefix}.{name}" if prefix else name


# ─────────────────────────────────────────────────────────────────────────────
# Initialisation
# ─────────────────────────────────────────────────────────────────────────────

class Initializer:
    """
    Xavier-uniform kernels, zero biases, unit/zero norm affines. Every draw
    comes from one Philox stream, so parameters depend only on the seed and
    the order in which modules build them.
    """

    def __init__(self, seed: int) -> None:
        self.rng = seeded_rng(seed)

    def xavier(self, shape, fan_in: int, fan_out: int) -> Tensor:
        a = math.sqrt(6.0 / (fan_in + fan_out))
        return self.param(self.rng.uniform(-a, a, size=shape))

    def uniform(self, shape, bound: float) -> Tensor:
        return self.param(self.rng.uniform(-bound, bound, size=shape))

    @staticmethod
    def zeros(shape) -> Tensor:
        return Initializer.param(np.zeros(shape))

    @staticmethod
    def ones(shape) -> Tensor:
        return Initializer.param(np.ones(shape))

    @staticmethod
    def param(data: np.ndarray) -> Tensor:
        return Tensor(np.asarray(data, dtype=np.float32), requires_grad=True)

    # ── composite containers ─────────────────────────────────────────────────

    def linear(self, n_in: int, n_out: int) -> LinearParams:
        return LinearParams(self.xavier((n_out, n_in), n_in, n_out), self.zeros((n_out,)))

    def conv(self, c_in: int, c_out: int, *kernel: int) -> ConvParams:
        area = int(np.prod(kernel))
        return ConvParams(
            self.xavier((c_out, c_in) + tuple(kernel), c_in * area, c_out * area),
            self.zeros((c_out,)),
        )

    def norm(self, n: int) -> NormParams:
        return NormParams(self.ones((n,)), self.zeros((n,)))

    def ffn(self, dim: int) -> FFNParams:
        return FFNParams(self.linear(dim, 4 * dim), self.linear(4 * dim, dim))

    def heads(self, dim: int, n_heads: int) -> Dict[str, HeadParams]:
        d_h = dim // n_heads
        return {
            f"head{h + 1}": HeadParams(
                self.xavier((d_h, dim), dim, d_h),
                self.xavier((d_h, dim), dim, d_h),
                self.xavier((d_h, dim), dim, d_h),
            )
            for h in range(n_heads)
        }


# ─────────────────────────────────────────────────────────────────────────────
# Blocks
# ─────────────────────────────────────────────────────────────────────────────

def linear(x: Tensor, p: LinearParams) -> Tensor:
    """x[..., in] · weightᵀ + bias."""
    return matmul(x, transpose(p.weight)) + p.bias


def feed_forward(x: Tensor, p: FFNParams) -> Tensor:
    return linear(relu(linear(x, p.w1)), p.w2)


def attend(
    queries: Tensor,
    tokens: Tensor,
    heads: Dict[str, HeadParams],
    wo: Tensor,
    confidence: Optional[Tensor] = None,
) -> Tuple[Tensor, List[Tensor]]:
    """
    Multi-head scaled dot-product attention over the last two axes.

    queries [..., Q, L], tokens [..., K, L]; confidence, when given, is
    [..., 1, K] and multiplies the scaled logits before the softmax (the same
    vector for every head). Returns (concat(heads)·woᵀ [..., Q, L], weights
    per head [..., Q, K]).
    """
    outputs, weights = [], []
    for head in heads.values():
        d_h = head.wq.shape[0]
        q = matmul(queries, transpose(head.wq))
        k = matmul(tokens, transpose(head.wk))
        v = matmul(tokens, transpose(head.wv))
        logits = scale(matmul(q, transpose(k)), 1.0 / math.sqrt(d_h))
        if confidence is not None:
            logits = mul(logits, confidence)
        a = softmax(logits, axis=-1)
        weights.append(a)
        outputs.append(matmul(a, v))
    merged = concat(outputs, axis=-1) if len(outputs) > 1 else outputs[0]
    return matmul(merged, transpose(wo)), weights
