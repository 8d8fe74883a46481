# former/temporal.py — OneDF v1
"""
Temporal refinement: alp embeddings, confidence branches, confidence-enhanced
multi-head attention and the recurrent window.

At time t a block sees, per axis, the window
    [s_t ; s′_{t-1} ; … ; s′_{t-W+1}]        (newest first, warm-up uses what exists)
where s_t is the block's input and s′ are the block's own earlier outputs.
All N landmarks are carried together as the leading axis, so a window is
[N, W′, L] and every landmark attends only over its own rows.

Mixers (model.temporal / model.temporal_mixer):
  attention + attention → ce_mha          query from row 0, logits × confidence
  attention + conv      → conv_mix        window zero-padded to W rows, conv W→1
  simple_mix            → LN(s + mean(window)) then the FFN stack
  off                   → identity

Public API:
  ConfidenceParams, TemporalAxisParams, TemporalBlockParams, init_temporal
  confidence_score, apply_alp, ce_mha, simple_mix, conv_mix
  WindowBuffer, temporal_refine_step, TemporalStack, temporal_refine_sequence
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Deque, Dict, List, Optional, Sequence, Tuple

import numpy as np

from former.encoder import AXES, Representation1D, Stage
from former.errors import ContractError, NumericsError, ShapeError
from former.layers import (
    ConvParams, FFNParams, HeadParams, Initializer, LinearParams, NormParams,
    ALP_INIT, attend, feed_forward, flat_field, linear,
)
from former.numerics import (
    Tensor, concat, conv1d, layer_norm, mean, relu, reshape, same_padding, select, sigmoid, stack,
)
from runtime.config import ModelConfig

Pair = Tuple[Representation1D, Representation1D]
StructureFn = Callable[[int, Pair], Pair]


# ─────────────────────────────────────────────────────────────────────────────
# Parameters
# ─────────────────────────────────────────────────────────────────────────────

@dataclass
class ConfidenceParams:
    w1: LinearParams   # L → L/2
    w2: LinearParams   # L/2 → 1


@dataclass
class TemporalAxisParams:
    norm1: NormParams
    ffn:   FFNParams
    norm2: NormParams
    alp:   Optional[Tensor] = None                                     # [N, W, L]
    heads: Optional[Dict[str, HeadParams]] = flat_field(default=None)
    wo:    Optional[Tensor] = None
    mixer: Optional[ConvParams] = None                                 # kernel [1, W, κ]
    confidence: Optional[ConfidenceParams] = None


@dataclass
class TemporalBlockParams:
    x: TemporalAxisParams
    y: TemporalAxisParams


def init_temporal(init: Initializer, cfg: ModelConfig) -> Optional[TemporalBlockParams]:
    if cfg.temporal == "off":
        return None
    n, dim, w = cfg.num_landmarks, cfg.feature_dim, cfg.window

    def axis() -> TemporalAxisParams:
        p = TemporalAxisParams(norm1=init.norm(dim), ffn=init.ffn(dim), norm2=init.norm(dim))
        if cfg.temporal == "attention":
            p.alp = init.uniform((n, w, dim), ALP_INIT)
            if cfg.temporal_mixer == "attention":
                p.heads = init.heads(dim, cfg.heads)
                p.wo = init.xavier((dim, dim), dim, dim)
            else:
                p.mixer = init.conv(w, 1, cfg.kernel_size)
        if cfg.uses_confidence:
            hidden = max(1, dim // 2)
            p.confidence = ConfidenceParams(init.linear(dim, hidden), init.linear(hidden, 1))
        return p

    return TemporalBlockParams(x=axis(), y=axis())


# ─────────────────────────────────────────────────────────────────────────────
# Operations
# ─────────────────────────────────────────────────────────────────────────────

def confidence_score(s: Tensor, p: ConfidenceParams) -> Tensor:
    """[..., L] raw features → [..., 1] scores in (0, 1)."""
    return sigmoid(linear(relu(linear(s, p.w1)), p.w2))


def apply_alp(window: Tensor, table: Tensor) -> Tensor:
    """Add e_{n,w} to the row at relative position w-1. window [.., W′, L], table [.., W, L]."""
    w_now, w_max = window.shape[-2], table.shape[-2]
    if w_now > w_max:
        raise ShapeError(f"window holds {w_now} rows but the alp table has {w_max}", window.shape, table.shape)
    key = (slice(None),) * (table.ndim - 2) + (slice(0, w_now),)
    return window + select(table, key)


def _current_row(window: Tensor) -> Tensor:
    key = (slice(None),) * (window.ndim - 2) + (slice(0, 1),)
    return select(window, key)


def _fuse(o: Tensor, current: Tensor, p: TemporalAxisParams) -> Tensor:
    """o′ = LN(o + s_current); fused = LN(FFN(o′) + o′)."""
    o1 = layer_norm(o + current, p.norm1.gain, p.norm1.bias)
    return layer_norm(feed_forward(o1, p.ffn) + o1, p.norm2.gain, p.norm2.bias)


def ce_mha(
    window: Tensor, confidence: Optional[Tensor], p: TemporalAxisParams
) -> Tuple[Tensor, List[Tensor]]:
    """
    Confidence-enhanced attention over an embedded window [.., W′, L].

    confidence is [.., 1, W′] (row 0 ↔ current frame) or None for c = 1.
    Returns (fused [.., L], attention weights per head [.., 1, W′]).
    """
    if window.shape[-2] == 0:
        raise ContractError("ce_mha needs at least the current frame in its window")
    lead, dim = window.shape[:-2], window.shape[-1]
    current = _current_row(window)
    o, weights = attend(current, window, p.heads, p.wo, confidence)
    fused = _fuse(reshape(o, lead + (dim,)), reshape(current, lead + (dim,)), p)
    return fused, weights


def simple_mix(window: Tensor, p: TemporalAxisParams) -> Tensor:
    """Each frame's feature plus the window average, then the FFN stack."""
    lead, dim = window.shape[:-2], window.shape[-1]
    return _fuse(mean(window, axis=-2), reshape(_current_row(window), lead + (dim,)), p)


def conv_mix(window: Tensor, p: TemporalAxisParams) -> Tensor:
    """Window rows as channels, zero-padded to W, mixed W→1 by a conv over L."""
    lead, w_now, dim = window.shape[:-2], window.shape[-2], window.shape[-1]
    w_max = p.mixer.kernel.shape[1]
    if w_now > w_max:
        raise ShapeError(f"window holds {w_now} rows but the mixer expects {w_max}", window.shape)
    padded = window
    if w_now < w_max:
        padded = concat([window, Tensor(np.zeros(lead + (w_max - w_now, dim)))], axis=-2)
    mixed = conv1d(padded, p.mixer.kernel, p.mixer.bias, stride=1, padding=same_padding(p.mixer.kernel.shape[2]))
    return _fuse(reshape(mixed, lead + (dim,)), reshape(_current_row(window), lead + (dim,)), p)


# ─────────────────────────────────────────────────────────────────────────────
# Recurrent window
# ─────────────────────────────────────────────────────────────────────────────

@dataclass
class BufferEntry:
    time:       int
    features:   Tensor             # [N, L]
    confidence: Optional[Tensor]   # [N, 1]


class WindowBuffer:
    """Up to W-1 earlier entries for one (block, axis), newest first."""

    def __init__(self, capacity: int) -> None:
        self.entries: Deque[BufferEntry] = deque(maxlen=max(0, capacity))

    def __len__(self) -> int:
        return len(self.entries)

    def check_before(self, t: int) -> None:
        stale = [e.time for e in self.entries if e.time >= t]
        if stale:
            raise ContractError(f"window buffer holds entries from t={stale} while stepping t={t}")

    def push(self, t: int, features: Tensor, confidence: Optional[Tensor]) -> None:
        self.entries.appendleft(BufferEntry(t, features, confidence))

    def clear(self) -> None:
        self.entries.clear()

    def features(self) -> List[Tensor]:
        return [e.features for e in self.entries]

    def confidences(self) -> List[Tensor]:
        return [e.confidence for e in self.entries]

    def times(self) -> List[int]:
        return [e.time for e in self.entries]


@dataclass
class AxisStep:
    refined:    Representation1D
    confidence: Optional[Tensor]        # [N, 1] score of the current input
    weights:    List[Tensor] = field(default_factory=list)   # per head [N, 1, W′]


def _refine_axis(
    t: int, rep: Representation1D, buf: WindowBuffer, p: TemporalAxisParams, cfg: ModelConfig
) -> AxisStep:
    rep.expect(Stage.RAW, Stage.FINAL)
    buf.check_before(t)
    if not cfg.recurrence and (t - 1) % cfg.window == 0:
        buf.clear()

    s = rep.values
    score = confidence_score(s, p.confidence) if p.confidence is not None else None
    window = stack([s] + buf.features(), axis=1)
    weights: List[Tensor] = []

    if cfg.temporal == "simple_mix":
        fused = simple_mix(window, p)
    elif cfg.temporal_mixer == "conv":
        fused = conv_mix(apply_alp(window, p.alp), p)
    else:
        conf = None
        if score is not None:
            vec = concat([score] + buf.confidences(), axis=1)
            conf = reshape(vec, (vec.shape[0], 1, vec.shape[1]))
        fused, weights = ce_mha(apply_alp(window, p.alp), conf, p)

    # without recurrence the window is built from raw inputs of the current chunk
    buf.push(t, fused if cfg.recurrence else s, score)
    return AxisStep(Representation1D(rep.axis, fused, Stage.REFINED), score, weights)


def temporal_refine_step(
    t: int,
    pair: Sequence[Representation1D],
    buffers: Dict[str, WindowBuffer],
    params: TemporalBlockParams,
    cfg: ModelConfig,
) -> Tuple[AxisStep, AxisStep]:
    """One block, one time step (t is 1-based), both axes."""
    steps = [_refine_axis(t, rep, buffers[rep.axis], getattr(params, rep.axis), cfg) for rep in pair]
    return steps[0], steps[1]


def _no_structure(block: int, pair: Pair) -> Pair:
    return pair[0].retag(Stage.FINAL), pair[1].retag(Stage.FINAL)


@dataclass
class StackStep:
    final:       Pair
    refined:     List[Pair]                                  # per block
    confidences: List[Optional[Tuple[Tensor, Tensor]]]      # per block, (x, y) [N, 1]
    weights:     List[Tuple[List[Tensor], List[Tensor]]]    # per block, per head


class TemporalStack:
    """
    M blocks with their own buffers. Block m+1 takes block m's structural
    output at the same time step as its input. Shared by training
    (temporal_refine_sequence) and streaming tracking (model.Tracker).
    """

    def __init__(self, params: Sequence[Optional[TemporalBlockParams]], cfg: ModelConfig) -> None:
        self.params = list(params)
        self.cfg = cfg
        self.buffers = [{axis: WindowBuffer(cfg.window - 1) for axis in AXES} for _ in self.params]

    def reset(self) -> None:
        for block in self.buffers:
            for buf in block.values():
                buf.clear()

    def _locate(self, e: NumericsError, block: int, t: int) -> NumericsError:
        where = f"block {block}, t={t}"
        if e.where and e.shape and e.shape[0] == self.cfg.num_landmarks:
            where += f", n={e.where[0]}"
        return e.at(where)

    def step(self, t: int, pair: Pair, structure: Optional[StructureFn] = None) -> StackStep:
        structure = structure or _no_structure
        refined_all, confs, weights = [], [], []
        for m, params in enumerate(self.params):
            if params is None:
                refined = (pair[0].retag(Stage.REFINED), pair[1].retag(Stage.REFINED))
                confs.append(None)
                weights.append(([], []))
            else:
                try:
                    sx, sy = temporal_refine_step(t, pair, self.buffers[m], params, self.cfg)
                except ContractError as e:
                    raise ContractError(f"block {m + 1}, t={t}: {e}") from e
                except NumericsError as e:
                    raise self._locate(e, m + 1, t) from e
                refined = (sx.refined, sy.refined)
                confs.append((sx.confidence, sy.confidence) if sx.confidence is not None else None)
                weights.append((sx.weights, sy.weights))
            refined_all.append(refined)
            try:
                pair = structure(m, refined)
            except NumericsError as e:
                raise self._locate(e, m + 1, t) from e
        return StackStep(final=pair, refined=refined_all, confidences=confs, weights=weights)


def temporal_refine_sequence(
    xs: Sequence[Representation1D],
    ys: Sequence[Representation1D],
    params: Sequence[Optional[TemporalBlockParams]],
    cfg: ModelConfig,
    structure: Optional[StructureFn] = None,
) -> List[StackStep]:
    """Run every frame through a fresh stack, in order. One StackStep per frame."""
    if len(xs) != len(ys):
        raise ShapeError("x and y sequences differ in length", (len(xs),), (len(ys),))
    stack_ = TemporalStack(params, cfg)
    return [stack_.step(t, (sx, sy), structure) for t, (sx, sy) in enumerate(zip(xs, ys), start=1)]
