# former/model.py — OneDF v1
"""
Model assembly.

  frames → encoder → M × (temporal → intra-group → inter-group) → decoder → heatmaps

forward_sequence runs a whole training sequence inside the caller's Graph.
Tracker runs the same computation one frame at a time without recording,
keeping only the window buffers between frames.

Public API:
  ModelParams, init_params(cfg, seed), named_parameters(params)
  SequenceOutput, forward_sequence(frames, params, cfg)
  TrackFrame, Tracker
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from former.decoder import DecoderParams, decode, extract_coord, init_decoder
from former.encoder import EncoderParams, encode_frame, encode_sequence, init_encoder
from former.errors import ContractError
from former.layers import Initializer, walk_tensors
from former.numerics import Tensor, inference, stack
from former.structural import GroupPartition, StructuralBlockParams, default_partition, init_structural, structural_block
from former.temporal import Pair, StackStep, TemporalBlockParams, TemporalStack, init_temporal, temporal_refine_sequence
from runtime.config import ModelConfig


@dataclass
class ModelParams:
    encoder:    EncoderParams
    temporal:   Dict[str, Optional[TemporalBlockParams]]
    structural: Dict[str, StructuralBlockParams]
    decoder:    DecoderParams

    def temporal_blocks(self) -> List[Optional[TemporalBlockParams]]:
        return list(self.temporal.values())


def model_partition(cfg: ModelConfig) -> Optional[GroupPartition]:
    return default_partition(cfg.num_landmarks) if cfg.intra_group else None


def init_params(cfg: ModelConfig, seed: int) -> ModelParams:
    """Deterministic in (cfg, seed): one stream, drawn encoder → blocks → decoder."""
    cfg.validate()
    init = Initializer(seed)
    partition = model_partition(cfg)
    encoder = init_encoder(init, cfg)
    temporal, structural = {}, {}
    for m in range(cfg.blocks):
        temporal[f"block{m + 1}"] = init_temporal(init, cfg)
        structural[f"block{m + 1}"] = init_structural(init, cfg, partition)
    return ModelParams(encoder, temporal, structural, init_decoder(init, cfg))


def named_parameters(params: ModelParams) -> Dict[str, Tensor]:
    named: Dict[str, Tensor] = {}
    for name, tensor in walk_tensors("", params):
        if name in named:
            raise ContractError(f"duplicate parameter name {name}")
        named[name] = tensor
    return named


def _structure_fn(params: ModelParams, partition: Optional[GroupPartition]):
    blocks = list(params.structural.values())

    def apply(m: int, pair: Pair) -> Pair:
        return structural_block(pair, blocks[m], partition)

    return apply


# ─────────────────────────────────────────────────────────────────────────────
# Whole-sequence forward (training)
# ─────────────────────────────────────────────────────────────────────────────

@dataclass
class SequenceOutput:
    heatmaps_x:  Tensor                           # [T, N, D]
    heatmaps_y:  Tensor
    confidences: List[Tuple[Tensor, Tensor]]      # per block with branches, each [T, N, 1]
    steps:       List[StackStep] = field(repr=False, default_factory=list)

    def coords(self, image_size: int) -> np.ndarray:
        """[T, N, 2] peak coordinates."""
        return np.stack([extract_coord(self.heatmaps_x, image_size),
                         extract_coord(self.heatmaps_y, image_size)], axis=-1)

    def confidence_array(self, block: int = 0) -> Optional[np.ndarray]:
        """[T, N, 2] scores of one block, or None when the model has no branches."""
        if not self.confidences:
            return None
        cx, cy = self.confidences[block]
        return np.concatenate([cx.data, cy.data], axis=-1)


def forward_sequence(frames: np.ndarray, params: ModelParams, cfg: ModelConfig) -> SequenceOutput:
    partition = model_partition(cfg)
    xs, ys = encode_sequence(frames, params.encoder, cfg)
    steps = temporal_refine_sequence(xs, ys, params.temporal_blocks(), cfg, _structure_fn(params, partition))
    hx = stack([decode(s.final[0].values, params.decoder.x) for s in steps], axis=0)
    hy = stack([decode(s.final[1].values, params.decoder.y) for s in steps], axis=0)

    confidences = []
    for m in range(cfg.blocks):
        per_t = [s.confidences[m] for s in steps]
        if per_t and per_t[0] is not None:
            confidences.append((stack([c[0] for c in per_t], axis=0), stack([c[1] for c in per_t], axis=0)))
    return SequenceOutput(hx, hy, confidences, steps)


# ─────────────────────────────────────────────────────────────────────────────
# Streaming tracker
# ─────────────────────────────────────────────────────────────────────────────

@dataclass
class TrackFrame:
    t:          int                    # 1-based
    coords:     np.ndarray             # [N, 2] px
    heatmaps:   np.ndarray             # [N, 2, D]
    confidence: Optional[np.ndarray]   # [N, 2] block-1 scores
    weights:    List[np.ndarray]       # block-1 x-axis attention per head, [N, W′]


class Tracker:
    """Causal frame-by-frame tracking; memory is bounded by the window buffers."""

    def __init__(self, params: ModelParams, cfg: ModelConfig) -> None:
        self.params = params
        self.cfg = cfg
        self.partition = model_partition(cfg)
        self.stack = TemporalStack(params.temporal_blocks(), cfg)
        self.structure = _structure_fn(params, self.partition)
        self.t = 0

    def reset(self) -> None:
        self.stack.reset()
        self.t = 0

    def step(self, image: np.ndarray) -> TrackFrame:
        self.t += 1
        with inference():
            sx, sy = encode_frame(np.asarray(image, dtype=np.float32), self.params.encoder, self.cfg)
            out = self.stack.step(self.t, (sx, sy), self.structure)
            hx = decode(out.final[0].values, self.params.decoder.x).data
            hy = decode(out.final[1].values, self.params.decoder.y).data
        coords = np.stack([extract_coord(hx, self.cfg.image_size), extract_coord(hy, self.cfg.image_size)], axis=-1)
        conf = None
        if out.confidences and out.confidences[0] is not None:
            cx, cy = out.confidences[0]
            conf = np.concatenate([cx.data, cy.data], axis=-1)
        weights = [w.data.reshape(w.shape[0], -1) for w in out.weights[0][0]] if out.weights else []
        return TrackFrame(self.t, coords, np.stack([hx, hy], axis=1), conf, weights)

    def track(self, frames: np.ndarray) -> Iterator[TrackFrame]:
        for image in frames:
            yield self.step(image)
