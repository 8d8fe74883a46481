# former/structural.py — OneDF v1
"""
Intra-group and inter-group geometric encoding.

Rows of a representation are landmarks. A group's rows are stacked as
channels and mixed by one residual conv1d (κ = 3, same padding) followed by
a layer norm over L; the inter-group stage does the same over all N rows.
With spatial_mixer="attention" the conv is replaced by self-attention among
the same rows (no confidence), keeping the residual + layer norm.

Public API:
  GROUP_NAMES, GroupPartition, default_partition(N)
  GroupMixParams, StructuralAxisParams, StructuralBlockParams, init_structural
  intra_group_encode(rep, partition, params)  REFINED → INTRA
  inter_group_encode(rep, params)             INTRA   → FINAL
  structural_block(pair, params, partition)
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from former.encoder import Representation1D, Stage
from former.errors import ConfigError
from former.layers import HeadParams, Initializer, NormParams, attend, flat_field
from former.numerics import Tensor, concat, conv1d, layer_norm, same_padding, take
from runtime.config import ModelConfig

GROUP_NAMES = ("left_eyebrow", "right_eyebrow", "left_eye", "right_eye", "nose", "mouth", "contour")

# 0-based ranges of the 68-point markup, listed in GROUP_NAMES order
_MARKUP_68 = {
    "left_eyebrow":  range(17, 22),
    "right_eyebrow": range(22, 27),
    "left_eye":      range(36, 42),
    "right_eye":     range(42, 48),
    "nose":          range(27, 36),
    "mouth":         range(48, 68),
    "contour":       range(0, 17),
}


@dataclass(frozen=True)
class GroupPartition:
    groups: Tuple[Tuple[int, ...], ...]
    num_landmarks: int

    def __post_init__(self) -> None:
        if len(self.groups) != len(GROUP_NAMES):
            raise ConfigError(f"expected {len(GROUP_NAMES)} groups, got {len(self.groups)}", "partition")
        flat = [i for g in self.groups for i in g]
        if any(len(g) == 0 for g in self.groups):
            raise ConfigError("every group needs at least one landmark", "partition")
        if len(set(flat)) != len(flat):
            raise ConfigError("groups overlap", "partition")
        if sorted(flat) != list(range(self.num_landmarks)):
            raise ConfigError(f"groups do not cover 0..{self.num_landmarks - 1}", "partition")

    @property
    def sizes(self) -> Tuple[int, ...]:
        return tuple(len(g) for g in self.groups)

    @property
    def order(self) -> np.ndarray:
        """Landmark indices in group order (the row order after concatenating groups)."""
        return np.array([i for g in self.groups for i in g], dtype=np.intp)

    @property
    def inverse(self) -> np.ndarray:
        inv = np.empty(self.num_landmarks, dtype=np.intp)
        inv[self.order] = np.arange(self.num_landmarks)
        return inv

    def group_of(self) -> np.ndarray:
        """Group index per landmark."""
        out = np.empty(self.num_landmarks, dtype=np.intp)
        for k, g in enumerate(self.groups):
            out[list(g)] = k
        return out


def default_partition(num_landmarks: int) -> GroupPartition:
    """68 → standard markup; other N ≥ 7 → seven contiguous near-equal chunks."""
    if num_landmarks == 68:
        return GroupPartition(tuple(tuple(_MARKUP_68[name]) for name in GROUP_NAMES), 68)
    k = len(GROUP_NAMES)
    if num_landmarks < k:
        raise ConfigError(f"need at least {k} landmarks for the group partition, got {num_landmarks}",
                          "model.num_landmarks")
    base, extra = divmod(num_landmarks, k)
    groups, start = [], 0
    for g in range(k):
        size = base + (1 if g < extra else 0)
        groups.append(tuple(range(start, start + size)))
        start += size
    return GroupPartition(tuple(groups), num_landmarks)


# ─────────────────────────────────────────────────────────────────────────────
# Parameters
# ─────────────────────────────────────────────────────────────────────────────

@dataclass
class GroupMixParams:
    norm:   NormParams
    kernel: Optional[Tensor] = None                               # conv mixer [n, n, κ]
    bias:   Optional[Tensor] = None
    heads:  Optional[Dict[str, HeadParams]] = flat_field(default=None)   # attention mixer
    wo:     Optional[Tensor] = None


@dataclass
class StructuralAxisParams:
    intra: Optional[Dict[str, GroupMixParams]] = None
    inter: Optional[GroupMixParams] = None


@dataclass
class StructuralBlockParams:
    x: StructuralAxisParams
    y: StructuralAxisParams


def _init_mixer(init: Initializer, channels: int, cfg: ModelConfig) -> GroupMixParams:
    dim = cfg.feature_dim
    if cfg.spatial_mixer == "conv":
        conv = init.conv(channels, channels, cfg.kernel_size)
        return GroupMixParams(norm=init.norm(dim), kernel=conv.kernel, bias=conv.bias)
    heads = init.heads(dim, cfg.heads)
    wo = init.xavier((dim, dim), dim, dim)
    return GroupMixParams(norm=init.norm(dim), heads=heads, wo=wo)


def init_structural(init: Initializer, cfg: ModelConfig, partition: Optional[GroupPartition]) -> StructuralBlockParams:
    def axis() -> StructuralAxisParams:
        intra = None
        if cfg.intra_group:
            intra = {f"group{k + 1}": _init_mixer(init, n_k, cfg) for k, n_k in enumerate(partition.sizes)}
        inter = _init_mixer(init, cfg.num_landmarks, cfg) if cfg.inter_group else None
        return StructuralAxisParams(intra=intra, inter=inter)

    return StructuralBlockParams(x=axis(), y=axis())


# ─────────────────────────────────────────────────────────────────────────────
# Encoders
# ─────────────────────────────────────────────────────────────────────────────

def _residual_mix(rows: Tensor, p: GroupMixParams) -> Tensor:
    """LN(mix(rows) + rows) with rows [n, L]."""
    if p.kernel is not None:
        if p.kernel.shape[0] != rows.shape[0]:
            raise ConfigError(
                f"mixer has {p.kernel.shape[0]} channels but the group has {rows.shape[0]} rows", "partition")
        mixed = conv1d(rows, p.kernel, p.bias, stride=1, padding=same_padding(p.kernel.shape[2]))
    else:
        mixed, _ = attend(rows, rows, p.heads, p.wo)
    return layer_norm(mixed + rows, p.norm.gain, p.norm.bias)


def intra_group_encode(
    rep: Representation1D, partition: GroupPartition, params: Dict[str, GroupMixParams]
) -> Representation1D:
    rep.expect(Stage.REFINED)
    n = rep.values.shape[0]
    if n != partition.num_landmarks:
        raise ConfigError(f"partition covers {partition.num_landmarks} landmarks, representation has {n}",
                          "partition")
    if len(params) != len(partition.groups):
        raise ConfigError(f"{len(params)} group mixers for {len(partition.groups)} groups", "partition")
    pieces = [
        _residual_mix(take(rep.values, group, axis=0), p)
        for group, p in zip(partition.groups, params.values())
    ]
    merged = take(concat(pieces, axis=0), partition.inverse, axis=0)
    return Representation1D(rep.axis, merged, Stage.INTRA)


def inter_group_encode(rep: Representation1D, params: GroupMixParams) -> Representation1D:
    rep.expect(Stage.INTRA)
    return Representation1D(rep.axis, _residual_mix(rep.values, params), Stage.FINAL)


def structural_block(
    pair: Sequence[Representation1D],
    params: StructuralBlockParams,
    partition: Optional[GroupPartition],
) -> Tuple[Representation1D, Representation1D]:
    """REFINED pair → FINAL pair. A stage without parameters passes its input through."""
    out = []
    for rep in pair:
        p: StructuralAxisParams = getattr(params, rep.axis)
        rep = rep.expect(Stage.REFINED)
        rep = intra_group_encode(rep, partition, p.intra) if p.intra is not None else rep.retag(Stage.INTRA)
        rep = inter_group_encode(rep, p.inter) if p.inter is not None else rep.retag(Stage.FINAL)
        out.append(rep)
    return out[0], out[1]
