# tools/checkpoint.py — OneDF v1
"""
1DF1 checkpoints: every learnable tensor under its dotted name, plus a JSON
trailer with the model config, training config and progress.

Layout (little-endian):
  "1DF1" | version u32 | count u32
  count × ( name_len u16 | utf-8 name | rank u8 | rank × extent u32 | f32 payload )
  json_len u32 | utf-8 JSON

Adam moments ride along as adam.m.<name> / adam.v.<name> so a resumed run
continues bit-for-bit.

Public API:
  Checkpoint, save_checkpoint, load_checkpoint, load_into, restore_state, load_model
"""
from __future__ import annotations

import dataclasses
import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from former.errors import CheckpointMismatchError, ConfigError, FormatError
from former.model import ModelParams, init_params, named_parameters
from former.optim import AdamState
from runtime.config import ModelConfig, TrainConfig, model_config_from_dict, train_config_from_dict
from runtime.state import TrainState

MAGIC = b"1DF1"
VERSION = 1
ADAM_M = "adam.m."
ADAM_V = "adam.v."


@dataclass
class Checkpoint:
    tensors: Dict[str, np.ndarray] = field(default_factory=dict)
    meta:    Dict[str, Any] = field(default_factory=dict)

    @property
    def model_config(self) -> ModelConfig:
        return model_config_from_dict(self.meta["model"])

    @property
    def train_config(self) -> Optional[TrainConfig]:
        data = self.meta.get("train")
        return train_config_from_dict(data) if data else None

    def model_tensors(self) -> Dict[str, np.ndarray]:
        return {k: v for k, v in self.tensors.items() if not k.startswith("adam.")}


# ─────────────────────────────────────────────────────────────────────────────
# Save
# ─────────────────────────────────────────────────────────────────────────────

def save_checkpoint(
    path: Union[str, Path],
    params: ModelParams,
    model_cfg: ModelConfig,
    state: Optional[TrainState] = None,
    train_cfg: Optional[TrainConfig] = None,
) -> Path:
    tensors = {name: t.data for name, t in named_parameters(params).items()}
    if state is not None:
        for name in list(tensors):
            if name in state.adam.m:
                tensors[ADAM_M + name] = state.adam.m[name]
                tensors[ADAM_V + name] = state.adam.v[name]

    meta: Dict[str, Any] = {
        "model": dataclasses.asdict(model_cfg),
        "train": dataclasses.asdict(train_cfg) if train_cfg is not None else None,
    }
    if state is not None:
        meta.update({
            "epoch": state.epoch,
            "static_epochs_done": state.static_epochs_done,
            "adam_step": state.adam.step,
            "best_val": state.best_val,
            "best_epoch": state.best_epoch,
            "history": state.history,
        })

    chunks = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name, arr in tensors.items():
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(raw)) + raw)
        chunks.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    chunks.append(struct.pack("<I", len(blob)) + blob)

    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    tmp = p.with_suffix(p.suffix + ".tmp")
    tmp.write_bytes(b"".join(chunks))
    os.replace(tmp, p)
    return p


# ─────────────────────────────────────────────────────────────────────────────
# Load
# ─────────────────────────────────────────────────────────────────────────────

class _Reader:
    def __init__(self, data: bytes, label: str) -> None:
        self.data = data
        self.pos = 0
        self.label = label

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(
                f"{self.label}: truncated {what}, expected {n} bytes, got {len(self.data) - self.pos}", self.pos)
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str) -> Tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"checkpoint not found: {p}", "--checkpoint")
    r = _Reader(p.read_bytes(), p.name)
    magic = r.take(4, "magic")
    if magic != MAGIC:
        raise FormatError(f"{p.name}: bad magic {magic!r}, expected {MAGIC!r}", 0)
    version, count = r.unpack("<II", "header")
    if version != VERSION:
        raise FormatError(f"{p.name}: unsupported version {version}", 4)

    tensors: Dict[str, np.ndarray] = {}
    for _ in range(count):
        start = r.pos
        (name_len,) = r.unpack("<H", "name length")
        try:
            name = r.take(name_len, "name").decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError(f"{p.name}: entry name is not utf-8", start + 2) from None
        if name in tensors:
            raise FormatError(f"{p.name}: duplicate entry {name}", start)
        (rank,) = r.unpack("<B", "rank")
        dims = r.unpack(f"<{rank}I", "extents") if rank else ()
        size = int(np.prod(dims)) if dims else 1
        payload = r.take(4 * size, f"payload of {name}")
        tensors[name] = np.frombuffer(payload, dtype="<f4").reshape(dims).astype(np.float32)

    (json_len,) = r.unpack("<I", "config length")
    try:
        meta = json.loads(r.take(json_len, "config").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"{p.name}: config trailer is not valid JSON ({e})", r.pos - json_len) from None
    if r.pos != len(r.data):
        raise FormatError(f"{p.name}: {len(r.data) - r.pos} trailing bytes", r.pos)
    return Checkpoint(tensors, meta)


def load_into(params: ModelParams, ckpt: Checkpoint) -> ModelParams:
    """Copy tensors into params; any name or extent disagreement is reported in full."""
    named = named_parameters(params)
    stored = ckpt.model_tensors()
    missing = [n for n in named if n not in stored]
    unexpected = [n for n in stored if n not in named]
    reshaped = [n for n in named if n in stored and stored[n].shape != named[n].shape]
    if missing or unexpected or reshaped:
        raise CheckpointMismatchError(missing, unexpected, reshaped)
    for name, tensor in named.items():
        tensor.data = stored[name].copy()
        tensor.grad = None
    return params


def restore_state(ckpt: Checkpoint, params: ModelParams) -> TrainState:
    named = named_parameters(params)
    adam = AdamState.for_params(named)
    adam.step = int(ckpt.meta.get("adam_step", 0))
    for name in named:
        if ADAM_M + name in ckpt.tensors:
            adam.m[name] = ckpt.tensors[ADAM_M + name].copy()
            adam.v[name] = ckpt.tensors[ADAM_V + name].copy()
    return TrainState(
        epoch=int(ckpt.meta.get("epoch", 0)),
        static_epochs_done=int(ckpt.meta.get("static_epochs_done", 0)),
        adam=adam,
        best_val=ckpt.meta.get("best_val"),
        best_epoch=int(ckpt.meta.get("best_epoch", 0)),
        history=list(ckpt.meta.get("history", [])),
    )


def load_model(path: Union[str, Path]) -> Tuple[ModelParams, ModelConfig, Checkpoint]:
    ckpt = load_checkpoint(path)
    cfg = ckpt.model_config
    params = load_into(init_params(cfg, seed=0), ckpt)
    return params, cfg, ckpt
