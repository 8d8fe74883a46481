# former/optim.py — OneDF v1
"""
Adam with bias correction over named parameters.

  m ← β1·m + (1−β1)·g
  v ← β2·v + (1−β2)·g²
  p ← p − lr · m̂ / (√v̂ + ε),   m̂ = m/(1−β1ᵗ), v̂ = v/(1−β2ᵗ)

Every gradient is checked before anything is written, so a bad step leaves
parameters and moments exactly as they were. A parameter without a gradient
counts as a zero gradient (its moments still decay).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Mapping

import numpy as np

from former.errors import OptimizerError
from former.numerics import Tensor
from runtime.config import TrainConfig


@dataclass
class AdamState:
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: Mapping[str, Tensor]) -> "AdamState":
        return cls(
            step=0,
            m={k: np.zeros_like(p.data) for k, p in params.items()},
            v={k: np.zeros_like(p.data) for k, p in params.items()},
        )


def adam_step(params: Mapping[str, Tensor], state: AdamState, cfg: TrainConfig) -> AdamState:
    for name, p in params.items():
        if name not in state.m or state.m[name].shape != p.shape:
            raise OptimizerError("moment missing or shaped unlike its parameter", name)
        if p.grad is not None and not np.all(np.isfinite(p.grad)):
            raise OptimizerError("non-finite gradient", name)

    state.step += 1
    b1, b2 = cfg.beta1, cfg.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for name, p in params.items():
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        m = state.m[name] = (b1 * state.m[name] + (1.0 - b1) * g).astype(np.float32)
        v = state.v[name] = (b2 * state.v[name] + (1.0 - b2) * g * g).astype(np.float32)
        update = cfg.learning_rate * (m / c1) / (np.sqrt(v / c2) + cfg.eps)
        p.data = (p.data - update).astype(np.float32)
    return state


def zero_grads(params: Mapping[str, Tensor]) -> None:
    for p in params.values():
        p.zero_grad()
