# runtime/state.py — OneDF v1
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

from former.optim import AdamState


@dataclass
class TrainState:
    # ── Progress ──────────────────────────────────────────────────────────────
    epoch: int = 0                 # last completed epoch of the main schedule
    static_epochs_done: int = 0

    # ── Optimizer ─────────────────────────────────────────────────────────────
    adam: AdamState = field(default_factory=AdamState)

    # ── Validation tracking ──────────────────────────────────────────────────
    best_val: Optional[float] = None
    best_epoch: int = 0

    # ── History (one record per epoch, as written to train_log.jsonl) ────────
    history: List[Dict[str, Any]] = field(default_factory=list)

    def improved(self, val_loss: float) -> bool:
        return self.best_val is None or val_loss < self.best_val
