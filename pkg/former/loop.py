# former/loop.py — OneDF v1
"""
Training and evaluation loops.

Schedule:
  static pre-training (optional)  still videos, joint loss
  epochs 1 .. E/2                 λh·Lh + λc·Lc
  epochs E/2+1 .. E               Lh only (no Lc node is ever built)

One Graph per sequence; each sequence's loss is divided by the batch size
before backward, so gradients of a batch are averaged over its sequences.
Adam steps once per batch. The visiting order of epoch e is drawn from
seed·1_000_003 + e, so a run resumed after epoch k replays epoch k+1 exactly.

Public API:
  sequence_loss, train_epoch, validate, train
  SequenceReport, EvalReport, evaluate, check_data_compat
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from former.decoder import in_joint_phase, loss_confidence, loss_heatmap, total_loss
from former.errors import ConfigError, NumericsError
from former.logger import log
from former.model import ModelParams, SequenceOutput, Tracker, forward_sequence, init_params, named_parameters
from former.numerics import Graph, Tensor, inference, scale, seeded_rng
from former.optim import AdamState, adam_step, zero_grads
from former.structural import default_partition
from runtime.config import ModelConfig, RunConfig, TrainConfig
from runtime.state import TrainState
from tools.checkpoint import load_checkpoint, load_into, restore_state, save_checkpoint
from tools.metrics import TrackResult, mean_confidence, nrmse, per_group_nrmse, stability_error
from tools.report import JsonlWriter
from tools.synthdata import SequenceHeader, SyntheticSequence, load_split, make_static_sequence

ORDER_STRIDE = 1_000_003
STATIC_ORDER_OFFSET = 500_000

FINAL_CHECKPOINT = "final.1df"
BEST_CHECKPOINT = "best.1df"
TRAIN_LOG = "train_log.jsonl"


def check_data_compat(seq: Union[SyntheticSequence, SequenceHeader], cfg: ModelConfig, source: str = "data") -> None:
    """Model and data must agree on N, S and D."""
    model = (cfg.num_landmarks, cfg.image_size, cfg.heatmap_dim)
    data = (seq.num_landmarks, seq.image_size, seq.heatmap_dim)
    if model != data:
        raise ConfigError(
            f"model has N={model[0]}, S={model[1]}, D={model[2]} but {source} has "
            f"N={data[0]}, S={data[1]}, D={data[2]}",
            "--data",
        )


# ─────────────────────────────────────────────────────────────────────────────
# Losses over one sequence
# ─────────────────────────────────────────────────────────────────────────────

def sequence_loss(
    seq: SyntheticSequence,
    params: ModelParams,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    epoch: int,
    static: bool = False,
) -> Tuple[Tensor, Tensor, Optional[Tensor], SequenceOutput]:
    """(objective, L_h, L_c or None, output). Static pre-training uses the joint objective."""
    effective = 1 if static else epoch
    out = forward_sequence(seq.frames, params, model_cfg)
    l_h = loss_heatmap(out.heatmaps_x, out.heatmaps_y, seq.heatmap_labels)
    l_c = None
    if in_joint_phase(effective, train_cfg) and out.confidences:
        l_c = loss_confidence(out.confidences, seq.confidence_labels)
    return total_loss(l_h, l_c, train_cfg, effective), l_h, l_c, out


def _batches(order: np.ndarray, size: int) -> List[np.ndarray]:
    return [order[i:i + size] for i in range(0, len(order), size)]


def train_epoch(
    seqs: Sequence[SyntheticSequence],
    params: ModelParams,
    state: TrainState,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    epoch: int,
    static: bool = False,
) -> Dict[str, float]:
    named = named_parameters(params)
    key = train_cfg.seed * ORDER_STRIDE + epoch + (STATIC_ORDER_OFFSET if static else 0)
    order = seeded_rng(key).permutation(len(seqs))
    totals = {"loss": 0.0, "L_h": 0.0, "L_c": 0.0}
    saw_lc = False

    for step, batch in enumerate(_batches(order, train_cfg.batch_size), start=1):
        zero_grads(named)
        for idx in batch:
            try:
                with Graph() as graph:
                    loss, l_h, l_c, _ = sequence_loss(seqs[idx], params, model_cfg, train_cfg, epoch, static)
                    scaled = scale(loss, 1.0 / len(batch))
                graph.backward(scaled)
            except NumericsError as e:
                raise e.at(f"epoch {epoch}, step {step}, sequence {idx}") from e
            totals["loss"] += loss.item()
            totals["L_h"] += l_h.item()
            if l_c is not None:
                totals["L_c"] += l_c.item()
                saw_lc = True
        adam_step(named, state.adam, train_cfg)
    zero_grads(named)

    n = max(1, len(seqs))
    out = {"train_loss": totals["loss"] / n, "train_L_h": totals["L_h"] / n}
    if saw_lc:
        out["train_L_c"] = totals["L_c"] / n
    return out


def validate(
    seqs: Sequence[SyntheticSequence],
    params: ModelParams,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    epoch: int,
) -> Dict[str, float]:
    losses, errors = [], []
    with inference():
        for seq in seqs:
            loss, _, _, out = sequence_loss(seq, params, model_cfg, train_cfg, epoch)
            losses.append(loss.item())
            result = TrackResult.from_coords(out.coords(model_cfg.image_size), seq.coords, model_cfg.image_size)
            errors.append(nrmse(result))
    return {"val_loss": float(np.mean(losses)), "val_nrmse": float(np.mean(errors))}


# ─────────────────────────────────────────────────────────────────────────────
# Full run
# ─────────────────────────────────────────────────────────────────────────────

def _resume(path: Union[str, Path], params: ModelParams, cfg: RunConfig) -> TrainState:
    ckpt = load_checkpoint(path)
    if ckpt.model_config != cfg.model:
        raise ConfigError(f"checkpoint model config {ckpt.meta['model']} differs from the run's model config",
                          "--checkpoint")
    load_into(params, ckpt)
    state = restore_state(ckpt, params)
    log.info(f"[cyan]Resumed from {path} after epoch {state.epoch} (adam step {state.adam.step})[/cyan]")
    return state


def train(
    cfg: RunConfig,
    data_dir: Union[str, Path],
    out_dir: Union[str, Path],
    resume: Optional[Union[str, Path]] = None,
) -> Tuple[ModelParams, TrainState]:
    """Train on data_dir/train, validate on data_dir/val; write checkpoints and train_log.jsonl to out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    mcfg, tcfg = cfg.model, cfg.train
    train_seqs = load_split(data_dir, "train")
    val_seqs = load_split(data_dir, "val")
    check_data_compat(train_seqs[0], mcfg, "training data")

    params = init_params(mcfg, tcfg.seed)
    if resume is not None:
        state = _resume(resume, params, cfg)
    else:
        state = TrainState(adam=AdamState.for_params(named_parameters(params)))

    with JsonlWriter(out / TRAIN_LOG, append=resume is not None) as writer:
        for k in range(state.static_epochs_done + 1, tcfg.static_pretrain_epochs + 1):
            rng = seeded_rng(tcfg.seed * ORDER_STRIDE + STATIC_ORDER_OFFSET - k)
            stills = [make_static_sequence(s, int(rng.integers(s.length)), s.length) for s in train_seqs]
            rec = {"epoch": k, "phase": "static", **train_epoch(stills, params, state, mcfg, tcfg, k, static=True)}
            writer.write(rec)
            state.history.append(rec)
            state.static_epochs_done = k
            log.info(f"[magenta]static {k}/{tcfg.static_pretrain_epochs}[/magenta] loss={rec['train_loss']:.4f}")

        for epoch in range(state.epoch + 1, tcfg.epochs + 1):
            phase = 1 if in_joint_phase(epoch, tcfg) else 2
            rec: Dict[str, Any] = {"epoch": epoch, "phase": phase}
            rec.update(train_epoch(train_seqs, params, state, mcfg, tcfg, epoch))
            rec.update(validate(val_seqs, params, mcfg, tcfg, epoch))
            writer.write(rec)
            state.history.append(rec)
            state.epoch = epoch

            if state.improved(rec["val_loss"]):
                state.best_val, state.best_epoch = rec["val_loss"], epoch
                save_checkpoint(out / BEST_CHECKPOINT, params, mcfg, state, tcfg)
            save_checkpoint(out / FINAL_CHECKPOINT, params, mcfg, state, tcfg)
            log.info(
                f"[bold]epoch {epoch}/{tcfg.epochs}[/bold] phase {phase} "
                f"train={rec['train_loss']:.4f} val={rec['val_loss']:.4f} nrmse={rec['val_nrmse']:.3f}%"
            )

    if state.best_val is not None:
        log.info(f"[green]Best val loss {state.best_val:.4f} at epoch {state.best_epoch}[/green]")
    return params, state


# ─────────────────────────────────────────────────────────────────────────────
# Evaluation
# ─────────────────────────────────────────────────────────────────────────────

@dataclass
class SequenceReport:
    sequence: str
    nrmse: float
    stability: float
    nrmse_occluded: float
    nrmse_clean: float
    confidence_occluded: float
    confidence_clean: float
    groups: Dict[str, float] = field(default_factory=dict)

    def record(self) -> Dict[str, Any]:
        rec = {k: v for k, v in self.__dict__.items() if k != "groups"}
        rec.update({f"nrmse_{g}": v for g, v in self.groups.items()})
        return rec


@dataclass
class EvalReport:
    sequences: List[SequenceReport]

    def aggregate(self) -> Dict[str, Any]:
        records = [s.record() for s in self.sequences]
        agg: Dict[str, Any] = {"sequence": "mean"}
        for key in records[0]:
            if key == "sequence":
                continue
            vals = np.array([r[key] for r in records], dtype=np.float64)
            agg[key] = float(np.nanmean(vals)) if np.any(~np.isnan(vals)) else float("nan")
        return agg


def evaluate(
    params: ModelParams,
    cfg: ModelConfig,
    seqs: Sequence[SyntheticSequence],
    names: Optional[Sequence[str]] = None,
) -> EvalReport:
    """Stream every sequence through a fresh Tracker and score it."""
    names = list(names) if names is not None else [f"seq_{i:04d}" for i in range(len(seqs))]
    partition = default_partition(cfg.num_landmarks) if cfg.num_landmarks >= 7 else None
    reports = []
    for name, seq in zip(names, seqs):
        check_data_compat(seq, cfg, name)
        tracker = Tracker(params, cfg)
        frames = list(tracker.track(seq.frames))
        pred = np.stack([f.coords for f in frames])
        conf = np.stack([f.confidence for f in frames]) if frames[0].confidence is not None else None
        result = TrackResult.from_coords(pred, seq.coords, cfg.image_size)
        occluded = seq.occlusion_masks
        reports.append(SequenceReport(
            sequence=name,
            nrmse=nrmse(result),
            stability=stability_error(result),
            nrmse_occluded=nrmse(result, occluded),
            nrmse_clean=nrmse(result, ~occluded),
            confidence_occluded=mean_confidence(conf, occluded),
            confidence_clean=mean_confidence(conf, ~occluded),
            groups=per_group_nrmse(result, partition) if partition is not None else {},
        ))
        log.debug(f"{name}: nrmse={reports[-1].nrmse:.3f}% stability={reports[-1].stability:.3f}%")
    return EvalReport(reports)
