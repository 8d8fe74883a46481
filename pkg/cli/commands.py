# cli/commands.py — OneDF v1
"""
Batch command line.

Commands:
  onedf generate --out DIR [--config PATH] [--seed N]
  onedf train    --data DIR --out DIR [--config PATH] [--seed N] [--checkpoint PATH]
  onedf eval     --checkpoint PATH --data DIR [--out DIR]
  onedf track    SEQUENCE --checkpoint PATH --out FILE.csv
  onedf ablate   --data DIR --out DIR [--config PATH] [--seed N]

Every command returns 0 on success and 1 after logging a OneDFError.
ONEDF_THREADS caps the ablation worker processes.
"""
from __future__ import annotations

import argparse
from pathlib import Path
from typing import List, Optional

from former.errors import ConfigError, OneDFError
from former.logger import attach_file_handler, detach_file_handler, log
from former.loop import check_data_compat, evaluate, train
from former.model import Tracker
from former.structural import GROUP_NAMES
from runtime.config import RunConfig, load_config, threads_from_env
from tools.ablation import run_ablation
from tools.checkpoint import load_model
from tools.report import JsonlWriter, metrics_table, print_table, write_track_csv
from tools.synthdata import generate_dataset, iter_frames, load_sequence, read_header, split_paths

EVAL_COLUMNS = ("sequence", "nrmse", "stability", "nrmse_occluded", "nrmse_clean",
                "confidence_occluded", "confidence_clean")


def _run_config(args: argparse.Namespace) -> RunConfig:
    return load_config(args.config).with_seed(args.seed)


def _require_arg(args: argparse.Namespace, name: str) -> None:
    if getattr(args, name, None) is None:
        raise ConfigError(f"{args.command} needs --{name}", f"--{name}")


# ─────────────────────────────────────────────────────────────────────────────
# Commands
# ─────────────────────────────────────────────────────────────────────────────

def cmd_generate(args: argparse.Namespace) -> None:
    _require_arg(args, "out")
    cfg = _run_config(args)
    written = generate_dataset(cfg, args.out)
    total = sum(len(v) for v in written.values())
    log.info(f"[bold green]Wrote {total} sequences to {args.out}[/bold green]")


def cmd_train(args: argparse.Namespace) -> None:
    _require_arg(args, "data")
    _require_arg(args, "out")
    cfg = _run_config(args)
    _, state = train(cfg, args.data, args.out, resume=args.checkpoint)
    log.info(f"[bold green]Training done: {state.epoch} epochs, checkpoints in {args.out}[/bold green]")


def cmd_eval(args: argparse.Namespace) -> None:
    _require_arg(args, "checkpoint")
    _require_arg(args, "data")
    params, cfg, _ = load_model(args.checkpoint)
    paths = split_paths(args.data, "test")
    seqs = [load_sequence(p) for p in paths]
    report = evaluate(params, cfg, seqs, names=[p.stem for p in paths])
    aggregate = report.aggregate()

    out = Path(args.out) if args.out else Path(args.checkpoint).parent
    with JsonlWriter(out / "eval.jsonl") as writer:
        for s in report.sequences:
            writer.write(s.record())
        writer.write(aggregate)

    rows = [s.record() for s in report.sequences] + [aggregate]
    print_table(metrics_table("Evaluation (NRMSE / stability in %)", rows, EVAL_COLUMNS, highlight="mean"))
    groups = [g for g in GROUP_NAMES if f"nrmse_{g}" in aggregate]
    if groups:
        print_table(metrics_table("Per-group NRMSE (%)", [{"group": g, "nrmse": aggregate[f"nrmse_{g}"]} for g in groups],
                                  ("group", "nrmse")))
    log.info(f"[green]Report → {out / 'eval.jsonl'}[/green]")


def cmd_track(args: argparse.Namespace) -> None:
    _require_arg(args, "checkpoint")
    _require_arg(args, "out")
    params, cfg, _ = load_model(args.checkpoint)
    header = read_header(args.sequence)
    check_data_compat(header, cfg, args.sequence)
    rows = write_track_csv(args.out, Tracker(params, cfg).track(iter_frames(args.sequence)))
    log.info(f"[green]{rows} rows ({header.length} frames × {header.num_landmarks} landmarks) → {args.out}[/green]")


def cmd_ablate(args: argparse.Namespace) -> None:
    _require_arg(args, "data")
    _require_arg(args, "out")
    cfg = _run_config(args)
    path = run_ablation(cfg, args.data, args.out, threads=threads_from_env())
    log.info(f"[bold green]Ablation results → {path}[/bold green]")


# ─────────────────────────────────────────────────────────────────────────────
# Parser
# ─────────────────────────────────────────────────────────────────────────────

def _common(p: argparse.ArgumentParser, *flags: str) -> None:
    if "config" in flags:
        p.add_argument("--config", type=str, default=None, help="JSON config file (defaults when omitted)")
    if "data" in flags:
        p.add_argument("--data", type=str, default=None, help="Dataset directory with train/val/test")
    if "out" in flags:
        p.add_argument("--out", type=str, default=None, help="Output path")
    if "seed" in flags:
        p.add_argument("--seed", type=int, default=None, help="Overrides train.seed and synthetic.seed")
    if "checkpoint" in flags:
        p.add_argument("--checkpoint", type=str, default=None, help="1DF1 checkpoint")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="onedf",
        description="OneDF — 1D-representation facial landmark tracker on synthetic occluded video",
    )
    sub = p.add_subparsers(dest="command")

    gp = sub.add_parser("generate", help="Write a synthetic train/val/test dataset")
    _common(gp, "config", "out", "seed")

    tp = sub.add_parser("train", help="Train with the two-phase schedule")
    _common(tp, "config", "data", "out", "seed", "checkpoint")

    ep = sub.add_parser("eval", help="Evaluate a checkpoint on the test split")
    _common(ep, "data", "out", "checkpoint")

    kp = sub.add_parser("track", help="Track one sequence frame by frame into a CSV")
    kp.add_argument("sequence", help="Path to a .synq sequence")
    _common(kp, "out", "checkpoint")

    ap = sub.add_parser("ablate", help="Run the ablation / window / mixer grid")
    _common(ap, "config", "data", "out", "seed")

    return p


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.command is None:
        parser.print_help()
        return 0

    dispatch = {
        "generate": cmd_generate,
        "train":    cmd_train,
        "eval":     cmd_eval,
        "track":    cmd_track,
        "ablate":   cmd_ablate,
    }
    handler = None
    out = getattr(args, "out", None)
    if out and args.command in ("generate", "train", "ablate", "eval"):
        handler = attach_file_handler(str(Path(out) / f"{args.command}.log"))
    try:
        dispatch[args.command](args)
    except OneDFError as e:
        log.error(f"[bold red]{args.command} failed:[/bold red] {e}")
        return 1
    finally:
        if handler is not None:
            detach_file_handler(handler)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
