# tools/ablation.py — OneDF v1
"""
Ablation / window-length / mixer study.

Setting names are '+'-joined components on top of the baseline BL (backbone
features straight into the decoder):
  TE     confidence-enhanced attention with recurrence
  TE-a   window average instead of attention
  TE-r   attention without recurrence (windows isolated in chunks of W)
  TE-c   attention without confidence modulation
  IR     intra-group structural encoding
  IT     inter-group structural encoding
Window sweep entries run BL+TE+IR+IT at each W. Mixer entries
("T_Att&S_Conv", ...) pick the temporal and spatial mixer of the full model.

Every (setting, seed) is an independent job: train on data/train, evaluate
on data/test. Jobs run in a process pool capped by ONEDF_THREADS; a failing
job is recorded and the rest of the grid continues.
"""
from __future__ import annotations

import dataclasses
import math
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Tuple, Union

import numpy as np

from former.errors import ConfigError
from former.logger import attach_file_handler, detach_file_handler, log
from former.loop import evaluate, train
from runtime.config import RunConfig
from tools.plots import bar_chart, line_chart
from tools.report import metrics_table, print_table, write_results_csv
from tools.synthdata import load_split

FULL_MODEL = "BL+TE+IR+IT"
METRICS = ("nrmse", "stability", "nrmse_occluded", "nrmse_clean", "confidence_occluded", "confidence_clean")
COLUMNS = ("group", "setting", "seed", "status") + METRICS

_BASELINE = {"temporal": "off", "intra_group": False, "inter_group": False}
_COMPONENTS: Dict[str, Dict[str, Any]] = {
    "TE":   {"temporal": "attention", "recurrence": True, "confidence": True},
    "TE-a": {"temporal": "simple_mix", "recurrence": True},
    "TE-r": {"temporal": "attention", "recurrence": False, "confidence": True},
    "TE-c": {"temporal": "attention", "recurrence": True, "confidence": False},
    "IR":   {"intra_group": True},
    "IT":   {"inter_group": True},
}
_MIXER_RE = re.compile(r"^T_(Att|Conv)&S_(Att|Conv)$")
_MIXER_NAMES = {"Att": "attention", "Conv": "conv"}


def setting_overrides(name: str) -> Dict[str, Any]:
    """ModelConfig field overrides for a setting name such as 'BL+TE+IR'."""
    tokens = name.split("+")
    if tokens[0] != "BL":
        raise ConfigError(f"setting must start with BL, got {name!r}", "ablation.settings")
    out = dict(_BASELINE)
    for token in tokens[1:]:
        if token not in _COMPONENTS:
            raise ConfigError(f"unknown component {token!r} in {name!r}", "ablation.settings")
        out.update(_COMPONENTS[token])
    return out


def mixer_overrides(name: str) -> Dict[str, Any]:
    m = _MIXER_RE.match(name)
    if not m:
        raise ConfigError(f"mixer pairing must look like T_Att&S_Conv, got {name!r}", "ablation.mixers")
    out = setting_overrides(FULL_MODEL)
    out.update(temporal_mixer=_MIXER_NAMES[m.group(1)], spatial_mixer=_MIXER_NAMES[m.group(2)])
    return out


@dataclass
class AblationJob:
    group:     str               # setting | window | mixer
    setting:   str
    seed:      int
    overrides: Dict[str, Any]

    @property
    def slug(self) -> str:
        safe = re.sub(r"[^A-Za-z0-9_.-]+", "_", self.setting)
        return f"{self.group}_{safe}_s{self.seed}"


def build_jobs(cfg: RunConfig) -> List[AblationJob]:
    ab = cfg.ablation
    entries: List[Tuple[str, str, Dict[str, Any]]] = []
    entries += [("setting", name, setting_overrides(name)) for name in ab.settings]
    entries += [("window", f"W={w}", {**setting_overrides(FULL_MODEL), "window": w}) for w in ab.window_sweep]
    entries += [("mixer", name, mixer_overrides(name)) for name in ab.mixers]
    return [AblationJob(g, name, seed, ov) for g, name, ov in entries for seed in ab.seeds]


def run_job(job: AblationJob, cfg: RunConfig, data_dir: str, out_dir: str) -> Dict[str, Any]:
    """Train + evaluate one job. Never raises: failures come back as a status."""
    row: Dict[str, Any] = {"group": job.group, "setting": job.setting, "seed": job.seed}
    run_dir = Path(out_dir) / "runs" / job.slug
    handler = attach_file_handler(str(run_dir / "run.log"))
    try:
        model = dataclasses.replace(cfg.model, **job.overrides)
        model.validate()
        run_cfg = dataclasses.replace(cfg, model=model, train=dataclasses.replace(cfg.train, seed=job.seed))
        params, _ = train(run_cfg, data_dir, run_dir)
        test = load_split(data_dir, "test")
        agg = evaluate(params, model, test).aggregate()
        row.update({k: agg[k] for k in METRICS})
        row["status"] = "ok"
    except Exception as e:  # noqa: BLE001
        log.error(f"{job.slug} failed: {e}")
        row.update({k: float("nan") for k in METRICS})
        row["status"] = f"failed: {type(e).__name__}: {e}"
    finally:
        detach_file_handler(handler)
    return row


def aggregate_rows(rows: List[Dict[str, Any]]) -> List[Dict[str, Any]]:
    """Per (group, setting): a mean row and a std row (sample std over ok seeds)."""
    out: List[Dict[str, Any]] = []
    keys: List[Tuple[str, str]] = []
    for r in rows:
        if (r["group"], r["setting"]) not in keys:
            keys.append((r["group"], r["setting"]))
    for group, setting in keys:
        ok = [r for r in rows if r["group"] == group and r["setting"] == setting and r["status"] == "ok"]
        mean_row = {"group": group, "setting": setting, "seed": "mean", "status": f"{len(ok)} ok"}
        std_row = {"group": group, "setting": setting, "seed": "std", "status": f"{len(ok)} ok"}
        for m in METRICS:
            vals = np.array([r[m] for r in ok], dtype=np.float64)
            vals = vals[~np.isnan(vals)]
            mean_row[m] = float(vals.mean()) if vals.size else float("nan")
            std_row[m] = float(vals.std(ddof=1)) if vals.size > 1 else 0.0 if vals.size else float("nan")
        out += [mean_row, std_row]
    return out


def _plot(summary: List[Dict[str, Any]], out: Path) -> List[Path]:
    written = []
    means = {(r["group"], r["setting"]): r for r in summary if r["seed"] == "mean"}
    stds = {(r["group"], r["setting"]): r for r in summary if r["seed"] == "std"}

    def series(keys):
        return ({m: [means[k][m] for k in keys] for m in ("nrmse", "stability")},
                {m: [0.0 if math.isnan(stds[k][m]) else stds[k][m] for k in keys] for m in ("nrmse", "stability")})

    for group, filename, title in (("setting", "settings.svg", "Component ablation"),
                                   ("mixer", "mixers.svg", "Token mixers")):
        keys = [k for k in means if k[0] == group]
        if keys:
            mu, sd = series(keys)
            written.append(bar_chart(out / filename, [k[1] for k in keys], mu, sd, title))
    keys = [k for k in means if k[0] == "window"]
    if keys:
        mu, sd = series(keys)
        xs = [int(k[1].split("=")[1]) for k in keys]
        written.append(line_chart(out / "window.svg", xs, mu, sd, "window length W", "Window length"))
    return written


def run_ablation(cfg: RunConfig, data_dir: Union[str, Path], out_dir: Union[str, Path], threads: int = 1) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    jobs = build_jobs(cfg)
    log.info(f"[bold cyan]Ablation grid: {len(jobs)} jobs on {threads} worker(s)[/bold cyan]")

    if threads <= 1:
        rows = [run_job(job, cfg, str(data_dir), str(out)) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(run_job, job, cfg, str(data_dir), str(out)) for job in jobs]
            rows = []
            for job, fut in zip(jobs, futures):
                try:
                    rows.append(fut.result())
                except Exception as e:  # noqa: BLE001
                    log.error(f"{job.slug} crashed: {e}")
                    rows.append({"group": job.group, "setting": job.setting, "seed": job.seed,
                                 "status": f"failed: {type(e).__name__}: {e}",
                                 **{m: float("nan") for m in METRICS}})

    summary = aggregate_rows(rows)
    path = write_results_csv(out / "results.csv", rows + summary, COLUMNS)
    _plot(summary, out)
    print_table(metrics_table("Ablation (seed means)", [r for r in summary if r["seed"] == "mean"],
                              ("setting", "group", "status", "nrmse", "stability", "nrmse_occluded")))
    failed = [r for r in rows if r["status"] != "ok"]
    if failed:
        log.warning(f"{len(failed)} job(s) failed; see the status column of {path}")
    return path
