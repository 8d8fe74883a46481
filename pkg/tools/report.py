# tools/report.py — OneDF v1
"""
Run artifacts: JSONL records, CSV tables, and rich summary tables.

Public API:
  JsonlWriter, read_jsonl
  write_track_csv(path, frames), write_results_csv(path, rows, columns)
  metrics_table(title, rows, columns) -> rich Table, print_table(table)
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Union

from rich.table import Table

from former.logger import CONSOLE

TRACK_HEADER = ("frame", "landmark", "x", "y")


class JsonlWriter:
    """One json.dumps(sort_keys=True) object per line, flushed per record."""

    def __init__(self, path: Union[str, Path], append: bool = False) -> None:
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._f = open(self.path, "a" if append else "w", encoding="utf-8")

    def write(self, record: Dict[str, Any]) -> None:
        self._f.write(json.dumps(record, sort_keys=True) + "\n")
        self._f.flush()

    def close(self) -> None:
        self._f.close()

    def __enter__(self) -> "JsonlWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def read_jsonl(path: Union[str, Path]) -> List[Dict[str, Any]]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [json.loads(line) for line in lines if line.strip()]


def write_track_csv(path: Union[str, Path], frames: Iterable) -> int:
    """Write rows as frames arrive (each TrackFrame before the next is produced). Returns row count."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    rows = 0
    with open(p, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f)
        w.writerow(TRACK_HEADER)
        for frame in frames:
            for n, (x, y) in enumerate(frame.coords):
                w.writerow((frame.t - 1, n, f"{x:.4f}", f"{y:.4f}"))
                rows += 1
            f.flush()
    return rows


def _cell(value: Any) -> str:
    if isinstance(value, float):
        return "nan" if math.isnan(value) else f"{value:.6g}"
    return "" if value is None else str(value)


def write_results_csv(path: Union[str, Path], rows: Sequence[Dict[str, Any]], columns: Sequence[str]) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with open(p, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f)
        w.writerow(columns)
        for row in rows:
            w.writerow([_cell(row.get(c)) for c in columns])
    return p


def metrics_table(title: str, rows: Sequence[Dict[str, Any]], columns: Sequence[str],
                  highlight: Optional[str] = None) -> Table:
    table = Table(title=title, title_style="bold cyan", header_style="bold")
    for c in columns:
        table.add_column(c, justify="left" if c in ("sequence", "setting", "seed", "group") else "right")
    for row in rows:
        style = "bold green" if highlight is not None and row.get(columns[0]) == highlight else None
        table.add_row(*[_cell(row.get(c)) for c in columns], style=style)
    return table


def print_table(table: Table) -> None:
    CONSOLE.print(table)
