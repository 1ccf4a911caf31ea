"""Shared report schema: report.json with a checks[] array, data/*.csv,
summary.txt, and a timing sidecar (the only file with wall-clock data)."""
from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if hasattr(obj, "numerator") and hasattr(obj, "denominator") and not isinstance(obj, int):
        return f"{obj.numerator}/{obj.denominator}"
    return obj


def check(name: str, passed, measured, bound, **extra) -> dict:
    out = {"name": name, "pass": bool(passed), "measured": measured, "bound": bound}
    out.update(extra)
    return out


@dataclass
class Report:
    command: str
    config: dict
    checks: list = field(default_factory=list)
    results: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)       # name -> (header, rows)
    timings: dict = field(default_factory=dict)
    _t0: float = field(default_factory=time.perf_counter)

    def add(self, *checks: dict) -> None:
        self.checks.extend(checks)

    def table(self, name: str, header, rows) -> None:
        self.tables[name] = (list(header), [list(r) for r in rows])

    def tic(self, label: str, seconds: float) -> None:
        self.timings[label] = seconds

    @property
    def ok(self) -> bool:
        return all(c["pass"] for c in self.checks)

    @property
    def failed(self) -> list:
        return [c["name"] for c in self.checks if not c["pass"]]

    def to_json(self) -> str:
        body = {"command": self.command, "config": self.config, "pass": self.ok,
                "checks": self.checks, "results": self.results}
        return json.dumps(_clean(body), indent=2, sort_keys=True) + "\n"

    def summary(self) -> str:
        lines = [f"korn-lab {self.command}", ""]
        for c in self.checks:
            lines.append(f"{'PASS' if c['pass'] else 'FAIL'}  {c['name']}: measured={_fmt(c['measured'])} "
                         f"bound={_fmt(c['bound'])}")
        lines.append("")
        lines.append("all checks passed" if self.ok else "violated: " + ", ".join(self.failed))
        return "\n".join(lines) + "\n"

    def write(self, out: str | os.PathLike) -> Path:
        out = Path(out)
        (out / "data").mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(self.to_json())
        (out / "summary.txt").write_text(self.summary())
        for name, (header, rows) in self.tables.items():
            (out / "data" / f"{name}.csv").write_text(to_csv(header, rows))
        meta = {"command": self.command, "finished": time.strftime("%Y-%m-%dT%H:%M:%S"),
                "elapsed_s": time.perf_counter() - self._t0, "timings": self.timings}
        (out / "run_meta.json").write_text(json.dumps(_clean(meta), indent=2, sort_keys=True) + "\n")
        return out


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(_clean(v))


def to_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()
