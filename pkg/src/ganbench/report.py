"""Metric report rows, their CSV / text serializations, and plot-data files.

``report.csv`` layout: provenance lines ``# key: value`` first, then a
header row and one row per (dataset, variant). Floats are written with
``repr`` so they parse back to identical values; a missing metric is an empty
field.
"""
import csv
import io
import math
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

REPORT_COLUMNS = ("dataset", "shape", "variant", "status", "mmd", "emd", "kl", "jsd",
                  "critic_emd", "noise_sha", "error")
METRIC_COLUMNS = ("mmd", "emd", "kl", "jsd", "critic_emd")
VOLATILE_PROVENANCE = ("wall_clock_seconds",)


@dataclass
class ReportRow:
    dataset: str
    shape: str
    variant: str
    status: str = "ok"
    mmd: Optional[float] = None
    emd: Optional[float] = None
    kl: Optional[float] = None
    jsd: Optional[float] = None
    critic_emd: Optional[float] = None
    noise_sha: str = ""
    error: str = ""

    def cells(self) -> List[str]:
        out = []
        for name in REPORT_COLUMNS:
            v = getattr(self, name)
            if name in METRIC_COLUMNS:
                out.append("" if v is None else repr(float(v)))
            else:
                out.append(str(v))
        return out


@dataclass
class MetricReport:
    rows: List[ReportRow] = field(default_factory=list)
    provenance: Dict[str, str] = field(default_factory=dict)

    @property
    def failed(self) -> List[ReportRow]:
        return [r for r in self.rows if r.status != "ok"]


def _one_line(text: str) -> str:
    return " ".join(str(text).split())


def report_csv_text(report: MetricReport) -> str:
    buf = io.StringIO()
    for k, v in report.provenance.items():
        buf.write(f"# {k}: {_one_line(v)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for row in report.rows:
        cells = row.cells()
        cells[-1] = _one_line(cells[-1])
        w.writerow(cells)
    return buf.getvalue()


def report_text(report: MetricReport) -> str:
    """Aligned table followed by the provenance block."""
    header = ["dataset", "shape", "variant", "status", "MMD^2", "EMD", "KL", "JSD", "critic_EMD"]
    table = [header]
    for r in report.rows:
        vals = [r.dataset, r.shape, r.variant, r.status]
        vals += ["-" if v is None else f"{v:.6g}" for v in (r.mmd, r.emd, r.kl, r.jsd, r.critic_emd)]
        table.append(vals)
    widths = [max(len(row[j]) for row in table) for j in range(len(header))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in table]
    for r in report.failed:
        lines.append(f"! {r.dataset}/{r.variant}: {_one_line(r.error)}")
    lines.append("")
    lines.append("[provenance]")
    lines += [f"{k} = {_one_line(v)}" for k, v in report.provenance.items()]
    return "\n".join(lines) + "\n"


def emit_report(report: MetricReport, out_dir, formats: Sequence[str] = ("csv", "txt")) -> List[str]:
    """Write ``report.csv`` and/or ``report.txt``; returns the paths written."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for fmt in formats:
        if fmt == "csv":
            path, text = os.path.join(out_dir, "report.csv"), report_csv_text(report)
        elif fmt == "txt":
            path, text = os.path.join(out_dir, "report.txt"), report_text(report)
        else:
            raise ValueError(f"unknown report format {fmt!r}")
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        paths.append(path)
    return paths


def parse_report(text: str) -> MetricReport:
    """Inverse of :func:`report_csv_text`."""
    provenance = {}
    body = []
    for line in text.splitlines(keepends=True):
        if line.startswith("# ") and not body:
            key, _, value = line[2:].rstrip("\n").partition(": ")
            provenance[key] = value
        else:
            body.append(line)
    reader = csv.reader(io.StringIO("".join(body)))
    header = next(reader, None)
    if header is None or tuple(header) != REPORT_COLUMNS:
        raise ValueError("report header does not match the expected columns")
    rows = []
    for cells in reader:
        kw = dict(zip(REPORT_COLUMNS, cells))
        for m in METRIC_COLUMNS:
            kw[m] = float(kw[m]) if kw[m] != "" else None
        rows.append(ReportRow(**kw))
    return MetricReport(rows, provenance)


def read_report(path) -> MetricReport:
    with open(path, encoding="utf-8") as fh:
        return parse_report(fh.read())


def stable_payload(text: str) -> str:
    """Report text with the wall-clock provenance lines removed (for determinism checks)."""
    return "".join(line for line in text.splitlines(keepends=True)
                   if not any(line.startswith(f"# {k}:") for k in VOLATILE_PROVENANCE))


@dataclass
class PlotSeries:
    """One plot-data file: an ``x`` column plus one or more named ``y`` columns.

    ``kind`` is ``kde-curve``, ``qq-points`` or ``loss-history``.
    """

    kind: str
    filename: str
    x_name: str
    x: np.ndarray
    columns: Dict[str, np.ndarray]
    extra_rows: List[Sequence] = field(default_factory=list)

    def validate(self):
        x = np.asarray(self.x, dtype=np.float64)
        if not np.isfinite(x).all() or not all(np.isfinite(np.asarray(v)).all() for v in self.columns.values()):
            raise ValueError(f"{self.filename}: plot series contains non-finite values")
        if self.kind == "kde-curve" and np.any(np.diff(x) <= 0):
            raise ValueError(f"{self.filename}: kde grid must be strictly increasing")


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating, int, np.integer)) else str(v)


def emit_plot_data(series: Sequence[PlotSeries], out_dir) -> List[str]:
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for s in series:
        s.validate()
        path = os.path.join(out_dir, s.filename)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            if s.kind == "qq-points":
                w.writerow(("kind",) + (s.x_name,) + tuple(s.columns))
                for i, xv in enumerate(s.x):
                    w.writerow(["point", _fmt(xv)] + [_fmt(c[i]) for c in s.columns.values()])
                for extra in s.extra_rows:
                    w.writerow([_fmt(v) for v in extra])
            else:
                w.writerow((s.x_name,) + tuple(s.columns))
                for i, xv in enumerate(s.x):
                    w.writerow([_fmt(xv)] + [_fmt(c[i]) for c in s.columns.values()])
        paths.append(path)
    return paths


def read_plot_data(path) -> Dict[str, list]:
    """Read a plot-data file into ``{column: values}`` (numeric columns as floats)."""
    with open(path, encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        cols = {h: [] for h in header}
        for row in reader:
            for h, v in zip(header, row):
                try:
                    cols[h].append(float(v))
                except ValueError:
                    cols[h].append(v)
    return cols


def finite_or_none(v) -> Optional[float]:
    return None if v is None or not math.isfinite(v) else float(v)

