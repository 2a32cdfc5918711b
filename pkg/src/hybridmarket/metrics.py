"""Metric accounting and report export."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

CSV_COLUMNS = ("mechanism", "runs", "seed", "sw_mean", "sw_stderr", "ni_mean", "rt_ms",
               "ptct_mean_ms", "mu_util", "es_util", "cs_util")


@dataclass(frozen=True)
class MetricsReport:
    mechanism: str
    runs: int
    seed: int
    sw_mean: float
    sw_stderr: float
    ni_mean: float
    rt_ms: float
    ptct_mean_ms: float
    mu_util: float
    es_util: float
    cs_util: float
    risk_table: tuple = field(default=(), compare=False)

    def __post_init__(self):
        if self.runs < 1:
            raise ValueError("a report needs at least one run")
        if self.sw_stderr < 0:
            raise ValueError("standard error cannot be negative")

    def row(self) -> dict:
        return {c: getattr(self, c) for c in CSV_COLUMNS}


def mean_and_stderr(values: Sequence[float]) -> tuple[float, float]:
    n = len(values)
    if n == 0:
        return math.nan, math.nan
    mean = math.fsum(values) / n
    if n == 1:
        return mean, 0.0
    var = math.fsum((x - mean) ** 2 for x in values) / (n - 1)
    return mean, math.sqrt(var / n)


def count_interactions(events: Iterable[str]) -> int:
    """NI over an MU-ES event log: every proposal, response and notification counts once."""
    counted = {"propose", "respond", "accept", "reject", "notify", "withdraw", "displace"}
    return sum(1 for e in events if e in counted)


def trace_events(history: Sequence[dict]) -> list[str]:
    """Event log implied by a matcher trace of ``{target: (new proposers, accepted)}`` rounds.

    Withdrawals of a held proposer and displacement notices are reconstructed from who held what.
    """
    events: list[str] = []
    holder: dict = {}
    for trace in history:
        movers = {p for new, _ in trace.values() for p in new}
        for p in sorted(movers, key=repr):
            if p in holder:
                events.append("withdraw")
                del holder[p]
        for t in sorted(trace, key=repr):
            new, accepted = trace[t]
            events.extend("propose" for _ in new)
            events.extend("respond" for _ in new)
            accepted = set(accepted)
            for p, tt in list(holder.items()):
                if tt == t and p not in accepted:
                    events.append("displace")
                    del holder[p]
            for p in accepted:
                holder[p] = t
    return events


def _fmt(value) -> str:
    if isinstance(value, float):
        return format(value, ".6g")
    return str(value)


def render_csv(reports: Sequence[MetricsReport]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in reports:
        writer.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])
    return buf.getvalue()


def render_json(reports: Sequence[MetricsReport]) -> str:
    rows = []
    for r in reports:
        row = {c: getattr(r, c) for c in CSV_COLUMNS}
        for c, v in row.items():
            if isinstance(v, float):
                row[c] = None if math.isnan(v) else float(_fmt(v))
        rows.append(row)
    return json.dumps(rows, indent=2) + "\n"


def export_report(reports: MetricsReport | Sequence[MetricsReport], path: str | Path,
                  fmt: str | None = None) -> Path:
    if isinstance(reports, MetricsReport):
        reports = [reports]
    path = Path(path)
    fmt = fmt or ("json" if path.suffix == ".json" else "csv")
    if fmt not in ("csv", "json"):
        raise ValueError(f"unknown export format {fmt!r}")
    text = render_csv(reports) if fmt == "csv" else render_json(reports)
    path.write_text(text, encoding="utf-8")
    return path


def _coerce(column: str, raw: str):
    if column == "mechanism":
        return raw
    if column in ("runs", "seed"):
        return int(raw)
    return math.nan if raw in ("None", "") else float(raw)


def parse_report(path: str | Path) -> list[MetricsReport]:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".json":
        rows = json.loads(text)
    else:
        rows = list(csv.DictReader(io.StringIO(text)))
    return [MetricsReport(**{c: _coerce(c, str(row[c])) for c in CSV_COLUMNS}) for row in rows]


def rounded(report: MetricsReport) -> MetricsReport:
    """The report as it reads back after export at six significant digits."""
    values = {}
    for c in CSV_COLUMNS:
        v = getattr(report, c)
        values[c] = float(_fmt(v)) if isinstance(v, float) else v
    return MetricsReport(**values)


def as_dict(report: MetricsReport) -> dict:
    d = asdict(report)
    d.pop("risk_table", None)
    return d
