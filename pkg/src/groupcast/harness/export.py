"""CSV export and re-import for reports, traces and sweeps.

Schemas (column order is stable; empty cell means ``None``):

``report.csv``
    REPORT_HEADER, one row per :class:`MetricsReport`.
``trace.csv``
    ``# key=value`` lines carrying the run metadata, then TRACE_HEADER and one
    row per :class:`TraceEvent`. ``packets`` is a ``;``-joined list of seqs.
``sweep.csv``
    ``kind`` (``run`` or ``summary``) followed by the sweep columns, see
    :mod:`groupcast.harness.sweep`.

Floats are written with 17 significant digits, which round-trips every
IEEE double exactly, so equal inputs give byte-identical files.
"""

from __future__ import annotations

import csv
import io
from dataclasses import fields
from pathlib import Path
from typing import Iterable, Sequence

from ..access_strategies import TraceEvent
from .metrics import REPORT_FIELDS, MetricsReport, RunTrace, compute_report

REPORT_HEADER = ",".join(REPORT_FIELDS)
TRACE_FIELDS = tuple(f.name for f in fields(TraceEvent))
TRACE_HEADER = ",".join(TRACE_FIELDS)


class ExportError(OSError):
    """I/O failure, always naming the offending path."""


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return format(value, ".17g")
    if isinstance(value, tuple):
        return ";".join(fmt(v) for v in value)
    return str(value)


def write_text(path, text: str) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise ExportError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def _read(path) -> str:
    try:
        with open(path, newline="") as fh:
            return fh.read()
    except OSError as exc:
        raise ExportError(f"cannot read {path}: {exc.strerror or exc}") from exc


def rows_to_csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


# -- reports -----------------------------------------------------------------

_REPORT_TYPES = {f.name: f.type for f in fields(MetricsReport)}


def _parse_field(kind: str, text: str):
    if text == "":
        return None
    if kind.startswith("str"):
        return text
    if kind.startswith("int"):
        return int(text)
    return float(text)


def report_csv(reports: MetricsReport | Sequence[MetricsReport]) -> str:
    if isinstance(reports, MetricsReport):
        reports = [reports]
    return rows_to_csv(REPORT_FIELDS, ([getattr(r, k) for k in REPORT_FIELDS] for r in reports))


def write_report(reports, path) -> Path:
    return write_text(path, report_csv(reports))


def read_report(path) -> list[MetricsReport]:
    reader = csv.reader(io.StringIO(_read(path)))
    header = next(reader)
    if ",".join(header) != REPORT_HEADER:
        raise ValueError(f"{path}: unexpected report header")
    return [MetricsReport(**{k: _parse_field(_REPORT_TYPES[k], v) for k, v in zip(header, row)})
            for row in reader]


# -- traces ------------------------------------------------------------------

def _meta_value(text: str):
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def trace_csv(trace: RunTrace) -> str:
    head = "".join(f"# {k}={fmt(v)}\n" for k, v in trace.meta.items())
    return head + rows_to_csv(TRACE_FIELDS, ([getattr(e, k) for k in TRACE_FIELDS]
                                             for e in trace.events))


def write_trace(trace: RunTrace, path) -> Path:
    return write_text(path, trace_csv(trace))


def parse_trace(text: str) -> RunTrace:
    meta = {}
    lines = text.splitlines()
    i = 0
    while i < len(lines) and lines[i].startswith("#"):
        k, v = lines[i][1:].strip().split("=", 1)
        meta[k] = _meta_value(v)
        i += 1
    reader = csv.reader(lines[i:])
    header = next(reader)
    if ",".join(header) != TRACE_HEADER:
        raise ValueError("unexpected trace header")
    events = []
    for row in reader:
        d = dict(zip(header, row))
        events.append(TraceEvent(
            subframe=int(d["subframe"]), event=d["event"], group=int(d["group"]),
            packets=tuple(int(s) for s in d["packets"].split(";") if s),
            prbs=int(d["prbs"]), channel=d["channel"], m=int(d["m"]), retx=int(d["retx"]),
            count=int(d["count"]), total=int(d["total"]), ref=int(d["ref"])))
    return RunTrace(meta, events)


def read_trace(path) -> RunTrace:
    try:
        return parse_trace(_read(path))
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from exc


def replay(path) -> MetricsReport:
    """Recompute the report of a run from its exported trace alone."""
    return compute_report(read_trace(path))
