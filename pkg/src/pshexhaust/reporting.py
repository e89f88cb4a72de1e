"""Report files: line-delimited JSON records, a text summary and CSV plot tables.

The records file starts with one header line (``"kind": "header"``) holding
the configuration and every constant the pipeline chose.  Each following line
is one checked inequality (``"kind": "record"``).  Only the header's
``timestamp`` differs between two runs of the same configuration.
"""

import csv
import json
import math
from collections import OrderedDict
from datetime import datetime, timezone
from pathlib import Path

from .records import _plain

RECORDS_FILE = "records.jsonl"
SUMMARY_FILE = "summary.txt"
PLOT_DIR = "plots"


class ReportError(ValueError):
    """A report file is missing or malformed."""


def _dumps(obj):
    return json.dumps(_plain(obj), sort_keys=True, allow_nan=False)


def write_records(path, header, records, timestamp=None):
    """Write the header line and one line per record dict."""
    head = dict(header, kind="header")
    head["timestamp"] = timestamp or datetime.now(timezone.utc).isoformat(timespec="seconds")
    with open(path, "w") as fh:
        fh.write(_dumps(head) + "\n")
        for rec in records:
            fh.write(_dumps(dict(rec, kind="record")) + "\n")


def read_report(path):
    """Return ``(header, records)`` from a records file."""
    try:
        with open(path) as fh:
            lines = [ln for ln in fh if ln.strip()]
    except OSError as exc:
        raise ReportError(f"cannot read report {path}: {exc}") from None
    try:
        rows = [json.loads(ln) for ln in lines]
    except json.JSONDecodeError as exc:
        raise ReportError(f"report {path} is not line-delimited JSON: {exc}") from None
    if not rows or rows[0].get("kind") != "header":
        raise ReportError(f"report {path} has no header line")
    records = rows[1:]
    for i, rec in enumerate(records, 2):
        if rec.get("kind") != "record" or not rec.get("anchor"):
            raise ReportError(f"line {i} of {path} is not an anchored record")
    return rows[0], records


def _fmt(x):
    if isinstance(x, str):
        return x
    if x is None:
        return "-"
    return f"{x:.3e}"


def summarize(header, records):
    """Human summary: outcome, chosen constants, and records grouped by anchor."""
    groups = OrderedDict()
    for rec in records:
        groups.setdefault(rec["anchor"], []).append(rec)
    failures = [r for r in records if not r["passed"]]
    lines = [f"pipeline: {header.get('pipeline')}  domain: {header.get('domain')}  "
             f"n: {header.get('dimension')}  seed: {header.get('seed')}",
             f"outcome: {header.get('outcome')}"]
    if header.get("abort"):
        lines.append(f"abort: {header['abort'].get('message')}")
        lines.append(f"  at: {header['abort'].get('point')}")
    state = header.get("state") or {}
    kit = header.get("kit") or {}
    if kit:
        lines.append(f"K0 = {kit.get('K0')}  c = {kit.get('c')}")
    if state:
        lines.append(f"c0 = {state.get('c0')}  K = {state.get('truncation_K')}")
        for key in ("eps_seq", "t_seq", "lambda_table", "alpha_seq", "s_seq"):
            table = state.get(key) or {}
            if table:
                items = sorted(table.items(), key=lambda kv: _key(kv[0]))
                lines.append(f"{key}: " + ", ".join(
                    f"{k}: {_fmt(v['eps'] if isinstance(v, dict) else v)}" for k, v in items))
    lines.append(f"{len(records)} records, {len(failures)} failures")
    lines.append("")
    width = max((len(a) for a in groups), default=6)
    lines.append(f"{'anchor':<{width}}  {'records':>7}  {'failed':>6}  {'samples':>8}  worst - tol")
    for anchor, recs in groups.items():
        failed = sum(not r["passed"] for r in recs)
        samples = sum(int(r["sample_count"]) for r in recs)
        worst = max(_excess(r) for r in recs)
        lines.append(f"{anchor:<{width}}  {len(recs):>7}  {failed:>6}  {samples:>8}  {_fmt(worst)}")
    for rec in failures:
        lines.append(f"FAILED {rec['anchor']}: worst violation {_fmt(_num(rec['worst_violation']))} "
                     f"> tolerance {_fmt(_num(rec['tolerance']))} at {rec.get('location')}")
    return "\n".join(lines) + "\n"


def _key(k):
    try:
        return (0, float(k), "")
    except ValueError:
        return (1, 0.0, str(k))


def _num(v):
    return float(v) if isinstance(v, str) else v


def _excess(rec):
    w, t = _num(rec["worst_violation"]), _num(rec["tolerance"])
    if math.isinf(w):
        return w
    return w - t


def describe(report_path):
    """Summary text of a records file (or of ``records.jsonl`` in a directory)."""
    path = Path(report_path)
    if path.is_dir():
        path = path / RECORDS_FILE
    header, records = read_report(path)
    return summarize(header, records)


def write_table(path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([repr(float(v)) if not isinstance(v, (int, str)) else v for v in row])
