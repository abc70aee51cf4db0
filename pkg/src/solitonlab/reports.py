"""Serialisation of check reports: JSON documents, convergence CSV and plot data."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from typing import Iterable, Optional

import numpy as np

from .variation import CheckReport

log = logging.getLogger(__name__)

FLOAT_FORMAT = ".17g"
CONVERGENCE_COLUMNS = ["resolution", "sup_residual", "l2_residual", "order", "component"]
PLOT_COLUMNS = ["check", "resolution", "residual", "order",
                "sample", "fd", "quadratic_form", "drifted_square"]


def format_float(x: float) -> str:
    return format(float(x), FLOAT_FORMAT)


def _plain(obj):
    """Convert numpy scalars and arrays to builtins; non-finite floats become None."""
    if isinstance(obj, CheckReport):
        return _plain(obj.to_dict())
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def _dump(obj, indent: int, level: int, out: list):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None:
        out.append("null")
    elif obj is True or obj is False:
        out.append("true" if obj else "false")
    elif isinstance(obj, int):
        out.append(str(obj))
    elif isinstance(obj, float):
        out.append(format_float(obj))
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, list):
        if not obj:
            out.append("[]")
            return
        out.append("[\n")
        for i, v in enumerate(obj):
            out.append(pad)
            _dump(v, indent, level + 1, out)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append(end + "]")
    elif isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        items = list(obj.items())
        for i, (k, v) in enumerate(items):
            out.append(f"{pad}{json.dumps(k)}: ")
            _dump(v, indent, level + 1, out)
            out.append(",\n" if i < len(items) - 1 else "\n")
        out.append(end + "}")
    else:
        raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(obj, indent: int = 2) -> str:
    """JSON text with every float printed to 17 significant digits."""
    out: list = []
    _dump(_plain(obj), indent, 0, out)
    return "".join(out) + "\n"


def report_document(config: dict, reports: Iterable[CheckReport]) -> dict:
    return {"config": config, "reports": [r.to_dict() for r in reports]}


def _write(path: str, text: str):
    if os.path.exists(path):
        log.warning("overwriting %s", path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def write_json(path: str, config: dict, reports: Iterable[CheckReport]) -> None:
    _write(path, dumps(report_document(config, reports)))


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return format_float(v) if math.isfinite(v) else ""
    return str(v)


def convergence_csv(report: CheckReport) -> str:
    """Richardson table of one refinement study."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CONVERGENCE_COLUMNS)
    for row in report.details.get("table", []):
        w.writerow([_cell(row.get(c)) for c in CONVERGENCE_COLUMNS])
    return buf.getvalue()


def write_convergence_csv(path: str, report: CheckReport) -> None:
    _write(path, convergence_csv(report))


def plot_rows(reports: Iterable[CheckReport]) -> list:
    rows = []
    for r in reports:
        table = r.details.get("table")
        if table:
            for t in table:
                name = r.check if t.get("component") in (None, r.check) else f"{r.check}/{t['component']}"
                rows.append({"check": name, "resolution": t["resolution"],
                             "residual": t["sup_residual"], "order": t["order"]})
        else:
            rows.append({"check": r.check, "resolution": r.resolutions[-1],
                         "residual": r.sup_residual, "order": r.order})
        for smp in r.details.get("samples", []) if r.check == "stability_scan" else []:
            rows.append({"check": r.check, "resolution": r.resolutions[-1],
                         "sample": smp["sample"], "fd": smp["fd"],
                         "quadratic_form": smp["quadratic_form"],
                         "drifted_square": smp["drifted_square"]})
    return rows


def emit_plot_data(reports: Iterable[CheckReport], path: str) -> Optional[str]:
    """Long-format CSV for external plotting; returns the path written, or None."""
    reports = list(reports)
    if not reports:
        log.warning("no reports to write plot data for; nothing written")
        return None
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PLOT_COLUMNS)
    for row in plot_rows(reports):
        w.writerow([_cell(row.get(c)) for c in PLOT_COLUMNS])
    _write(path, buf.getvalue())
    return path


def summary_table(reports: Iterable[CheckReport]) -> str:
    lines = [f"{'check':<28} {'backend':<9} {'residual':>12} {'tolerance':>12} {'order':>7}  result"]
    for r in reports:
        order = "" if r.order is None else f"{r.order:7.3f}"
        lines.append(f"{r.check:<28} {r.backend:<9} {r.sup_residual:12.4e} {r.tolerance:12.4e} "
                     f"{order:>7}  {'PASS' if r.passed else 'FAIL'}")
    return "\n".join(lines)
