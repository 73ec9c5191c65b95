"""Renderers for command results.

Every command produces a plain record (nested dicts, lists, numbers and
strings). The record is rendered as a human-readable table, as JSON with
sorted keys, or as CSV rows of its main per-level or per-probe table.
"""

import csv
import io
import json
from pathlib import Path
from typing import Any, Dict, List, Optional

from .errors import DomainError
from .log import get_logger

log = get_logger(__name__)

EXTENSIONS = {"table": "txt", "json": "json", "csv": "csv"}
WIDTH = 70


# ============================================================================
# Value formatting
# ============================================================================

def format_value(value: Any) -> str:
    """Short text for one table cell."""
    if value is None:
        return "-"
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def format_estimate(value: Optional[float], width: Optional[float]) -> str:
    """Mean with its confidence half-width, e.g. ``0.0125 ± 0.0004``."""
    if value is None:
        return "-"
    if width is None:
        return format_value(value)
    return f"{value:.6g} ± {width:.2g}"


def _table(header: List[str], rows: List[List[str]]) -> List[str]:
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h) for i, h in enumerate(header)]
    lines = ["  " + "  ".join(h.rjust(w) for h, w in zip(header, widths))]
    for row in rows:
        lines.append("  " + "  ".join(c.rjust(w) for c, w in zip(row, widths)))
    return lines


def _section(lines: List[str], title: str) -> None:
    lines.append("")
    lines.append("-" * WIDTH)
    lines.append(title)
    lines.append("-" * WIDTH)


def _banner(title: str, subtitle: str = "") -> List[str]:
    lines = ["=" * WIDTH, title]
    if subtitle:
        lines.append(subtitle)
    lines.append("=" * WIDTH)
    return lines


# ============================================================================
# Tables
# ============================================================================

def format_solve(record: Dict[str, Any]) -> str:
    system = record["system"]
    lines = _banner(
        "ANALYTIC SOLUTION",
        f"ell={system['ell']}  C={system['C']}  mu={format_value(system['mu'])}  lambda={format_value(system['lambda'])}",
    )

    _section(lines, "ROOTS AND STATIONARY LAW")
    rows = [
        [str(r["level"]), format_value(r["lambda"]), format_value(r["rho"]), format_value(r["varsigma"]),
         format_value(r["mean"]), format_value(r["p99"])]
        for r in record["levels"]
    ]
    lines += _table(["level", "lambda_k", "rho_k", "varsigma_k", "mean", "p99"], rows)

    if any(r["quota"] is not None for r in record["levels"]):
        _section(lines, "LOSS AT QUOTAS")
        rows = [
            [str(r["level"]), format_value(r["quota"]), format_value(r["overflow"]),
             format_value(r["loss_exact"]), format_value(r["loss_asymptotic"])]
            for r in record["levels"]
        ]
        lines += _table(["level", "N_k", "s^(N+1)", "loss_exact", "loss_asymptotic"], rows)
        for r in record["levels"]:
            if r.get("note"):
                lines.append(f"  level {r['level']}: {r['note']}")
        if record.get("J_bar") is not None:
            lines.append(f"  J-bar: {format_value(record['J_bar'])}")

    heavy = record.get("heavy_load")
    if heavy:
        _section(lines, "HEAVY LOAD")
        lines.append(f"  delta: {format_value(heavy['delta'])}  Delta: {format_value(heavy['Delta'])}")
        lines.append(f"  kappa: {format_value(heavy['kappa'])}")
        lines.append(f"  root: {format_value(heavy['root'])} (exact {format_value(heavy['root_exact'])})")
        lines.append(f"  loss: {format_value(heavy['loss'])}")

    lines.append("")
    lines.append("=" * WIDTH)
    return "\n".join(lines)


def format_simulate(record: Dict[str, Any]) -> str:
    estimate = record["estimate"]
    widths = estimate["half_widths"]
    lines = _banner(
        "SIMULATION ESTIMATES",
        f"seed={record['seed']}  replications={estimate['replications']}  arrivals={estimate['arrivals']}",
    )

    _section(lines, "OVERFLOW FRACTIONS")
    rows = []
    for k, row in enumerate(estimate_rows(record)):
        rows.append([
            str(row["level"]),
            format_estimate(row["class_J"], _at(widths.get("class_J"), k)),
            format_estimate(row["cum_J"], _at(widths.get("cum_J"), k)),
            format_value(row["departure_cum_J"]),
            format_value(row["analytic_cum_J"]),
        ])
    lines += _table(["k", "J^(k)", "J_k", "J_k (departures)", "J_k (analytic)"], rows)
    lines.append("")
    lines.append(f"  J:     {format_estimate(estimate['J'], _at(widths.get('J'), 0))}")
    lines.append(f"  J-bar: {format_estimate(estimate['J_bar'], _at(widths.get('J_bar'), 0))}")
    analytic = record.get("analytic")
    if analytic and analytic.get("J_bar") is not None:
        lines.append(f"  J-bar (analytic): {format_value(analytic['J_bar'])}")

    if any(estimate["loss_length"]):
        _section(lines, "REJECTIONS")
        rows = [
            [str(k + 1), format_value(f), format_value(x)]
            for k, (f, x) in enumerate(zip(estimate["loss_fraction"], estimate["loss_length"]))
        ]
        lines += _table(["class", "rejected fraction", "lost length"], rows)

    if record.get("trajectory"):
        lines.append("")
        lines.append(f"  Trajectory: {record['trajectory']}")
    lines.append("")
    lines.append("=" * WIDTH)
    return "\n".join(lines)


def format_optimize(record: Dict[str, Any]) -> str:
    certificate = record["certificate"]
    lines = _banner(
        "OPTIMIZATION",
        f"decision={record['decision']}  epsilon={format_value(record['epsilon'])}  mode={record['mode']}",
    )
    lines.append(f"  Optimum: {record['name']} = {record['optimum']}")
    lines.append(f"  J-bar:   {format_value(record['J_bar'])}")
    lines.append(f"  Certificate: {certificate['kind']}, J-bar one step below = {format_value(certificate['previous'])}")
    lines.append(f"  Bounds: {record['bounds'][0]} .. {format_value(record['bounds'][1])}  widenings: {record['widenings']}")

    _section(lines, "BREAKDOWN")
    rows = [
        [str(r["level"]), format_value(r["alpha_class"]), format_value(r["N_class"]),
         format_value(r["alpha_cum"]), format_value(r["N_cum"]), format_value(r["term"])]
        for r in record["levels"]
    ]
    lines += _table(["k", "alpha^(k)", "N^(k)", "alpha_k", "N_k", "alpha_k J_k"], rows)

    _section(lines, "SEARCH TRACE")
    lines += format_probes(record["trace"], record["name"])
    lines.append("")
    lines.append("=" * WIDTH)
    return "\n".join(lines)


def format_probes(probes: List[Dict[str, Any]], name: str = "value") -> List[str]:
    """Probe table lines, in the order given."""
    return _table([name, "J-bar"], [[str(p["value"]), format_value(p["J_bar"])] for p in probes])


def format_validate(record: Dict[str, Any]) -> str:
    lines = _banner("VALIDATION", f"seeds={record['seeds']}  levels={record['levels']}")
    rows = [
        [c["check"], format_value(c["deviation"]), format_value(c.get("threshold")), "PASS" if c["passed"] else "FAIL"]
        for c in record["checks"]
    ]
    lines += _table(["check", "deviation", "threshold", "result"], rows)
    lines.append("")
    lines.append(f"  Overall: {'PASS' if record['passed'] else 'FAIL'}")
    lines.append("=" * WIDTH)
    return "\n".join(lines)


FORMATTERS = {
    "solve": format_solve,
    "simulate": format_simulate,
    "optimize": format_optimize,
    "validate": format_validate,
}


def _at(values: Optional[List[Optional[float]]], k: int) -> Optional[float]:
    if not values or k >= len(values):
        return None
    return values[k]


# ============================================================================
# CSV rows
# ============================================================================

def estimate_rows(record: Dict[str, Any]) -> List[Dict[str, Any]]:
    estimate = record["estimate"]
    analytic = (record.get("analytic") or {}).get("cum_J")
    widths = estimate["half_widths"]
    departures = estimate["departure_cum_J"]
    return [
        {
            "level": k + 1,
            "class_J": estimate["class_J"][k],
            "class_J_half_width": _at(widths.get("class_J"), k),
            "cum_J": estimate["cum_J"][k],
            "cum_J_half_width": _at(widths.get("cum_J"), k),
            "departure_cum_J": None if departures is None else departures[k],
            "analytic_cum_J": _at(analytic, k),
            "loss_fraction": estimate["loss_fraction"][k],
        }
        for k in range(len(estimate["class_J"]))
    ]


def table_rows(record: Dict[str, Any]) -> List[Dict[str, Any]]:
    """Main table of a record as flat rows."""
    command = record["command"]
    if command == "solve":
        keys = ("level", "lambda", "rho", "varsigma", "mean", "variance", "median", "p99",
                "quota", "overflow", "loss_exact", "loss_asymptotic")
        return [{key: r[key] for key in keys} for r in record["levels"]]
    if command == "simulate":
        return estimate_rows(record)
    if command == "optimize":
        return [{"value": p["value"], "J_bar": p["J_bar"]} for p in record["trace"]]
    if command == "validate":
        return [{key: c.get(key) for key in ("check", "deviation", "threshold", "passed")} for c in record["checks"]]
    raise DomainError(f"unknown record kind {command!r}")


def to_csv(record: Dict[str, Any]) -> str:
    rows = table_rows(record)
    buffer = io.StringIO()
    if rows:
        writer = csv.DictWriter(buffer, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({key: "" if value is None else value for key, value in row.items()})
    return buffer.getvalue()


def to_json(record: Dict[str, Any]) -> str:
    return json.dumps(record, indent=2, sort_keys=True) + "\n"


# ============================================================================
# Output
# ============================================================================

def render(record: Dict[str, Any], fmt: str = "table") -> str:
    """Render ``record`` as ``table``, ``json`` or ``csv`` text."""
    if fmt == "json":
        return to_json(record)
    if fmt == "csv":
        return to_csv(record)
    if fmt == "table":
        return FORMATTERS[record["command"]](record) + "\n"
    raise DomainError(f"unknown output format {fmt!r}")


def emit(record: Dict[str, Any], fmt: str = "table", out_dir: Optional[Path] = None) -> Optional[Path]:
    """Print the rendered record, or write it to ``out_dir/<command>.<ext>``.

    Returns:
        Path of the written file, or None when printed
    """
    text = render(record, fmt)
    if out_dir is None:
        print(text, end="")
        return None
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{record['command']}.{EXTENSIONS[fmt]}"
    path.write_text(text, encoding="utf-8")
    log.info(f"Wrote {path}")
    return path
