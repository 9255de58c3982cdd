"""
Report Writers

Serializes a run report as JSON, as plain-text tables in the published
layout (bounds in square brackets, confidence intervals in parentheses)
and as a flat CSV of cell x effect rows.
"""

import json
import math

import numpy as np
import pandas as pd

from medbounds import logger
from medbounds.sensitivity import estimands

log = logger("report")

CSV_COLUMNS = ("effect", "assumptions", "rule", "lower", "upper", "ci_low", "ci_high", "status")


def jsonable(value):
    """Plain-JSON copy: numpy scalars and arrays unwrapped, non-finite floats as null."""
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [jsonable(v) for v in value.tolist()]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def write_json(report, path):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(jsonable(report), f, indent=2, allow_nan=False)
        f.write("\n")


def format_bounds(lower, upper):
    return f"[ {lower:.3f} {upper:.3f} ]"


def format_ci(low, high):
    return f"( {low:.3f} {high:.3f} )"


def _panels(cells):
    """Split cells into the covariate panel and the mediator panel."""
    panels = {"Missing X": [], "Missing M": []}
    for cell in cells:
        mediator = cell["column"].startswith("M")
        panels["Missing M" if mediator else "Missing X"].append(cell)
    return [(title, members) for title, members in panels.items() if members]


def _ordered(values):
    seen = []
    for value in values:
        if value not in seen:
            seen.append(value)
    return seen


def _cell_key(cell):
    return cell["row"], cell["column"]


def render_effect_table(report, effect):
    """Text table of one effect over the grid."""
    label = estimands.EFFECTS[effect][2]
    point = report["point_estimates"]["effects"][effect]
    lines = [f"Bounds on {label} (point estimate: {point:.3f})"]
    if not estimands.EFFECTS[effect][3]:
        lines.append("Note: bounds on this effect are not necessarily sharp.")

    for title, members in _panels(report["cells"]):
        by_key = {_cell_key(cell): cell for cell in members}
        rows = _ordered(key[0] for key in by_key)
        columns = _ordered(key[1] for key in by_key)

        grid = [[title] + columns]
        for row in rows:
            bounds_line, ci_line = [row], [""]
            for column in columns:
                cell = by_key.get((row, column))
                if cell is None:
                    bounds_line.append("")
                    ci_line.append("")
                elif cell["status"] != "Success":
                    bounds_line.append("failed")
                    ci_line.append("")
                else:
                    bounds = cell["effects"][effect]
                    bounds_line.append(format_bounds(bounds["lower"], bounds["upper"]))
                    ci = (cell.get("ci") or {}).get("intervals", {}).get(effect)
                    ci_line.append(format_ci(*ci) if ci else "")
            grid.append(bounds_line)
            if any(ci_line[1:]):
                grid.append(ci_line)

        widths = [max(len(line[j]) for line in grid) for j in range(len(grid[0]))]
        lines.append("")
        for k, line in enumerate(grid):
            lines.append("  ".join(text.ljust(width) for text, width in zip(line, widths)).rstrip())
            if k == 0:
                lines.append("-" * (sum(widths) + 2 * (len(widths) - 1)))
    return "\n".join(lines)


def render_tables(report):
    return "\n\n\n".join(render_effect_table(report, effect) for effect in estimands.EFFECTS) + "\n"


def write_tables(report, path):
    with open(path, "w", encoding="utf-8") as f:
        f.write(render_tables(report))


def csv_rows(report):
    rows = []
    for cell in report["cells"]:
        row, rule = _cell_key(cell)
        for effect in estimands.EFFECTS:
            bounds = (cell.get("effects") or {}).get(effect) or {}
            ci = ((cell.get("ci") or {}).get("intervals") or {}).get(effect) or (None, None)
            rows.append({
                "effect": effect,
                "assumptions": row,
                "rule": rule,
                "lower": bounds.get("lower"),
                "upper": bounds.get("upper"),
                "ci_low": ci[0],
                "ci_high": ci[1],
                "status": cell["status"],
            })
    return rows


def write_csv(report, path):
    pd.DataFrame(csv_rows(report), columns=list(CSV_COLUMNS)).to_csv(path, index=False)


def write_outputs(report, config):
    """
    Write every requested output kind through the report_writers hooks.

    Returns:
        dict: kind -> path
    """
    from medbounds import hooks

    filenames = {"json": "report.json", "tables": "tables.txt", "csv": "bounds.csv"}
    paths = {}
    for kind in config.outputs:
        path = config.output_path(filenames[kind])
        hooks.get_hook("report_writers", kind)(report, path)
        paths[kind] = path
        log.info(f"Report: wrote {path}")
    return paths
