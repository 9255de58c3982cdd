"""
Run Config Record Controller

Defines one analysis: the data file and its roles, the grid of relaxation
cells, subsampling and outputs.
"""

import json
import os
from dataclasses import dataclass

from medbounds.exceptions import ConfigError, InvalidSource, throw
from medbounds.sensitivity.calibration import ASSUMPTIONS, parse_rule
from medbounds.sensitivity.dataset import LoadOptions, VariableRoles
from medbounds.sensitivity.doctype.base_record import Record
from medbounds.sensitivity.doctype.solver_settings.solver_settings import get_settings

# Published layout: covariate panel, then mediator panel
PAPER_ROWS = (("A1",), ("A2",), ("A3",), ("A1", "A2"), ("A2", "A3"), ("A1", "A3"), ("A1", "A2", "A3"))
PAPER_X_COLUMNS = ("X1", "X2", "X3", "probit")
PAPER_M_ROWS = (("A2",), ("A3",), ("A2", "A3"))
PAPER_M_COLUMNS = ("M1", "M2", "M3")

OUTPUT_KINDS = ("json", "tables", "csv")


@dataclass(frozen=True)
class GridCell:
    assumptions: tuple
    rule: object

    @property
    def row(self):
        return "+".join(self.assumptions) if self.assumptions else "none"

    @property
    def column(self):
        return self.rule.label

    @property
    def label(self):
        return f"{self.row} / {self.column}"

    def as_dict(self):
        return {"assumptions": list(self.assumptions), "rule": self.rule.as_dict()}


def paper_grid():
    cells = [{"assumptions": list(row), "rule": rule} for row in PAPER_ROWS for rule in PAPER_X_COLUMNS]
    cells += [{"assumptions": list(row), "rule": rule} for row in PAPER_M_ROWS for rule in PAPER_M_COLUMNS]
    return cells


def parse_cell(spec):
    """
    Parse one grid cell.

    Args:
        spec: {"assumptions": [...], "rule": ...}

    Returns:
        GridCell
    """
    if not isinstance(spec, dict) or "rule" not in spec:
        throw(f"Grid cell must be an object with a rule: {spec!r}", ConfigError)
    assumptions = spec.get("assumptions", [])
    if isinstance(assumptions, str):
        assumptions = [a.strip() for a in assumptions.split("+") if a.strip()]
    unknown = set(assumptions) - set(ASSUMPTIONS)
    if unknown:
        throw(f"Grid cell names unknown assumption(s) {sorted(unknown)}", ConfigError)

    rule = parse_rule(spec["rule"])
    active = tuple(sorted(set(assumptions)))
    if rule.kind == "drop" and rule.source == "M" and "A1" in active:
        throw(f"Cell {'+'.join(active)} / {rule.label}: the A1 model has no mediators", InvalidSource)
    if rule.kind == "fixed":
        missing = set(active) - set(rule.fixed)
        if missing:
            throw(f"Fixed rule gives no budget for {sorted(missing)}", ConfigError)
    return GridCell(assumptions=active, rule=rule)


class RunConfig(Record):
    """A complete analysis definition."""

    record_dir = os.path.dirname(os.path.abspath(__file__))

    def validate(self):
        """Validate the configuration."""
        if self.roles is not None and not isinstance(self.roles, dict):
            throw("roles must be a JSON object", ConfigError)

        if self.grid == "paper":
            self.grid = paper_grid()
        if not isinstance(self.grid, list) or not self.grid:
            throw("grid must be a non-empty list of cells or \"paper\"", ConfigError)
        self.cells = [parse_cell(cell) for cell in self.grid]

        if self.subsampling == "none" or self.subsampling is None:
            self.subsampling = "none"
        elif not isinstance(self.subsampling, dict):
            throw("subsampling must be an object or \"none\"", ConfigError)
        else:
            self.get_plan()

        unknown = set(self.outputs or []) - set(OUTPUT_KINDS)
        if unknown:
            throw(f"Unknown output kind(s) {sorted(unknown)}", ConfigError)
        if self.seed < 0:
            throw("seed must be nonnegative", ConfigError)
        if not isinstance(self.groups, dict):
            throw("groups must map labels to column lists", ConfigError)

        self.get_settings()

    def get_roles(self):
        if not self.roles:
            throw("roles are required", ConfigError)
        return VariableRoles.from_dict(self.roles)

    def get_load_options(self):
        return LoadOptions(delimiter=self.delimiter, listwise_deletion=self.listwise_deletion)

    def get_plan(self):
        """SubsamplingPlan, or None when subsampling is off."""
        from medbounds.sensitivity.inference import SubsamplingPlan

        if self.subsampling == "none":
            return None
        values = dict(self.subsampling)
        values.setdefault("rng_seed", self.seed)
        return SubsamplingPlan.from_dict(values)

    def get_settings(self):
        if not isinstance(self.settings, dict):
            throw("settings must be an object of overrides", ConfigError)
        return get_settings(self.settings)

    def output_path(self, filename):
        return os.path.join(self.output_dir, filename)


def load_run_config(path, overrides=None):
    """
    Read a run config from a JSON file.

    Relative data and output paths are resolved against the config file's
    directory.

    Args:
        path: JSON file
        overrides: Field values replacing those in the file

    Returns:
        RunConfig
    """
    try:
        with open(path, encoding="utf-8") as f:
            values = json.load(f)
    except OSError as e:
        throw(f"Cannot read config {path}: {e}", ConfigError)
    except json.JSONDecodeError as e:
        throw(f"Invalid JSON in config {path}: {e}", ConfigError)
    if not isinstance(values, dict):
        throw("Config must be a JSON object", ConfigError)

    values.update(overrides or {})
    base = os.path.dirname(os.path.abspath(path))
    defaults = {f["fieldname"]: f.get("default") for f in RunConfig.meta()["fields"]}
    for name in ("data", "output_dir"):
        value = values.get(name) or defaults.get(name)
        if value and not os.path.isabs(value):
            values[name] = os.path.join(base, value)
    return RunConfig(**values)
