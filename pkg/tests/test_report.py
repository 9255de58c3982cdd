import json

import numpy as np

from medbounds.sensitivity import report

EFFECTS = ("ate", "theta1", "theta0", "delta1", "delta0")


def _cell(row, column, status="Success", low=0.1, high=0.4, ci=True):
    effects = {e: {"lower": low, "upper": high} for e in EFFECTS} if status == "Success" else None
    return {
        "row": row,
        "column": column,
        "status": status,
        "effects": effects,
        "ci": {"intervals": {e: [low - 0.1, high + 0.1] for e in EFFECTS}} if ci and effects else None,
    }


def _report():
    return {
        "point_estimates": {"effects": {e: 0.25 for e in EFFECTS}},
        "cells": [
            _cell("A1", "X1"),
            _cell("A1", "probit", ci=False),
            _cell("A2", "X1", status="Failed"),
            _cell("A2", "M1", low=-0.2, high=0.3),
        ],
    }


def test_formatting():
    assert report.format_bounds(0.12345, 1.0) == "[ 0.123 1.000 ]"
    assert report.format_ci(-0.5, 0.25) == "( -0.500 0.250 )"


def test_jsonable():
    value = {"a": np.float64(1.5), "b": np.array([1, 2]), "c": float("nan"), 3: (np.int64(2),)}
    assert report.jsonable(value) == {"a": 1.5, "b": [1, 2], "c": None, "3": [2]}


def test_write_json(tmp_path):
    path = tmp_path / "report.json"
    report.write_json({"x": float("inf"), "y": np.arange(2)}, path)
    assert json.loads(path.read_text()) == {"x": None, "y": [0, 1]}


def test_effect_table_layout():
    text = report.render_effect_table(_report(), "ate")
    lines = text.splitlines()
    assert lines[0] == "Bounds on Delta (point estimate: 0.250)"
    assert "Missing X" in text and "Missing M" in text
    assert "[ 0.100 0.400 ]" in text
    assert "( 0.000 0.500 )" in text
    assert "failed" in text
    assert "not necessarily sharp" not in text


def test_indirect_effect_table_is_flagged():
    assert "not necessarily sharp" in report.render_effect_table(_report(), "delta1")


def test_tables_cover_every_effect():
    text = report.render_tables(_report())
    for label in ("Delta", "theta(1)", "theta(0)", "delta(1)", "delta(0)"):
        assert f"Bounds on {label} " in text


def test_csv_rows():
    rows = report.csv_rows(_report())
    assert len(rows) == 4 * 5
    failed = [r for r in rows if r["status"] == "Failed"]
    assert len(failed) == 5
    assert all(r["lower"] is None and r["ci_low"] is None for r in failed)
    first = rows[0]
    assert (first["effect"], first["assumptions"], first["rule"]) == ("ate", "A1", "X1")
    assert first["ci_high"] == 0.5


def test_write_csv(tmp_path):
    path = tmp_path / "bounds.csv"
    report.write_csv(_report(), path)
    header = path.read_text().splitlines()[0]
    assert header == ",".join(report.CSV_COLUMNS)
