import itertools
import json

import numpy as np
import pandas as pd
import pytest

from medbounds.cli import build_parser, main
from medbounds.sensitivity import api
from medbounds.sensitivity.doctype.run_config.run_config import load_run_config

ROLES = {"outcome": "y", "treatment": "d", "selection": "s", "mediators": ["m1"], "covariates": ["x1", "x2"]}
GRID = [
    {"assumptions": ["A1"], "rule": "X1"},
    {"assumptions": ["A3"], "rule": "probit"},
    {"assumptions": ["A2", "A3"], "rule": "M1"},
]


def _write_config(directory, **values):
    config = {
        "data": "data.csv",
        "roles": ROLES,
        "grid": GRID,
        "subsampling": {"replications": 4},
        "output_dir": "out",
        "settings": {"threads": 1},
        "dgp": {"n": 400, "seed": 2},
    }
    config.update(values)
    path = directory / "config.json"
    path.write_text(json.dumps(config))
    return str(path)


@pytest.fixture
def project(tmp_path):
    path = _write_config(tmp_path)
    assert main(["synth", path]) == 0
    return tmp_path, path


def test_parser_requires_command():
    with pytest.raises(SystemExit):
        build_parser().parse_args([])


def test_synth_writes_data_and_truths(project):
    directory, _ = project
    frame = pd.read_csv(directory / "data.csv")
    assert list(frame.columns) == ["y", "d", "s", "m1", "x1", "x2"]
    assert len(frame) == 400
    truth = json.loads((directory / "data.truth.json").read_text())
    assert set(truth["mpo"]) == {"y11", "y00", "y10", "y01"}
    assert truth["effects"]["ate"] == pytest.approx(truth["mpo"]["y11"] - truth["mpo"]["y00"])


def test_run_writes_every_output(project):
    directory, path = project
    assert main(["run", path]) == 0

    report = json.loads((directory / "out" / "report.json").read_text())
    assert report["status"] == "Success"
    assert [cell["column"] for cell in report["cells"]] == ["X1", "probit", "M1"]
    for cell in report["cells"]:
        assert cell["status"] == "Success"
        for effect, ci in cell["ci"]["intervals"].items():
            assert ci[0] <= ci[1], effect
    assert len(report["corrections"]) > 0
    assert report["subsampling"]["replications"] == 4

    tables = (directory / "out" / "tables.txt").read_text()
    assert "Bounds on Delta" in tables
    assert "Missing X" in tables and "Missing M" in tables
    assert "[ " in tables and "( " in tables

    rows = pd.read_csv(directory / "out" / "bounds.csv")
    assert len(rows) == 3 * 5
    assert set(rows["status"]) == {"Success"}


def test_run_without_ci(project):
    directory, path = project
    assert main(["run", path, "--no-ci", "--seed", "7"]) == 0
    report = json.loads((directory / "out" / "report.json").read_text())
    assert report["subsampling"] is None
    assert report["config"]["seed"] == 7
    assert all(cell["ci"] is None for cell in report["cells"])


def test_failed_cell_keeps_others(project):
    directory, _ = project
    path = _write_config(directory, grid=GRID[:1] + [{"assumptions": ["A1"], "rule": "X5"}], subsampling="none")
    assert main(["run", path]) == 2

    report = json.loads((directory / "out" / "report.json").read_text())
    assert report["status"] == "Partial"
    assert [cell["status"] for cell in report["cells"]] == ["Success", "Failed"]
    error = json.loads((directory / "out" / "error.json").read_text())
    assert error["error"] == "RankOutOfRange"
    assert len(error["failed_cells"]) == 1


def test_missing_column_is_a_data_error(project):
    directory, _ = project
    roles = dict(ROLES, covariates=["x1", "x9"])
    path = _write_config(directory, roles=roles)
    assert main(["validate", path]) == 3
    error = json.loads((directory / "out" / "error.json").read_text())
    assert error["error"] == "MissingColumn"
    assert error["family"] == "DataError"


def test_missing_config_is_a_config_error(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(["run", str(tmp_path / "absent.json")]) == 2
    assert json.loads((tmp_path / "error.json").read_text())["exit_code"] == 2


def test_rank_and_validate(project, capsys):
    _, path = project
    assert main(["rank", path, "--top", "1"]) == 0
    output = capsys.readouterr().out
    assert "chi2_95" in output
    assert "A3" in output

    assert main(["validate", path]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["sample"]["n"] == 400


def _noise_data(path):
    """Every (d, s) cell holds the same predictor rows, so no predictor moves any fitted score."""
    rng = np.random.default_rng(6)
    base = pd.DataFrame({"m1": rng.normal(size=12), "x1": rng.normal(size=12), "x2": rng.normal(size=12)})
    cells = []
    for d, s in itertools.product((0, 1), (0, 1)):
        cells.append(base.assign(d=d, s=s))
    frame = pd.concat(cells * 2, ignore_index=True)
    frame["y"] = np.where(frame["s"] == 1, rng.normal(size=len(frame)), np.nan)
    frame.to_csv(path, index=False)


def test_rank_report_flags_uninformative_predictors(tmp_path):
    _noise_data(tmp_path / "data.csv")
    report = api.rank_report(load_run_config(_write_config(tmp_path)), top=5)
    rows = report["rows"]
    assert report["success"]
    assert {(r["model"], r["source"]) for r in rows} == {("A1", "X"), ("A2", "X"), ("A2", "M"), ("A3", "X"), ("A3", "M")}
    assert all(r["weak"] for r in rows)
    assert all(r["deviance_drop"] < 1e-6 for r in rows)


def test_rank_report_grouped_row(tmp_path):
    _noise_data(tmp_path / "data.csv")
    config = load_run_config(_write_config(tmp_path, groups={"xs": ["x1", "x2"]}))
    rows = [r for r in api.rank_report(config, top=5)["rows"] if r["source"] == "X"]
    assert len(rows) == 3
    for row in rows:
        assert row["predictor"] == "xs"
        assert row["columns"] == ["x1", "x2"]
        assert row["df"] == 2
        assert row["chi2_95"] == pytest.approx(-2.0 * np.log(0.05))
        assert row["weak"]
