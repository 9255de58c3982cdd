"""End-to-end checks on larger synthetic data. Run with `pytest -m slow`."""

import json
import time

import numpy as np
import pytest

from medbounds.sensitivity import estimands, lpcore
from medbounds.sensitivity.bounds import all_bounds, alternate_solve, build_problem, compose_effects
from medbounds.sensitivity.calibration import fixed_budget, zero_budget
from medbounds.sensitivity.inference import SubsamplingPlan, subsample_cis
from medbounds.sensitivity.oracle import SyntheticDgp, brute_force_bounds, generate
from medbounds.sensitivity.propensity import estimate_propensities, ipw_point_estimates

from .conftest import tiny_instance
from .test_lpcore import _random_lp, _vertex_optimum

pytestmark = pytest.mark.slow


@pytest.mark.parametrize("seed", range(20))
def test_zero_budget_collapse(seed):
    sample = generate(SyntheticDgp(n=500, seed=seed)).sample
    scores = estimate_propensities(sample)
    point = ipw_point_estimates(sample, scores)
    mpo = all_bounds(sample, scores, zero_budget())
    for target in estimands.TARGETS:
        assert abs(mpo[target].lower - point.mpo[target]) < 1e-8
        assert abs(mpo[target].upper - point.mpo[target]) < 1e-8
    effects = point.effects
    assert abs(effects["ate"] - effects["theta1"] - effects["delta0"]) < 1e-8
    assert abs(effects["ate"] - effects["theta0"] - effects["delta1"]) < 1e-8


def test_oracle_containment_and_tightness():
    tight = 0
    for seed in range(100):
        sample, scores, budget = tiny_instance(1000 + seed)
        for target in estimands.TARGETS:
            problem = build_problem(target, sample, scores, budget)
            low = alternate_solve(problem, "min").value
            high = alternate_solve(problem, "max").value
            oracle = brute_force_bounds(problem, k=3)
            assert oracle.contains(low, high, tolerance=1e-9), (seed, target)
            if target in ("y11", "y00"):
                tight += abs(low - oracle.lower) < 1e-6 and abs(high - oracle.upper) < 1e-6
    assert tight >= 190


@pytest.mark.parametrize("assumption", ["A1", "A2", "A3"])
def test_nesting_over_budget_grid(assumption):
    sample = generate(SyntheticDgp(n=1000, seed=21)).sample
    scores = estimate_propensities(sample)
    previous = None
    for eps in (0.0, 0.05, 0.1, 0.2, 0.4):
        mpo = all_bounds(sample, scores, fixed_budget({assumption: {1: eps, 0: eps}}))
        current = dict(mpo.intervals())
        current.update({e: (b.lower, b.upper) for e, b in compose_effects(mpo).effects.items()})
        if previous is not None:
            for name, (low, high) in current.items():
                assert previous[name][0] - low >= -1e-9, (eps, name)
                assert high - previous[name][1] >= -1e-9, (eps, name)
        previous = current


def test_lp_against_vertex_enumeration():
    rng = np.random.default_rng(2024)
    for k in range(200):
        n = int(rng.integers(2, 10))
        m = int(rng.integers(0, min(3, n - 1) + 1))
        lp = _random_lp(rng, n, m, sense="min" if k % 2 else "max")
        solution = lpcore.solve(lp)
        assert abs(solution.objective_value - _vertex_optimum(lp)) < 1e-8
        assert np.all(solution.values >= lp.lower - 1e-9) and np.all(solution.values <= lp.upper + 1e-9)
        if m:
            assert np.all(np.abs(lp.residuals(solution.values)) <= 1e-7 * (1.0 + np.abs(lp.rhs)))


def test_subsampling_coverage_at_zero_budget():
    covered = 0
    for draw in range(100):
        dgp = SyntheticDgp(n=800, seed=500 + draw)
        data = generate(dgp)
        ci = subsample_cis(
            data.sample, "logit", {"fixed": {}}, SubsamplingPlan(replications=200, rng_seed=draw), active=(),
        )
        low, high = ci.interval("theta1")
        covered += low <= data.effects["theta1"] <= high
    assert covered >= 90


def test_rerun_is_bit_identical(tmp_path):
    from medbounds.cli import main

    config = {
        "data": "data.csv",
        "roles": SyntheticDgp(n_mediators=2).roles.as_dict(),
        "grid": [{"assumptions": ["A1", "A3"], "rule": "X1"}, {"assumptions": ["A2"], "rule": "M2"}],
        "subsampling": {"replications": 20},
        "settings": {"threads": 2},
        "dgp": {"n": 600, "n_mediators": 2, "seed": 8},
    }
    reports = []
    for name in ("first", "second"):
        path = tmp_path / f"{name}.json"
        path.write_text(json.dumps(dict(config, output_dir=name)))
        if name == "first":
            assert main(["synth", str(path)]) == 0
        assert main(["run", str(path)]) == 0
        report = json.loads((tmp_path / name / "report.json").read_text())
        reports.append([{k: v for k, v in cell.items() if k != "log"} for cell in report["cells"]])
    assert reports[0] == reports[1]


def test_full_dimension_layout(tmp_path):
    from medbounds.cli import main

    dgp = {
        "n": 6658, "n_covariates": 20, "n_mediators": 45, "d_x": 0.1, "m_d": 0.1, "m_x": 0.05,
        "s_m": 0.02, "s_x": 0.05, "y_m": 0.05, "y_x": 0.1, "seed": 1,
    }
    config = {
        "data": "data.csv",
        "roles": SyntheticDgp(n_covariates=20, n_mediators=45).roles.as_dict(),
        "grid": [{"assumptions": ["A1", "A2", "A3"], "rule": "X1"}, {"assumptions": ["A2", "A3"], "rule": "M1"}],
        "subsampling": "none",
        "settings": {"threads": 1},
        "dgp": dgp,
        "output_dir": "out",
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config))
    assert main(["synth", str(path)]) == 0
    started = time.perf_counter()
    assert main(["run", str(path)]) == 0
    assert time.perf_counter() - started < 60.0

    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert report["sample"]["n"] == 6658
    for cell in report["cells"]:
        for effect, bounds in cell["effects"].items():
            point = report["point_estimates"]["effects"][effect]
            assert bounds["lower"] <= point + 1e-7 and point <= bounds["upper"] + 1e-7
    tables = (tmp_path / "out" / "tables.txt").read_text()
    assert tables.count("Bounds on ") == 5
