import dataclasses

import numpy as np
import pandas as pd
import pytest

from medbounds.exceptions import ConfigError, GridTooLarge
from medbounds.sensitivity import estimands, oracle
from medbounds.sensitivity.bounds import alternate_solve, build_problem
from medbounds.sensitivity.calibration import fixed_budget
from medbounds.sensitivity.oracle import (
    SyntheticDgp,
    brute_force_bounds,
    closed_form_truths,
    generate,
    grid_size,
    random_search_bounds,
    simulate_truths,
)

from .conftest import tiny_instance
from .test_bounds import _two_row_problem


def test_null_dgp_truths():
    dgp = SyntheticDgp(y_intercept=1.5, y_d=0.0, y_m=0.0, y_dm=0.0)
    truths = closed_form_truths(dgp)
    assert truths == {target: 1.5 for target in estimands.TARGETS}


def test_no_mediation_dgp():
    dgp = SyntheticDgp(y_d=0.7, y_m=0.0, m_d=2.0)
    data = generate(SyntheticDgp(n=200, y_d=0.7, y_m=0.0, m_d=2.0))
    effects = data.effects
    assert effects["theta1"] == pytest.approx(0.7)
    assert effects["theta0"] == pytest.approx(0.7)
    assert effects["delta1"] == pytest.approx(0.0)
    assert closed_form_truths(dgp) == data.truths


def test_mediated_effect():
    dgp = SyntheticDgp(y_d=1.0, m_d=2.0, y_m=0.5, y_dm=0.25, n_mediators=1)
    effects = {e: estimands.difference(closed_form_truths(dgp), e) for e in estimands.EFFECTS}
    # E[M(1)] - E[M(0)] = 2; the indirect path is (0.5 + 0.25 d) * 2
    assert effects["delta1"] == pytest.approx(1.5)
    assert effects["delta0"] == pytest.approx(1.0)
    assert effects["ate"] == pytest.approx(effects["theta1"] + effects["delta0"])


def test_closed_form_matches_simulation():
    dgp = SyntheticDgp(n_mediators=2, y_dm=0.5, m_intercept=0.3, u_m=0.4, u_y=0.6)
    simulated = simulate_truths(dgp, draws=200_000)
    for target, value in closed_form_truths(dgp).items():
        assert simulated[target] == pytest.approx(value, abs=0.03)


def test_binary_outcome_has_no_closed_form():
    dgp = SyntheticDgp(n=100, binary_outcome=True, truth_draws=20_000)
    with pytest.raises(ConfigError):
        closed_form_truths(dgp)
    data = generate(dgp)
    assert set(np.unique(data.sample.y[data.sample.s == 1])) <= {0.0, 1.0}
    assert all(0.0 <= v <= 1.0 for v in data.truths.values())


def test_generate_is_deterministic():
    dgp = SyntheticDgp(n=200, seed=3)
    first, second = generate(dgp), generate(dgp)
    pd.testing.assert_frame_equal(first.frame, second.frame)
    assert not generate(SyntheticDgp(n=200, seed=4)).frame.equals(first.frame)


def test_unselected_outcomes_are_missing():
    data = generate(SyntheticDgp(n=300))
    sample = data.sample
    assert np.all(np.isnan(sample.y[sample.s == 0]))
    assert np.all(np.isfinite(sample.y[sample.s == 1]))
    assert sample.roles.covariates == ("x1", "x2")


def test_dgp_validation():
    with pytest.raises(ConfigError):
        SyntheticDgp.from_dict({"n": 100, "bogus": 1})
    with pytest.raises(ConfigError):
        SyntheticDgp(n_covariates=2, d_x=[0.1, 0.2, 0.3])
    assert SyntheticDgp.from_dict(SyntheticDgp(n=10).as_dict()) == SyntheticDgp(n=10)


def test_brute_force_two_row_problem():
    problem = _two_row_problem()
    # The only free block is the last one, solved exactly
    assert grid_size(problem) == 1
    bounds = brute_force_bounds(problem)
    assert bounds.lower == pytest.approx(5.0 / 3.0)
    assert bounds.upper == pytest.approx(7.0 / 3.0)
    assert bounds.feasible == 1
    np.testing.assert_allclose(bounds.lower_weights[0], [8.0 / 3.0, 4.0 / 3.0])


def test_grid_limit():
    sample, scores, budget = tiny_instance(0)
    problem = build_problem("y10", sample, scores, budget)
    assert grid_size(problem) > 4
    with pytest.raises(GridTooLarge):
        brute_force_bounds(problem, max_grid=4)


@pytest.mark.parametrize("seed", range(3))
def test_alternating_bounds_inside_brute_force(seed):
    sample, scores, budget = tiny_instance(seed)
    for target in estimands.TARGETS:
        problem = build_problem(target, sample, scores, budget)
        low = alternate_solve(problem, "min").value
        high = alternate_solve(problem, "max").value
        oracle = brute_force_bounds(problem, k=3)
        assert oracle.contains(low, high, tolerance=1e-9)


@pytest.mark.parametrize("seed", range(3))
def test_oracle_witnesses_are_feasible(seed):
    sample, scores, budget = tiny_instance(seed)
    for target in estimands.TARGETS:
        problem = build_problem(target, sample, scores, budget)
        for bounds in (brute_force_bounds(problem, k=2), random_search_bounds(problem, draws=20, seed=seed)):
            assert bounds.lower <= bounds.upper
            for value, weights in ((bounds.lower, bounds.lower_weights), (bounds.upper, bounds.upper_weights)):
                assert problem.is_feasible(weights)
                assert problem.objective(weights) == pytest.approx(value, abs=1e-12)


def test_oracle_ignores_reported_sweep_values(monkeypatch):
    sample, scores, budget = tiny_instance(4)
    problem = build_problem("y10", sample, scores, budget)
    honest = brute_force_bounds(problem, k=2)
    starts = []
    solve = oracle.alternate_solve

    def inflated(problem, sense="min", settings=None, start=None, seed=0):
        starts.append(start)
        result = solve(problem, sense, settings, start=start, seed=seed)
        shift = -1.0 if sense == "min" else 1.0
        return dataclasses.replace(result, value=result.value + shift)

    monkeypatch.setattr(oracle, "alternate_solve", inflated)
    reported = brute_force_bounds(problem, k=2)
    assert reported.lower == pytest.approx(honest.lower, abs=1e-12)
    assert reported.upper == pytest.approx(honest.upper, abs=1e-12)
    assert not reported.contains(honest.lower - 0.5, honest.upper + 0.5)
    ipw = problem.start()
    assert starts
    assert not any(all(np.array_equal(w, s) for w, s in zip(start, ipw)) for start in starts)


def test_single_block_is_exact():
    sample, scores, _ = tiny_instance(11)
    budget = fixed_budget({"A1": {1: 0.4, 0: 0.4}})
    for target in estimands.TARGETS:
        problem = build_problem(target, sample, scores, budget)
        oracle = brute_force_bounds(problem, k=3)
        assert alternate_solve(problem, "min").value == pytest.approx(oracle.lower, abs=1e-9)
        assert alternate_solve(problem, "max").value == pytest.approx(oracle.upper, abs=1e-9)
