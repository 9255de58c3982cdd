import numpy as np
import pandas as pd
import pytest

from medbounds.sensitivity.dataset import AnalysisSample, VariableRoles
from medbounds.sensitivity.doctype.solver_settings.solver_settings import get_settings
from medbounds.sensitivity.oracle import SyntheticDgp, generate
from medbounds.sensitivity.propensity import estimate_propensities

ROLES = VariableRoles(outcome="y", treatment="d", selection="s", mediators=("m1",), covariates=("x1", "x2"))


@pytest.fixture(scope="session")
def dgp():
    return SyntheticDgp(n=600, n_covariates=2, n_mediators=2, seed=11)


@pytest.fixture(scope="session")
def synthetic(dgp):
    return generate(dgp)


@pytest.fixture(scope="session")
def sample(synthetic):
    return synthetic.sample


@pytest.fixture(scope="session")
def scores(sample):
    return estimate_propensities(sample)


@pytest.fixture
def settings():
    return get_settings()


def make_frame(n=40, seed=0, **columns):
    """Small valid frame with roles y, d, s, m1, x1, x2; keyword columns replace defaults."""
    rng = np.random.default_rng(seed)
    d = np.tile([1, 0], n // 2)
    s = np.where(np.arange(n) % 5 == 4, 0, 1)
    frame = pd.DataFrame({
        "y": np.where(s == 1, rng.normal(size=n), np.nan),
        "d": d,
        "s": s,
        "m1": rng.normal(size=n) + d,
        "x1": rng.normal(size=n),
        "x2": rng.normal(size=n),
    })
    for name, values in columns.items():
        frame[name] = values
    return frame


def make_sample(frame=None, roles=ROLES, **kwargs):
    return AnalysisSample.from_frame(make_frame(**kwargs) if frame is None else frame, roles)


def tiny_instance(seed, budget_high=0.6):
    """Eight rows with random propensities and budgets, for brute-force checks."""
    from medbounds.sensitivity.calibration import fixed_budget

    rng = np.random.default_rng(seed)
    frame = pd.DataFrame({
        "d": [1, 1, 1, 1, 0, 0, 0, 0],
        "s": [1, 1, 1, 0, 1, 1, 1, 0],
        "m1": rng.normal(size=8),
        "x1": rng.normal(size=8),
        "x2": rng.normal(size=8),
    })
    frame["y"] = np.where(frame["s"] == 1, rng.normal(size=8), np.nan)
    sample = AnalysisSample.from_frame(frame, ROLES)
    scores = {k: rng.uniform(0.2, 0.8, size=8) for k in ("A1", "A2", "A3")}
    budget = fixed_budget({k: {1: rng.uniform(0, budget_high), 0: rng.uniform(0, budget_high)} for k in scores})
    return sample, scores, budget
