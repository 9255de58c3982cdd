import numpy as np
import pytest

from medbounds.exceptions import ConfigError, TooManyFailedReplications
from medbounds.sensitivity.dataset import AnalysisSample
from medbounds.sensitivity.inference import (
    BoundCI,
    SubsamplingPlan,
    derive_replication_seed,
    subsample_cis,
    subsample_size_for,
)

FIXED = {"fixed": {"A1": 0.1}}


@pytest.mark.parametrize("n,m", [(1024, 128), (6658, 474), (100, 25), (2, 1)])
def test_subsample_size(n, m):
    assert subsample_size_for(n) == m


def test_subsample_size_other_exponent():
    assert subsample_size_for(10_000, 0.5) == 100


def test_replication_seeds():
    assert derive_replication_seed(0, 0) == 0
    assert derive_replication_seed(1, 0) == 2**32
    seeds = {derive_replication_seed(s, b) for s in range(3) for b in range(50)}
    assert len(seeds) == 150
    with pytest.raises(ConfigError):
        derive_replication_seed(-1, 0)
    with pytest.raises(ConfigError):
        derive_replication_seed(0, 2**32)


def test_plan_validation():
    with pytest.raises(ConfigError):
        SubsamplingPlan(replications=1)
    with pytest.raises(ConfigError):
        SubsamplingPlan(alpha=1.5)
    with pytest.raises(ConfigError):
        SubsamplingPlan.from_dict({"replications": 10, "size": 5})
    with pytest.raises(ConfigError):
        SubsamplingPlan(subsample_size=10).size_for(10)
    assert SubsamplingPlan().size_for(1024) == 128
    assert SubsamplingPlan(subsample_size=30).size_for(1024) == 30


def _ci(draws, lower=0.0, upper=1.0, n=100, m=25, finite_population=True):
    return BoundCI(
        estimates={"ate": (lower, upper)},
        draws={"ate": np.asarray(draws, dtype=float)},
        n=n,
        subsample_size=m,
        finite_population=finite_population,
    )


@pytest.mark.parametrize("finite_population, tau", [(True, 1.0 / np.sqrt(0.04 - 0.01)), (False, 5.0)])
def test_interval_formula(finite_population, tau):
    rng = np.random.default_rng(0)
    draws = np.column_stack([rng.normal(0.0, 0.2, 400), rng.normal(1.0, 0.2, 400)])
    ci = _ci(draws, finite_population=finite_population)
    assert ci.root_scale == pytest.approx(tau)
    low_roots = tau * draws[:, 0]
    high_roots = tau * (draws[:, 1] - 1.0)
    expected_low = 0.0 - np.quantile(low_roots, 0.975) / 10.0
    expected_high = 1.0 - np.quantile(high_roots, 0.025) / 10.0
    assert ci.interval("ate") == pytest.approx((expected_low, expected_high))
    low, high = ci.interval("ate")
    assert low < 0.0 and high > 1.0
    assert ci.as_dict()["crossed"] == []


def test_corrected_scale_widens_the_interval():
    rng = np.random.default_rng(3)
    draws = np.column_stack([rng.normal(0.0, 0.2, 400), rng.normal(1.0, 0.2, 400)])
    plain_low, plain_high = _ci(draws, finite_population=False).interval("ate")
    low, high = _ci(draws).interval("ate")
    assert low < plain_low and high > plain_high


def test_lower_level_gives_nested_interval():
    rng = np.random.default_rng(1)
    ci = _ci(np.column_stack([rng.normal(0.0, 0.3, 300), rng.normal(1.0, 0.3, 300)]))
    low95, high95 = ci.interval("ate", 0.05)
    low90, high90 = ci.interval("ate", 0.10)
    assert low95 <= low90 and high90 <= high95


def test_crossed_endpoints_are_reordered():
    # Lower-bound draws far above the upper bound push ci_low past ci_high
    draws = np.column_stack([np.full(10, -5.0), np.full(10, 5.0)])
    ci = _ci(draws, 0.0, 0.1)
    raw_low, raw_high = ci.endpoints("ate")
    assert raw_low > raw_high
    low, high = ci.interval("ate")
    assert (low, high) == (raw_high, raw_low)
    assert ci.crossed() == ["ate"]
    assert ci.as_dict()["crossed"] == ["ate"]


def test_as_dict():
    ci = _ci(np.column_stack([np.zeros(5), np.ones(5)]))
    record = ci.as_dict()
    assert record["subsample_size"] == 25
    assert record["intervals"]["ate"] == [0.0, 1.0]


def test_subsample_cis_are_reproducible(sample):
    plan = SubsamplingPlan(replications=6, rng_seed=3)
    first = subsample_cis(sample, "logit", FIXED, plan, ("A1",))
    second = subsample_cis(sample, "logit", FIXED, plan, ("A1",))
    assert first.subsample_size == subsample_size_for(sample.n)
    assert first.failed == 0
    for name in first.estimates:
        np.testing.assert_array_equal(first.draws[name], second.draws[name])
    assert set(first.intervals()) == {"y11", "y00", "y10", "y01", "ate", "theta1", "theta0", "delta1", "delta0"}


def test_seed_changes_draws(sample):
    first = subsample_cis(sample, "logit", FIXED, SubsamplingPlan(replications=3, rng_seed=1), ("A1",))
    second = subsample_cis(sample, "logit", FIXED, SubsamplingPlan(replications=3, rng_seed=2), ("A1",))
    assert not np.array_equal(first.draws["ate"], second.draws["ate"])


def test_frozen_budget(sample):
    plan = SubsamplingPlan(replications=3, recalibrate=False)
    ci = subsample_cis(sample, "logit", "X1", plan, ("A1",))
    assert ci.draws["ate"].shape == (3, 2)


def test_constant_outcome_collapses_interval(synthetic):
    frame = synthetic.frame.copy()
    frame["y"] = np.where(frame["s"] == 1, 2.0, np.nan)
    constant = AnalysisSample.from_frame(frame, synthetic.sample.roles)
    ci = subsample_cis(constant, "logit", FIXED, SubsamplingPlan(replications=4), ("A1",))
    for target in ("y11", "y00", "y10", "y01"):
        low, high = ci.interval(target)
        assert low == pytest.approx(2.0, abs=1e-5)
        assert high == pytest.approx(2.0, abs=1e-5)
    low, high = ci.interval("ate")
    assert low == pytest.approx(0.0, abs=1e-5) and high == pytest.approx(0.0, abs=1e-5)


def test_too_many_failed_replications(sample):
    # Three rows cannot support the propensity designs
    plan = SubsamplingPlan(replications=4, subsample_size=3)
    with pytest.raises(TooManyFailedReplications):
        subsample_cis(sample, "logit", FIXED, plan, ("A1",))
