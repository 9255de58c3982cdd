"""
Subsampling Inference

Confidence intervals for the lower and upper bounds, each from its own
subsampling distribution. Every replication reruns the whole pipeline on
rows drawn without replacement.
"""

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from joblib import Parallel, delayed

from medbounds import logger
from medbounds.exceptions import ConfigError, MedboundsError, TooManyFailedReplications, throw
from medbounds.sensitivity.doctype.solver_settings.solver_settings import get_settings
from medbounds.sensitivity.pipeline import evaluate_cell

log = logger("inference")

_SEED_STRIDE = 2**32


def subsample_size_for(n, exponent=0.7):
    """
    floor(n ** exponent) in exact integer arithmetic.

    The exponent is read as a fraction a/b, so the result is the largest m
    with m**b <= n**a.
    """
    ratio = Fraction(exponent).limit_denominator(1000)
    a, b = ratio.numerator, ratio.denominator
    n = int(n)
    target = n**a
    m = int(np.floor(float(n) ** float(ratio)))
    while m > 0 and m**b > target:
        m -= 1
    while (m + 1) ** b <= target:
        m += 1
    return m


def derive_replication_seed(master_seed, replication_index):
    """Counter-based seed, injective over indices below 2**32."""
    if master_seed < 0 or not 0 <= replication_index < _SEED_STRIDE:
        throw("Seeds and replication indices must be nonnegative (index < 2**32)", ConfigError)
    return int(master_seed) * _SEED_STRIDE + int(replication_index)


@dataclass(frozen=True)
class SubsamplingPlan:
    replications: int = 500
    subsample_size: int = None
    exponent: float = 0.7
    rng_seed: int = 0
    alpha: float = 0.05
    recalibrate: bool = True
    finite_population: bool = True

    def __post_init__(self):
        if self.replications < 2:
            throw("Subsampling needs at least 2 replications", ConfigError)
        if not 0.0 < self.alpha < 1.0:
            throw("alpha must lie in (0, 1)", ConfigError)
        if not 0.0 < self.exponent < 1.0:
            throw("Subsample exponent must lie in (0, 1)", ConfigError)

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(**data)
        except TypeError as e:
            throw(f"Invalid subsampling block: {e}", ConfigError)

    def size_for(self, n):
        m = self.subsample_size or subsample_size_for(n, self.exponent)
        if not 2 <= m < n:
            throw(f"Subsample size {m} must satisfy 2 <= m < n = {n}", ConfigError)
        return m

    def as_dict(self):
        return {
            "replications": self.replications,
            "subsample_size": self.subsample_size,
            "exponent": self.exponent,
            "rng_seed": self.rng_seed,
            "alpha": self.alpha,
            "recalibrate": self.recalibrate,
            "finite_population": self.finite_population,
        }


@dataclass(frozen=True, eq=False)
class BoundCI:
    """Full-sample bounds plus the subsample draws of each (lower, upper) pair."""

    estimates: dict
    draws: dict = field(repr=False)
    n: int
    subsample_size: int
    alpha: float = 0.05
    attempted: int = 0
    failed: int = 0
    finite_population: bool = True

    @property
    def root_scale(self):
        """
        Scale of the subsample roots, 1 / sqrt(1/m - 1/n).

        Subsamples drawn without replacement share rows with the full sample,
        so LB_b - LB has variance proportional to 1/m - 1/n rather than 1/m.
        With finite_population off the plain sqrt(m) is used.
        """
        if not self.finite_population or self.subsample_size >= self.n:
            return np.sqrt(self.subsample_size)
        return 1.0 / np.sqrt(1.0 / self.subsample_size - 1.0 / self.n)

    def endpoints(self, name, alpha=None):
        """
        Raw (ci_low, ci_high), possibly crossed.

        ci_low = LB - q_{1-a/2}(tau (LB_b - LB)) / sqrt(n)
        ci_high = UB - q_{a/2}(tau (UB_b - UB)) / sqrt(n)
        with tau the root_scale.
        """
        alpha = self.alpha if alpha is None else alpha
        lower, upper = self.estimates[name]
        draws = self.draws[name]
        tau, root_n = self.root_scale, np.sqrt(self.n)
        low_roots = np.sort(tau * (draws[:, 0] - lower))
        high_roots = np.sort(tau * (draws[:, 1] - upper))
        ci_low = lower - np.quantile(low_roots, 1.0 - alpha / 2.0) / root_n
        ci_high = upper - np.quantile(high_roots, alpha / 2.0) / root_n
        return float(ci_low), float(ci_high)

    def interval(self, name, alpha=None):
        """
        (ci_low, ci_high) for one target or effect, ordered.

        Crossed endpoints are reported by crossed() and swapped here.
        """
        lower, upper = self.estimates[name]
        ci_low, ci_high = self.endpoints(name, alpha)
        if ci_low > ci_high:
            log.warning(f"Subsampling: {name} CI endpoints crossed ({ci_low:.4g} > {ci_high:.4g}); reordered")
            ci_low, ci_high = ci_high, ci_low
        if ci_low > lower or ci_high < upper:
            log.warning(f"Subsampling: {name} CI ({ci_low:.4g}, {ci_high:.4g}) does not cover [{lower:.4g}, {upper:.4g}]")
        return ci_low, ci_high

    def crossed(self, alpha=None):
        """Names whose raw endpoints came out with ci_low > ci_high."""
        return [name for name in self.estimates if np.subtract(*self.endpoints(name, alpha)) > 0]

    def intervals(self, alpha=None):
        return {name: self.interval(name, alpha) for name in self.estimates}

    def as_dict(self, alpha=None):
        return {
            "alpha": self.alpha if alpha is None else alpha,
            "n": self.n,
            "subsample_size": self.subsample_size,
            "replications": self.attempted,
            "failed_replications": self.failed,
            "intervals": {name: list(ci) for name, ci in self.intervals(alpha).items()},
            "crossed": self.crossed(alpha),
        }


def _replicate(sample, index, m, plan, active, rule, link, settings, groups, frozen_budget):
    rng = np.random.default_rng(derive_replication_seed(plan.rng_seed, index))
    rows = np.sort(rng.choice(sample.n, size=m, replace=False))
    try:
        subsample = sample.take(rows)
        cell = evaluate_cell(subsample, active, rule, link, settings, groups, budget=frozen_budget)
    except MedboundsError as e:
        log.debug(f"Subsampling: replication {index} failed: {e}")
        return None
    return cell.estimates()


def subsample_cis(sample, link, budget_rule, plan, active=("A1",), settings=None, groups=None,
                  full_result=None, n_jobs=1):
    """
    Subsampling confidence intervals for every target and effect of one cell.

    Args:
        sample: AnalysisSample
        link: Propensity link
        budget_rule: Relaxation rule of the cell
        plan: SubsamplingPlan
        active: Relaxed assumptions of the cell
        full_result: CellResult on the full sample (computed when omitted)
        n_jobs: joblib workers for replications

    Returns:
        BoundCI
    """
    settings = settings or get_settings()
    m = plan.size_for(sample.n)
    full = full_result or evaluate_cell(sample, active, budget_rule, link, settings, groups)
    frozen_budget = None if plan.recalibrate else full.budget

    results = Parallel(n_jobs=n_jobs)(
        delayed(_replicate)(sample, b, m, plan, active, budget_rule, link, settings, groups, frozen_budget)
        for b in range(plan.replications)
    )

    succeeded = [r for r in results if r is not None]
    failed = plan.replications - len(succeeded)
    if failed > settings.max_failed_share * plan.replications:
        throw(f"{failed} of {plan.replications} replications failed", TooManyFailedReplications)
    if failed:
        log.warning(f"Subsampling: dropped {failed} failed replication(s) of {plan.replications}")

    estimates = full.estimates()
    draws = {name: np.array([r[name] for r in succeeded], dtype=float) for name in estimates}
    return BoundCI(
        estimates=estimates,
        draws=draws,
        n=sample.n,
        subsample_size=m,
        alpha=plan.alpha,
        attempted=plan.replications,
        failed=failed,
        finite_population=plan.finite_population,
    )
