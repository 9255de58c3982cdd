"""
Entropy Budgets

Turns data-driven relaxation rules into per-arm entropy budgets. A budget
for assumption K measures how far the K propensity model moves when its
j-th most important predictor is omitted (X1..X3, M1..M3) or when the logit
link is swapped for probit, in units of the binomial standard deviation.
"""

from dataclasses import dataclass, field

import numpy as np

from medbounds import hooks, logger
from medbounds.exceptions import (
    ConfigError,
    DegenerateProbability,
    InvalidSource,
    RankOutOfRange,
    throw,
)
from medbounds.sensitivity import glm
from medbounds.sensitivity.doctype.solver_settings.solver_settings import get_settings
from medbounds.sensitivity.propensity import model_design, model_response

log = logger("calibration")

ASSUMPTIONS = ("A1", "A2", "A3")
ARMS = (1, 0)


@dataclass(frozen=True)
class RelaxationRule:
    """X1..X3 / M1..M3 (predictor drop), probit (link swap) or fixed values."""

    kind: str
    source: str = None
    rank: int = None
    fixed: dict = None

    @property
    def label(self):
        if self.kind == "drop":
            return f"{self.source}{self.rank}"
        if self.kind == "probit":
            return "probit"
        return "fixed"

    def as_dict(self):
        if self.kind == "fixed":
            return {"fixed": {k: {str(d): e for d, e in v.items()} for k, v in self.fixed.items()}}
        return self.label


def parse_rule(spec):
    """
    Parse a rule from config.

    Args:
        spec: "X1".."X3", "M1".."M3", "probit", or {"fixed": {"A1": 0.1, "A3": {"1": 0.2, "0": 0.1}}}

    Returns:
        RelaxationRule
    """
    if isinstance(spec, RelaxationRule):
        return spec
    if isinstance(spec, str):
        if spec == "probit":
            return RelaxationRule(kind="probit")
        if len(spec) >= 2 and spec[0] in "XM" and spec[1:].isdigit() and int(spec[1:]) >= 1:
            return RelaxationRule(kind="drop", source=spec[0], rank=int(spec[1:]))
        throw(f"Unknown relaxation rule '{spec}'", ConfigError)
    if isinstance(spec, dict) and "fixed" in spec:
        fixed = {}
        for assumption, value in spec["fixed"].items():
            if assumption not in ASSUMPTIONS:
                throw(f"Fixed budget names unknown assumption '{assumption}'", ConfigError)
            per_arm = value if isinstance(value, dict) else {1: value, 0: value}
            try:
                fixed[assumption] = {int(arm): float(per_arm[arm]) for arm in per_arm}
            except (TypeError, ValueError):
                throw(f"Fixed budget for {assumption} must be numeric", ConfigError)
            if set(fixed[assumption]) != set(ARMS):
                throw(f"Fixed budget for {assumption} must give arms 1 and 0", ConfigError)
            if any(e < 0 or not np.isfinite(e) for e in fixed[assumption].values()):
                throw(f"Fixed budget for {assumption} must be finite and nonnegative", ConfigError)
        return RelaxationRule(kind="fixed", fixed=fixed)
    throw(f"Unknown relaxation rule {spec!r}", ConfigError)


@dataclass(frozen=True)
class EntropyBudget:
    """epsilon per (assumption, arm); inactive assumptions hold 0."""

    values: dict
    rule: str
    active_assumptions: frozenset
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "active_assumptions", frozenset(self.active_assumptions))
        for (assumption, arm), eps in self.values.items():
            if not eps >= 0:
                throw(f"Budget for {assumption}, arm {arm} is negative: {eps}", ConfigError)
            if assumption not in self.active_assumptions and eps != 0:
                throw(f"Inactive assumption {assumption} has nonzero budget", ConfigError)

    def get(self, assumption, arm):
        return self.values.get((assumption, arm), 0.0)

    def scaled(self, factor):
        return EntropyBudget(
            values={key: eps * factor for key, eps in self.values.items()},
            rule=f"{self.rule} x {factor:g}",
            active_assumptions=self.active_assumptions,
            provenance=self.provenance,
        )

    def as_dict(self):
        return {
            "rule": self.rule,
            "active_assumptions": sorted(self.active_assumptions),
            "values": {
                assumption: {str(arm): self.get(assumption, arm) for arm in ARMS}
                for assumption in ASSUMPTIONS
            },
            "provenance": self.provenance,
        }


def zero_budget(active=()):
    return EntropyBudget(
        values={(k, d): 0.0 for k in ASSUMPTIONS for d in ARMS},
        rule="zero",
        active_assumptions=frozenset(active),
    )


def fixed_budget(values, active=None):
    """Budget straight from {assumption: {arm: eps}} values."""
    active = frozenset(values) if active is None else frozenset(active)
    flat = {(k, d): 0.0 for k in ASSUMPTIONS for d in ARMS}
    for assumption, per_arm in values.items():
        if assumption in active:
            for arm, eps in per_arm.items():
                flat[(assumption, int(arm))] = float(eps)
    return EntropyBudget(values=flat, rule="fixed", active_assumptions=active)


def per_observation_epsilon(p_full, p_reduced):
    """
    Shift of a probability in units of its binomial standard deviation.

    Args:
        p_full: Full-model probability (scalar or array) in (0, 1)
        p_reduced: Comparison probability

    Returns:
        |p_reduced - p_full| / sqrt(p_full (1 - p_full))
    """
    p_full = np.asarray(p_full, dtype=float)
    p_reduced = np.asarray(p_reduced, dtype=float)
    if np.any((p_full <= 0.0) | (p_full >= 1.0)) or not np.all(np.isfinite(p_full)):
        throw("Full-model probability outside (0, 1)", DegenerateProbability)
    eps = np.abs(p_reduced - p_full) / np.sqrt(p_full * (1.0 - p_full))
    return float(eps) if eps.ndim == 0 else eps


def arm_averages(sample, per_observation):
    """Average per-observation epsilon over {D=1,S=1} and {D=0,S=1}."""
    return {arm: float(np.mean(per_observation[sample.arm_mask(arm)])) for arm in ARMS}


@dataclass(frozen=True, eq=False)
class Calibration:
    """Budget entries for one assumption under one rule."""

    assumption: str
    rule: str
    arm_values: dict
    per_observation: np.ndarray = field(repr=False)
    dropped: tuple = ()
    deviance_drop: float = None

    def provenance(self):
        record = {"rule": self.rule}
        if self.dropped:
            record["dropped"] = list(self.dropped)
            record["deviance_drop"] = self.deviance_drop
        return record


def candidate_groups(design, columns, groups=None):
    """
    Column-index groups for the named role columns present in the design.

    Columns listed together in `groups` ({label: [names]}) form one candidate;
    every other column is its own candidate. Declared order is kept.

    Returns:
        list: (label, names, indices) tuples
    """
    present = [name for name in columns if name in design.columns]
    grouped = {}
    for label, names in (groups or {}).items():
        for name in names:
            grouped[name] = label

    candidates, seen = [], set()
    for name in present:
        label = grouped.get(name, name)
        if label in seen:
            continue
        seen.add(label)
        names = [n for n in present if grouped.get(n, n) == label]
        candidates.append((label, tuple(names), tuple(design.index_of(n) for n in names)))
    return candidates


def _source_columns(sample, assumption, source):
    if source not in ("X", "M"):
        throw(f"Unknown predictor source '{source}'", InvalidSource)
    if source == "M":
        if assumption == "A1":
            throw("The A1 model conditions on X only; M-based relaxations are undefined", InvalidSource)
        return sample.roles.mediators
    return sample.roles.covariates


def rank_model_predictors(sample, scores, assumption, source, groups=None, settings=None):
    """
    Rank the X (or M) predictors of one propensity model by deviance drop.

    Returns:
        list: (label, names, drop) in descending drop order
    """
    settings = settings or get_settings()
    controls = glm.FitControls.from_settings(settings)
    design = scores.designs.get(assumption) or model_design(sample, assumption)
    candidates = candidate_groups(design, _source_columns(sample, assumption, source), groups)
    if not candidates:
        return []
    ranking = glm.rank_predictors(
        design,
        model_response(sample, assumption),
        scores.link,
        [indices for _, _, indices in candidates],
        controls,
    )
    by_indices = {indices: (label, names) for label, names, indices in candidates}
    return [(*by_indices[group], drop) for group, drop in ranking]


def calibrate_by_predictor_drop(sample, scores, assumption, source, rank, groups=None, settings=None):
    """
    Budget from refitting the K model without its rank-th most important predictor.

    Args:
        sample: AnalysisSample
        scores: PropensityScores of the full models
        assumption: "A1", "A2" or "A3"
        source: "X" or "M"
        rank: 1-based importance rank
        groups: Optional {label: [column names]} dropped jointly

    Returns:
        Calibration
    """
    settings = settings or get_settings()
    controls = glm.FitControls.from_settings(settings)
    ranking = rank_model_predictors(sample, scores, assumption, source, groups, settings)
    if not 1 <= rank <= len(ranking):
        throw(f"{assumption}: rank {rank} requested but the model has {len(ranking)} {source} predictor(s)",
              RankOutOfRange)

    label, names, drop = ranking[rank - 1]
    design = scores.designs.get(assumption) or model_design(sample, assumption)
    group = [design.index_of(name) for name in names]
    reduced = glm.fit(design.without(group), model_response(sample, assumption), scores.link, controls)

    per_observation = per_observation_epsilon(scores[assumption], reduced.fitted_probabilities)
    log.debug(f"Calibration: {assumption} without {label} (deviance drop {drop:.3f})")
    return Calibration(
        assumption=assumption,
        rule=f"{source}{rank}",
        arm_values=arm_averages(sample, per_observation),
        per_observation=per_observation,
        dropped=names,
        deviance_drop=drop,
    )


def calibrate_by_link_swap(sample, scores_logit, scores_probit, assumption):
    """
    Budget from the logit-versus-probit difference of the K model.

    Args:
        sample: AnalysisSample
        scores_logit: PropensityScores under the logit link
        scores_probit: PropensityScores under the probit link
        assumption: "A1", "A2" or "A3"

    Returns:
        Calibration
    """
    per_observation = per_observation_epsilon(scores_logit[assumption], scores_probit[assumption])
    return Calibration(
        assumption=assumption,
        rule="probit",
        arm_values=arm_averages(sample, per_observation),
        per_observation=per_observation,
    )


def build_budget(sample, scores, active, rule, probit_scores=None, groups=None, settings=None):
    """
    Entropy budget for a set of relaxed assumptions under one rule.

    Each active assumption gets its own budget from its own model; the
    others stay at 0.

    Args:
        sample: AnalysisSample
        scores: PropensityScores (logit fits for link-swap rules)
        active: Iterable of assumptions to relax
        rule: RelaxationRule or its config form
        probit_scores: Probit PropensityScores, fitted on demand if needed
        groups: Optional predictor groups for drop rules

    Returns:
        EntropyBudget
    """
    rule = parse_rule(rule)
    active = frozenset(active)
    unknown = active - set(ASSUMPTIONS)
    if unknown:
        throw(f"Unknown assumption(s) {sorted(unknown)}", ConfigError)

    if rule.kind == "fixed":
        missing = active - set(rule.fixed)
        if missing:
            throw(f"Fixed rule gives no budget for {sorted(missing)}", ConfigError)
        return fixed_budget(rule.fixed, active)

    values = {(k, d): 0.0 for k in ASSUMPTIONS for d in ARMS}
    provenance = {}
    for assumption in sorted(active):
        if rule.kind == "drop":
            calibrate = hooks.get_hook("relaxation_rules", "drop")
            result = calibrate(sample, scores, assumption, rule.source, rule.rank, groups, settings)
        else:
            if probit_scores is None:
                from medbounds.sensitivity.propensity import estimate_propensities

                probit_scores = estimate_propensities(sample, glm.PROBIT, settings)
            calibrate = hooks.get_hook("relaxation_rules", "probit")
            result = calibrate(sample, scores, probit_scores, assumption)
        for arm, eps in result.arm_values.items():
            values[(assumption, arm)] = eps
        provenance[assumption] = result.provenance()

    return EntropyBudget(values=values, rule=rule.label, active_assumptions=active, provenance=provenance)
