"""
Pipeline

One relaxation cell end to end: propensity fits, budget calibration,
target bounds and effect bounds. Used for the full sample and for every
subsample.
"""

from dataclasses import dataclass

from medbounds.sensitivity import glm
from medbounds.sensitivity.bounds import all_bounds, compose_effects
from medbounds.sensitivity.calibration import build_budget, parse_rule
from medbounds.sensitivity.doctype.solver_settings.solver_settings import get_settings
from medbounds.sensitivity.propensity import estimate_propensities


@dataclass(frozen=True, eq=False)
class CellResult:
    budget: object
    mpo: object
    effects: object
    scores: object = None

    def estimates(self):
        """{target or effect: (lower, upper)}"""
        values = dict(self.mpo.intervals())
        values.update({name: (e.lower, e.upper) for name, e in self.effects.effects.items()})
        return values


def calibrated_budget(sample, scores, active, rule, settings=None, groups=None):
    """
    Budget for one cell. Link-swap rules always compare logit with probit fits,
    whichever link the bounds use.
    """
    rule = parse_rule(rule)
    settings = settings or get_settings()
    if rule.kind == "probit":
        if scores.link.kind == "logit":
            logit_scores, probit_scores = scores, None
        else:
            logit_scores, probit_scores = estimate_propensities(sample, glm.LOGIT, settings), scores
        return build_budget(sample, logit_scores, active, rule, probit_scores, groups, settings)
    return build_budget(sample, scores, active, rule, groups=groups, settings=settings)


def evaluate_cell(sample, active, rule, link="logit", settings=None, groups=None, budget=None, scores=None,
                  n_jobs=1, seed=0):
    """
    Bounds for one (assumptions, rule) cell.

    Args:
        sample: AnalysisSample
        active: Relaxed assumptions
        rule: Relaxation rule (config form or RelaxationRule)
        link: Propensity link
        budget: Use this budget instead of calibrating one
        scores: Reuse already fitted propensity scores

    Returns:
        CellResult
    """
    settings = settings or get_settings()
    scores = scores or estimate_propensities(sample, link, settings)
    if budget is None:
        budget = calibrated_budget(sample, scores, active, rule, settings, groups)
    mpo = all_bounds(sample, scores, budget, settings, n_jobs=n_jobs, seed=seed)
    return CellResult(budget=budget, mpo=mpo, effects=compose_effects(mpo), scores=scores)
