"""
Propensity Scores

Fits the treatment model on X (A1), the treatment model on M, X (A2) and the
selection model on D, M, X (A3), and computes the Hajek-normalized IPW point
estimates of the four mean potential outcomes.
"""

from dataclasses import dataclass, field

import numpy as np

from medbounds import logger
from medbounds.exceptions import DegenerateWeights, NumericalError, throw
from medbounds.sensitivity import estimands, glm
from medbounds.sensitivity.dataset import design_matrix
from medbounds.sensitivity.doctype.solver_settings.solver_settings import get_settings

log = logger("propensity")

# assumption -> (conditioning set, response role)
PROPENSITY_MODELS = {
    "A1": ("X", "treatment"),
    "A2": ("MX", "treatment"),
    "A3": ("DMX", "selection"),
}


def model_response(sample, assumption):
    role = PROPENSITY_MODELS[assumption][1]
    return sample.d if role == "treatment" else sample.s


def model_design(sample, assumption):
    return design_matrix(sample, PROPENSITY_MODELS[assumption][0])


@dataclass(frozen=True, eq=False)
class PropensityScores:
    pA1: np.ndarray
    pA2: np.ndarray
    pA3: np.ndarray
    link: glm.LinkFunction
    models: dict = field(default_factory=dict)
    designs: dict = field(default_factory=dict, repr=False)

    def __getitem__(self, assumption):
        return {"A1": self.pA1, "A2": self.pA2, "A3": self.pA3}[assumption]

    def diagnostics(self):
        return {
            key: {
                "clipped": model.clipped,
                "converged": model.converged,
                "separated": model.separated,
                "iterations": model.iterations,
                "deviance": model.deviance,
                "dropped_columns": list(self.designs[key].dropped) if key in self.designs else [],
            }
            for key, model in self.models.items()
        }


def estimate_propensities(sample, link=glm.LOGIT, settings=None):
    """
    Fit the three propensity models.

    Args:
        sample: AnalysisSample
        link: LinkFunction or "logit"/"probit"
        settings: SolverSettings (defaults when omitted)

    Returns:
        PropensityScores
    """
    settings = settings or get_settings()
    controls = glm.FitControls.from_settings(settings)
    link = glm.get_link(link)

    models, designs = {}, {}
    for assumption in PROPENSITY_MODELS:
        design = model_design(sample, assumption)
        try:
            model = glm.fit(design, model_response(sample, assumption), link, controls)
        except NumericalError as e:
            # Re-raise the same error type, labeled with the failing model
            raise type(e)(f"{assumption} propensity model: {e}") from e
        if model.clipped:
            log.warning(f"Propensity: {model.clipped} {assumption} probabilities clipped to [{settings.clip_floor:g}, 1 - {settings.clip_floor:g}]")
        models[assumption] = model
        designs[assumption] = design

    return PropensityScores(
        pA1=models["A1"].fitted_probabilities,
        pA2=models["A2"].fitted_probabilities,
        pA3=models["A3"].fitted_probabilities,
        link=link,
        models=models,
        designs=designs,
    )


def target_weights(sample, scores, target):
    """
    Unnormalized IPW weights of one target on its retained rows.

    Args:
        sample: AnalysisSample
        scores: PropensityScores (or any object indexable by "A1".."A3")
        target: "y11", "y00", "y10" or "y01"

    Returns:
        tuple: (retained-row mask, weights on the retained rows)
    """
    mask = sample.arm_mask(estimands.target_arm(target))
    p1, p2, p3 = (scores[k][mask] for k in ("A1", "A2", "A3"))
    if target == "y11":
        weights = 1.0 / p1 / p3
    elif target == "y00":
        weights = 1.0 / (1.0 - p1) / p3
    elif target == "y10":
        weights = 1.0 / (1.0 - p1) * (1.0 / p2 - 1.0) / p3
    else:
        weights = 1.0 / p1 * (1.0 / (1.0 - p2) - 1.0) / p3
    return mask, weights


@dataclass(frozen=True)
class PointEstimates:
    mpo: dict
    effects: dict
    max_weight: dict

    def as_dict(self):
        return {"mpo": dict(self.mpo), "effects": dict(self.effects), "max_weight": dict(self.max_weight)}


def ipw_point_estimates(sample, scores, settings=None):
    """
    Hajek IPW estimates of the four mean potential outcomes and five effects.

    Args:
        sample: AnalysisSample
        scores: PropensityScores

    Returns:
        PointEstimates
    """
    settings = settings or get_settings()
    mpo, max_weight = {}, {}
    for target in estimands.TARGETS:
        mask, weights = target_weights(sample, scores, target)
        total = weights.sum()
        if not np.isfinite(total) or total <= np.finfo(float).tiny:
            throw(f"Weights for {target} sum to {total!r}", DegenerateWeights)
        normalized = weights / total
        mpo[target] = float(normalized @ sample.y[mask])
        max_weight[target] = float(normalized.max())
        if max_weight[target] > settings.weight_cap_warning:
            log.warning(
                f"Propensity: max normalized weight {max_weight[target]:.3f} for {target} "
                f"exceeds {settings.weight_cap_warning:g} (common support)"
            )

    effects = {effect: estimands.difference(mpo, effect) for effect in estimands.EFFECTS}
    return PointEstimates(mpo=mpo, effects=effects, max_weight=max_weight)
