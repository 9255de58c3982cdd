"""
Binary GLM

Logit and probit regressions fitted by iteratively reweighted least squares
with step-halving, plus deviance-based predictor importance.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, special

from medbounds import logger
from medbounds.exceptions import AllSameResponse, ConfigError, RankDeficient, throw

log = logger("glm")

# Below this binomial variance a fitted probability counts as numerically 0 or 1
_SEPARATION_VARIANCE = 1e-10
_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class LinkFunction:
    """Inverse-link maps the linear predictor to (0, 1)."""

    kind: str = "logit"

    def __post_init__(self):
        if self.kind not in ("logit", "probit"):
            throw(f"Unknown link '{self.kind}' (expected logit or probit)", ConfigError)

    def inverse(self, eta):
        if self.kind == "logit":
            return special.expit(eta)
        return special.ndtr(eta)

    def link(self, mu):
        if self.kind == "logit":
            return special.logit(mu)
        return special.ndtri(mu)

    def derivative(self, eta):
        """d mu / d eta."""
        if self.kind == "logit":
            return special.expit(eta) * special.expit(-eta)
        return np.exp(-0.5 * np.square(eta)) / np.sqrt(2.0 * np.pi)

    def variance(self, eta):
        """mu (1 - mu), computed from both tails to keep precision."""
        return self.inverse(eta) * self.inverse(-eta)

    def log_likelihood(self, response, eta):
        if self.kind == "logit":
            log_mu = -np.logaddexp(0.0, -eta)
            log_one_minus = -np.logaddexp(0.0, eta)
        else:
            log_mu = special.log_ndtr(eta)
            log_one_minus = special.log_ndtr(-eta)
        return float(np.sum(response * log_mu + (1.0 - response) * log_one_minus))


LOGIT = LinkFunction("logit")
PROBIT = LinkFunction("probit")


def get_link(kind):
    if isinstance(kind, LinkFunction):
        return kind
    return LinkFunction(kind)


@dataclass(frozen=True)
class FitControls:
    max_iterations: int = 100
    tolerance: float = 1e-10
    clip_floor: float = 1e-6
    rank_tolerance: float = 1e-10

    @classmethod
    def from_settings(cls, settings):
        return cls(
            max_iterations=settings.irls_max_iterations,
            tolerance=settings.irls_tolerance,
            clip_floor=settings.clip_floor,
            rank_tolerance=settings.rank_tolerance,
        )


@dataclass(frozen=True, eq=False)
class FittedBinaryModel:
    link: LinkFunction
    coefficients: np.ndarray
    fitted_probabilities: np.ndarray
    deviance: float
    converged: bool
    iterations: int
    columns: tuple = ()
    linear_predictor: np.ndarray = field(default=None, repr=False)
    deviance_path: tuple = ()
    clipped: int = 0
    separated: bool = False

    def raw_probabilities(self):
        return self.link.inverse(self.linear_predictor)

    def score(self, design, response):
        """Score vector sum_i x_ij (y_i - mu_i) dmu_i / var_i at the fitted coefficients."""
        eta = self.linear_predictor
        weight = self.link.derivative(eta) / self.link.variance(eta)
        residual = np.asarray(response, dtype=float) - self.link.inverse(eta)
        return _values(design).T @ (residual * weight)

    def predict(self, design, clip_floor=None):
        eta = _values(design) @ self.coefficients
        mu = self.link.inverse(eta)
        if clip_floor is None:
            return mu
        return np.clip(mu, clip_floor, 1.0 - clip_floor)

    def as_dict(self):
        return {
            "link": self.link.kind,
            "columns": list(self.columns),
            "coefficients": self.coefficients.tolist(),
            "deviance": self.deviance,
            "converged": self.converged,
            "iterations": self.iterations,
            "clipped": self.clipped,
            "separated": self.separated,
        }


def _values(design):
    return getattr(design, "values", design)


def _columns(design):
    columns = getattr(design, "columns", None)
    if columns is None:
        return tuple(f"x{j}" for j in range(np.shape(design)[1]))
    return tuple(columns)


def check_rank(values, tolerance=1e-10, columns=None):
    """
    Raise RankDeficient when pivoted QR finds a pivot below tolerance x largest pivot.

    Args:
        values: n x p design array
        tolerance: Relative pivot threshold
        columns: Optional column names for the error message
    """
    if values.shape[1] == 0:
        return
    _, r, perm = linalg.qr(values, mode="economic", pivoting=True)
    pivots = np.abs(np.diag(r))
    if pivots.size < values.shape[1]:
        small = np.arange(pivots.size, values.shape[1])
    else:
        small = np.flatnonzero(pivots < tolerance * pivots[0])
    if small.size:
        names = [columns[j] if columns else j for j in perm[small]]
        throw(f"Design is rank deficient; collinear column(s): {names}", RankDeficient)


def fit(design, response, link=LOGIT, controls=None):
    """
    Fit a binary regression by IRLS.

    Args:
        design: DesignMatrix or n x p array (intercept included by the caller)
        response: 0/1 values
        link: LinkFunction or "logit"/"probit"
        controls: FitControls

    Returns:
        FittedBinaryModel
    """
    controls = controls or FitControls()
    link = get_link(link)
    x = np.asarray(_values(design), dtype=float)
    y = np.asarray(response, dtype=float)
    columns = _columns(design)

    if np.all(y == y[0]):
        throw(f"Response is constant ({y[0]:g}); probabilities are degenerate", AllSameResponse)
    check_rank(x, controls.rank_tolerance, columns)

    # Standard GLM start: shrink the response toward 1/2
    eta = link.link((y + 0.5) / 2.0)
    beta = None
    deviance = np.inf
    path = []
    converged = False
    iterations = 0

    for iterations in range(1, controls.max_iterations + 1):
        dmu = link.derivative(eta)
        var = np.maximum(link.variance(eta), _EPS)
        dmu = np.maximum(dmu, _EPS)
        weight = np.square(dmu) / var
        working = eta + (y - link.inverse(eta)) / dmu

        root = np.sqrt(weight)
        beta_new = linalg.lstsq(x * root[:, None], working * root, lapack_driver="gelsy")[0]
        eta_new = x @ beta_new
        deviance_new = -2.0 * link.log_likelihood(y, eta_new)

        # Step-halving toward the previous coefficients on deviance increase
        if beta is not None and deviance_new > deviance:
            for _ in range(50):
                beta_new = 0.5 * (beta + beta_new)
                eta_new = x @ beta_new
                deviance_new = -2.0 * link.log_likelihood(y, eta_new)
                if deviance_new <= deviance:
                    break
            else:
                log.warning("GLM: step-halving failed to reduce the deviance; stopping")
                break

        change = abs(deviance - deviance_new) / (abs(deviance_new) + 0.1)
        beta, eta, deviance = beta_new, eta_new, deviance_new
        path.append(deviance)
        if change < controls.tolerance:
            converged = True
            break

    separated = bool(np.any(link.variance(eta) < _SEPARATION_VARIANCE))
    if separated:
        log.warning("GLM: fitted probabilities numerically 0 or 1 (quasi-separation)")
        converged = False
    elif not converged:
        log.warning(f"GLM: IRLS did not converge in {controls.max_iterations} iterations")

    mu = link.inverse(eta)
    floor = controls.clip_floor
    clipped = int(np.sum((mu < floor) | (mu > 1.0 - floor)))

    return FittedBinaryModel(
        link=link,
        coefficients=beta,
        fitted_probabilities=np.clip(mu, floor, 1.0 - floor),
        deviance=float(deviance),
        converged=converged,
        iterations=iterations,
        columns=columns,
        linear_predictor=eta,
        deviance_path=tuple(path),
        clipped=clipped,
        separated=separated,
    )


def _reduced(design, column_group):
    if hasattr(design, "without"):
        return design.without(column_group)
    keep = [j for j in range(np.shape(design)[1]) if j not in set(column_group)]
    return np.asarray(design)[:, keep]


def deviance_drop(design, response, link=LOGIT, column_group=(), controls=None, full_model=None):
    """
    Deviance increase from dropping a group of columns (likelihood-ratio statistic).

    Args:
        design: DesignMatrix or array
        response: 0/1 values
        link: LinkFunction
        column_group: Column indices to drop (never the intercept, index 0)
        controls: FitControls
        full_model: Optional already-fitted full model

    Returns:
        float: deviance(reduced) - deviance(full), clamped at 0
    """
    group = tuple(int(j) for j in column_group)
    if not group:
        throw("column_group must name at least one column", ConfigError)
    if 0 in group:
        throw("The intercept cannot be dropped", ConfigError)

    full = full_model or fit(design, response, link, controls)
    reduced = fit(_reduced(design, group), response, link, controls)
    drop = reduced.deviance - full.deviance
    if drop < 0:
        if drop < -1e-8:
            log.warning(f"GLM: negative deviance drop {drop:.3g} for columns {list(group)}; clamped to 0")
        drop = 0.0
    return float(drop)


def rank_predictors(design, response, link=LOGIT, candidate_groups=(), controls=None):
    """
    Order column groups by deviance drop, largest first.

    Ties keep the declared order.

    Args:
        design: DesignMatrix or array
        response: 0/1 values
        link: LinkFunction
        candidate_groups: Sequence of column-index groups
        controls: FitControls

    Returns:
        list: (group, drop) tuples in descending drop order
    """
    if not candidate_groups:
        throw("candidate_groups must be non-empty", ConfigError)

    full = fit(design, response, link, controls)
    scored = [
        (tuple(group), deviance_drop(design, response, link, group, controls, full_model=full))
        for group in candidate_groups
    ]
    # sorted() is stable, so exact ties stay in declared order
    return sorted(scored, key=lambda item: -item[1])
