"""
Bounds

Builds the weight programs for the four mean potential outcomes and solves
them by alternating exact LPs over one weight block at a time. Effect bounds
are interval differences of the target bounds.
"""

from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed

from medbounds import logger
from medbounds.exceptions import EmptyRetainedSet, MedboundsError, NonMonotoneStep, ZeroNormalizer, throw
from medbounds.sensitivity import estimands
from medbounds.sensitivity.doctype.solver_settings.solver_settings import get_settings
from medbounds.sensitivity.lpcore import LinearProgram, get_solver, solve_weighted_fraction_fixed

log = logger("bounds")

# target -> blocks as (assumption, complement, offset); sweep order is A1, A2, A3
BLOCK_LAYOUT = {
    "y11": (("A1", False, 0.0), ("A3", False, 0.0)),
    "y00": (("A1", True, 0.0), ("A3", False, 0.0)),
    "y10": (("A1", True, 0.0), ("A2", False, 1.0), ("A3", False, 0.0)),
    "y01": (("A1", False, 0.0), ("A2", True, 1.0), ("A3", False, 0.0)),
}

# Normalizer and box readings the weight programs use.
# Echoed into every report.
CORRECTIONS = (
    "Each weight block normalizes against its own propensity score.",
    "E[Y(0,M(0))] searches 1 - q^A1 (complement weights) on the D=0, S=1 rows.",
    "E[Y(1,M(0))] normalizer is sum over D=1,S=1 of 1/(1-p^A1) * (1/p^A2 - 1) / p^A3.",
    "E[Y(0,M(1))] normalizer is sum over D=0,S=1 of 1/p^A1 * (1/(1-p^A2) - 1) / p^A3.",
    "E[Y(0,M(1))] boxes use the arm-0 budgets with the standard sqrt(p(1-p)) scale.",
    "Probability boxes are intersected with [clip_floor, 1] before inversion.",
)


def weight_box(p, eps, clip_floor=1e-6, complement=False):
    """
    Inverse-probability box of the entropy ball around p.

    The ball |q - p| <= eps * sqrt(p (1 - p)) is intersected with
    [clip_floor, 1] and mapped to w = 1/q, or to w = 1/(1 - q) for the
    complement block (same scale, centre 1 - p).

    Args:
        p: Fitted probabilities
        eps: Budget (scalar or per row), nonnegative
        clip_floor: Smallest admissible probability
        complement: Box for 1/(1 - q)

    Returns:
        tuple: (lower, upper) arrays
    """
    p = np.asarray(p, dtype=float)
    centre = 1.0 - p if complement else p
    radius = eps * np.sqrt(p * (1.0 - p))
    lower = 1.0 / np.minimum(1.0, centre + radius)
    upper = 1.0 / np.maximum(clip_floor, centre - radius)
    return lower, upper


@dataclass(frozen=True, eq=False)
class WeightBlock:
    assumption: str
    complement: bool
    offset: float
    start: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    epsilon: float = 0.0

    @property
    def name(self):
        return ("wbar" if self.complement else "w") + self.assumption

    @property
    def total(self):
        """Right-hand side of the block's normalization."""
        return float(self.start.sum())

    @property
    def degenerate(self):
        return bool(np.all(self.upper - self.lower <= 0.0))


@dataclass(frozen=True, eq=False)
class BoundProblem:
    target: str
    arm: int
    outcome: np.ndarray
    blocks: tuple
    normalizer: float
    rows: np.ndarray = field(default=None, repr=False)

    @property
    def n_rows(self):
        return self.outcome.size

    def start(self):
        return [block.start.copy() for block in self.blocks]

    def product(self, weights):
        factor = np.ones(self.n_rows)
        for block, values in zip(self.blocks, weights):
            factor = factor * (values - block.offset)
        return factor

    def objective(self, weights):
        return float(self.outcome @ self.product(weights) / self.normalizer)

    def constraint_residuals(self, weights):
        """Normalization residual of each block, then the product constraint's."""
        residuals = [float(w.sum() - block.total) for block, w in zip(self.blocks, weights)]
        residuals.append(float(self.product(weights).sum() - self.normalizer))
        return residuals

    def is_feasible(self, weights, box_tolerance=1e-9, equality_tolerance=1e-7):
        """Every block inside its box and every constraint met, both relative."""
        for block, values in zip(self.blocks, weights):
            slack = box_tolerance * (1.0 + np.abs(block.upper))
            if np.any(values < block.lower - slack) or np.any(values > block.upper + slack):
                return False
        scales = [1.0 + abs(block.total) for block in self.blocks] + [1.0 + abs(self.normalizer)]
        residuals = self.constraint_residuals(weights)
        return all(abs(r) <= equality_tolerance * s for r, s in zip(residuals, scales))


def build_problem(target, sample, scores, budget, settings=None):
    """
    Weight program for one mean potential outcome.

    Args:
        target: "y11", "y00", "y10" or "y01"
        sample: AnalysisSample
        scores: PropensityScores
        budget: EntropyBudget (arm-specific values are taken from the target's arm)

    Returns:
        BoundProblem
    """
    settings = settings or get_settings()
    arm = estimands.target_arm(target)
    rows = sample.arm_mask(arm)
    if not rows.any():
        throw(f"{target}: no rows with D={arm}, S=1", EmptyRetainedSet)

    blocks = []
    for assumption, complement, offset in BLOCK_LAYOUT[target]:
        p = scores[assumption][rows]
        eps = budget.get(assumption, arm)
        lower, upper = weight_box(p, eps, settings.clip_floor, complement)
        start = 1.0 / (1.0 - p) if complement else 1.0 / p
        blocks.append(WeightBlock(assumption, complement, offset, start, lower, upper, eps))

    normalizer = float(np.prod([b.start - b.offset for b in blocks], axis=0).sum())
    if not np.isfinite(normalizer) or normalizer <= np.finfo(float).tiny:
        throw(f"{target}: normalizer {normalizer!r} is not positive", ZeroNormalizer)
    return BoundProblem(
        target=target,
        arm=arm,
        outcome=np.asarray(sample.y[rows], dtype=float),
        blocks=tuple(blocks),
        normalizer=normalizer,
        rows=rows,
    )


@dataclass(frozen=True, eq=False)
class SolveResult:
    value: float
    weights: list = field(repr=False)
    converged: bool
    sweeps: int
    history: tuple = ()
    start_gap: float = None


def _better(sense, new, old):
    return new < old if sense == "min" else new > old


def free_blocks(problem):
    return [k for k, block in enumerate(problem.blocks) if not block.degenerate]


def solve_block(problem, weights, k, sense, settings):
    block = problem.blocks[k]
    others = [w for j, w in enumerate(weights) if j != k]
    offsets = [b.offset for j, b in enumerate(problem.blocks) if j != k]
    return solve_weighted_fraction_fixed(
        others,
        problem.outcome,
        block.lower,
        block.upper,
        problem.normalizer,
        problem.normalizer,
        sense=sense,
        offset=block.offset,
        block_total=block.total,
        other_offsets=offsets,
        settings=settings,
        raise_on_infeasible=False,
    )


def _sweep_from(problem, sense, settings, weights, max_sweeps, quiet=False):
    """Block-coordinate LP sweeps from one feasible point."""
    value = problem.objective(weights)
    history = [value]
    free = free_blocks(problem)
    if not free:
        return SolveResult(value=value, weights=weights, converged=True, sweeps=0, history=tuple(history))

    slack = max(settings.sweep_tolerance, settings.lp_equality_tolerance)
    best, best_weights = value, [w.copy() for w in weights]
    converged = False
    sweep = 0
    for sweep in range(1, max_sweeps + 1):
        sweep_start = value
        for k in free:
            solution = solve_block(problem, weights, k, sense, settings)
            if not solution.optimal:
                # The current point is feasible; a numerically rejected LP keeps it
                log.debug(f"Bounds: {problem.target} {sense}: block {problem.blocks[k].name} LP rejected, kept")
                continue
            new_value = solution.objective_value
            if _better(sense, value, new_value) and abs(new_value - value) > slack * (1.0 + abs(value)):
                raise NonMonotoneStep(
                    f"{problem.target} {sense}: block {problem.blocks[k].name} moved "
                    f"{value:.12g} -> {new_value:.12g}"
                )
            weights[k] = solution.values
            value = new_value
            if _better(sense, value, best):
                best, best_weights = value, [w.copy() for w in weights]
        history.append(value)

        change = abs(value - sweep_start) / max(abs(sweep_start), np.finfo(float).tiny)
        if change < settings.sweep_tolerance:
            converged = True
            break

    if not converged and not quiet:
        log.warning(f"Bounds: {problem.target} {sense} stopped after {max_sweeps} sweeps")
    return SolveResult(value=best, weights=best_weights, converged=converged, sweeps=sweep, history=tuple(history))


def alternate_solve(problem, sense="min", settings=None, start=None, seed=0):
    """
    Block-coordinate LP sweeps.

    Each sub-step solves the exact LP over one free block with the others
    held fixed, so the objective never moves against `sense`. The result is
    a feasible extremum; with two or more free blocks it may be local.

    Given `start`, one run from that point. Otherwise the IPW weights are
    run to convergence, settings.starts - 1 further starts (see random_start)
    are each swept settings.scout_sweeps times, and the best scout is run to
    convergence as well. The better of the two runs is returned, with
    `start_gap` its distance from the IPW-start value.

    Args:
        problem: BoundProblem
        sense: "min" or "max"
        settings: SolverSettings (sweep_tolerance, max_sweeps, starts, scout_sweeps)
        start: Optional list of feasible block values
        seed: Seed for the extra starts

    Returns:
        SolveResult
    """
    settings = settings or get_settings()
    if start is not None:
        weights = [np.array(w, dtype=float) for w in start]
        return _sweep_from(problem, sense, settings, weights, settings.max_sweeps)

    result = _sweep_from(problem, sense, settings, problem.start(), settings.max_sweeps)
    if settings.starts <= 1 or len(free_blocks(problem)) < 2:
        return result

    target_index = list(BLOCK_LAYOUT).index(problem.target)
    scout = None
    for start_index in range(1, settings.starts):
        rng = np.random.default_rng([seed, target_index, int(sense == "max"), start_index])
        aligned = sense if start_index == 1 else None
        weights = random_start(problem, rng, settings, aligned=aligned)
        candidate = _sweep_from(problem, sense, settings, weights, settings.scout_sweeps, quiet=True)
        if scout is None or _better(sense, candidate.value, scout.value):
            scout = candidate

    best = result
    if _better(sense, scout.value, result.value):
        finished = _sweep_from(problem, sense, settings, [w.copy() for w in scout.weights], settings.max_sweeps)
        if _better(sense, finished.value, result.value):
            best = finished

    gap = abs(best.value - result.value)
    if gap > settings.sweep_tolerance * (1.0 + abs(result.value)):
        log.info(f"Bounds: {problem.target} {sense} improved by {gap:.3g} from another start (local optimum)")
    return SolveResult(
        value=best.value,
        weights=best.weights,
        converged=best.converged,
        sweeps=best.sweeps,
        history=best.history,
        start_gap=gap,
    )


# Pull of the extra-start vertices toward the IPW weights, tried in order
_PULL = (1.0, 0.5, 0.25, 0.125, 0.0625, 0.03125, 0.015625, 0.0)


def random_start(problem, rng, settings=None, aligned=None):
    """
    Feasible start away from the IPW weights.

    Every free block but the last is put at a vertex of its own box and
    normalization (random-cost LP), then pulled toward its IPW weights just
    far enough that the last free block can still meet the product
    constraint, which it does through a second random-cost LP.

    Args:
        problem: BoundProblem
        rng: numpy Generator
        aligned: "min" or "max" to use the outcome as cost instead of a random one

    Returns:
        list: block values
    """
    settings = settings or get_settings()
    solver = get_solver(settings)
    weights = problem.start()
    free = free_blocks(problem)
    if not free:
        return weights

    def cost():
        if aligned is None:
            return rng.standard_normal(problem.n_rows)
        return problem.outcome if aligned == "min" else -problem.outcome

    ones = np.ones(problem.n_rows)
    vertices = {}
    for k in free[:-1]:
        block = problem.blocks[k]
        lp = LinearProgram.from_rows(
            objective=cost(),
            boxes=np.column_stack([block.lower, block.upper]),
            equalities=[(ones, block.total)],
        )
        vertices[k] = solver(lp, settings).values

    last = free[-1]
    block = problem.blocks[last]
    for pull in _PULL:
        trial = [w.copy() for w in weights]
        for k, vertex in vertices.items():
            trial[k] = problem.blocks[k].start + pull * (vertex - problem.blocks[k].start)
        factor = np.ones(problem.n_rows)
        for j, other in enumerate(problem.blocks):
            if j != last:
                factor = factor * (trial[j] - other.offset)
        lp = LinearProgram.from_rows(
            objective=cost(),
            boxes=np.column_stack([block.lower, block.upper]),
            equalities=[(factor, problem.normalizer + block.offset * factor.sum()), (ones, block.total)],
        )
        solution = solver(lp, settings, raise_on_infeasible=False)
        if solution.optimal:
            trial[last] = solution.values
            return trial
    return weights


@dataclass(frozen=True)
class TargetBounds:
    target: str
    lower: float
    upper: float
    point: float
    sweeps: tuple = (0, 0)
    converged: tuple = (True, True)
    local_optimum_gap: tuple = (None, None)

    @property
    def label(self):
        return estimands.TARGETS[self.target][1]

    def as_dict(self):
        return {
            "target": self.target,
            "label": self.label,
            "lower": self.lower,
            "upper": self.upper,
            "point": self.point,
            "sweeps": list(self.sweeps),
            "converged": list(self.converged),
            "local_optimum_gap": list(self.local_optimum_gap),
        }


@dataclass(frozen=True)
class MpoBounds:
    targets: dict

    def __getitem__(self, target):
        return self.targets[target]

    def intervals(self):
        return {t: (b.lower, b.upper) for t, b in self.targets.items()}

    def as_dict(self):
        return {t: b.as_dict() for t, b in self.targets.items()}


@dataclass(frozen=True)
class EffectInterval:
    effect: str
    lower: float
    upper: float
    sharp: bool

    @property
    def label(self):
        return estimands.EFFECTS[self.effect][2]

    def as_dict(self):
        return {"effect": self.effect, "label": self.label, "lower": self.lower, "upper": self.upper, "sharp": self.sharp}


@dataclass(frozen=True)
class EffectBounds:
    effects: dict

    def __getitem__(self, effect):
        return self.effects[effect]

    def as_dict(self):
        return {e: b.as_dict() for e, b in self.effects.items()}


def _solve_job(target, sense, sample, scores, budget, settings, seed):
    try:
        problem = build_problem(target, sample, scores, budget, settings)
        return target, sense, problem, alternate_solve(problem, sense, settings, seed=seed), None
    except MedboundsError as e:
        return target, sense, None, None, e


def all_bounds(sample, scores, budget, settings=None, n_jobs=1, seed=0):
    """
    Minimum and maximum of all four weight programs.

    Args:
        sample: AnalysisSample
        scores: PropensityScores
        budget: EntropyBudget
        settings: SolverSettings
        n_jobs: joblib workers for the eight solves
        seed: Seed for the extra starts of the alternating solver

    Returns:
        MpoBounds
    """
    settings = settings or get_settings()
    jobs = [(target, sense) for target in estimands.TARGETS for sense in ("min", "max")]
    results = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_solve_job)(target, sense, sample, scores, budget, settings, seed) for target, sense in jobs
    )

    failures = [(target, sense, error) for target, sense, _, _, error in results if error is not None]
    if failures:
        summary = "; ".join(f"{t} {s}: {e}" for t, s, e in failures)
        raise type(failures[0][2])(summary) from failures[0][2]

    solved = {(target, sense): (problem, outcome) for target, sense, problem, outcome, _ in results}
    targets = {}
    for target in estimands.TARGETS:
        problem, low = solved[(target, "min")]
        _, high = solved[(target, "max")]
        point = problem.objective(problem.start())
        slack = settings.lp_equality_tolerance * (1.0 + abs(point))
        if low.value > point + slack or high.value < point - slack:
            log.warning(f"Bounds: {target} interval [{low.value:.6g}, {high.value:.6g}] misses the IPW value {point:.6g}")
        targets[target] = TargetBounds(
            target=target,
            lower=low.value,
            upper=high.value,
            point=point,
            sweeps=(low.sweeps, high.sweeps),
            converged=(low.converged, high.converged),
            local_optimum_gap=(low.start_gap, high.start_gap),
        )
    return MpoBounds(targets=targets)


def compose_effects(mpo):
    """
    Effect bounds as interval differences of the target bounds.

    Args:
        mpo: MpoBounds or {target: (lower, upper)}

    Returns:
        EffectBounds
    """
    intervals = mpo.intervals() if isinstance(mpo, MpoBounds) else dict(mpo)
    effects = {}
    for effect, (_, _, _, sharp) in estimands.EFFECTS.items():
        lower, upper = estimands.interval_difference(intervals, effect)
        effects[effect] = EffectInterval(effect=effect, lower=float(lower), upper=float(upper), sharp=sharp)
    return EffectBounds(effects=effects)
