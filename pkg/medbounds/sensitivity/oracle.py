"""
Oracle

Synthetic data with known mean potential outcomes, and exhaustive bound
computation on tiny programs for checking the alternating solver.
"""

import itertools
from dataclasses import asdict, dataclass, field

import numpy as np
import pandas as pd
from scipy import special

from medbounds import logger
from medbounds.exceptions import ConfigError, GridTooLarge, Numerics, throw
from medbounds.sensitivity import estimands
from medbounds.sensitivity.bounds import alternate_solve, free_blocks, solve_block
from medbounds.sensitivity.dataset import AnalysisSample, VariableRoles
from medbounds.sensitivity.doctype.solver_settings.solver_settings import get_settings
from medbounds.sensitivity.lpcore import LinearProgram, get_solver

log = logger("oracle")

MAX_GRID = 10_000_000


def _coefficients(value, size, default):
    if value is None:
        return np.full(size, default, dtype=float)
    value = np.atleast_1d(np.asarray(value, dtype=float))
    if value.size == 1 and size != 1:
        return np.full(size, float(value[0]))
    if value.size != size:
        throw(f"Expected {size} coefficient(s), got {value.size}", ConfigError)
    return value


@dataclass(frozen=True)
class SyntheticDgp:
    """
    X ~ N(0, I); D, S logistic; M linear-Gaussian; Y linear (or thresholded).

    A scalar confounder U ~ N(0, 1) enters the D, M, S and Y equations with
    the u_* coefficients. With all u_* at 0 the sample satisfies the
    identifying assumptions.
    """

    n: int = 1000
    n_covariates: int = 2
    n_mediators: int = 1
    d_intercept: float = 0.0
    d_x: tuple = None
    m_intercept: float = 0.0
    m_d: float = 1.0
    m_x: tuple = None
    m_noise: float = 1.0
    s_intercept: float = 1.0
    s_d: float = 0.2
    s_m: tuple = None
    s_x: tuple = None
    y_intercept: float = 0.0
    y_d: float = 1.0
    y_m: tuple = None
    y_x: tuple = None
    y_dm: float = 0.0
    y_noise: float = 1.0
    binary_outcome: bool = False
    u_d: float = 0.0
    u_m: float = 0.0
    u_s: float = 0.0
    u_y: float = 0.0
    seed: int = 0
    truth_draws: int = 200_000

    def __post_init__(self):
        if self.n < 2:
            throw("n must be at least 2", ConfigError)
        if self.n_mediators < 1 or self.n_covariates < 1:
            throw("At least one mediator and one covariate are required", ConfigError)
        k, q = self.n_covariates, self.n_mediators
        object.__setattr__(self, "d_x", tuple(_coefficients(self.d_x, k, 0.5)))
        object.__setattr__(self, "m_x", tuple(_coefficients(self.m_x, k, 0.3)))
        object.__setattr__(self, "s_m", tuple(_coefficients(self.s_m, q, 0.2)))
        object.__setattr__(self, "s_x", tuple(_coefficients(self.s_x, k, 0.2)))
        object.__setattr__(self, "y_m", tuple(_coefficients(self.y_m, q, 0.5)))
        object.__setattr__(self, "y_x", tuple(_coefficients(self.y_x, k, 0.5)))

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(**data)
        except TypeError as e:
            throw(f"Invalid DGP block: {e}", ConfigError)

    def as_dict(self):
        return {key: list(v) if isinstance(v, tuple) else v for key, v in asdict(self).items()}

    @property
    def roles(self):
        return VariableRoles(
            outcome="y",
            treatment="d",
            selection="s",
            mediators=tuple(f"m{j + 1}" for j in range(self.n_mediators)),
            covariates=tuple(f"x{j + 1}" for j in range(self.n_covariates)),
        )

    # -- structural equations --------------------------------------------------

    def _draws(self, rng, n):
        return {
            "x": rng.standard_normal((n, self.n_covariates)),
            "u": rng.standard_normal(n),
            "e_d": rng.random(n),
            "e_m": rng.standard_normal((n, self.n_mediators)),
            "e_s": rng.random(n),
            "e_y": rng.standard_normal(n) if not self.binary_outcome else rng.logistic(size=n),
        }

    def treatment(self, draws):
        index = self.d_intercept + draws["x"] @ np.asarray(self.d_x) + self.u_d * draws["u"]
        return (draws["e_d"] < special.expit(index)).astype(np.int8)

    def mediators(self, draws, d):
        base = self.m_intercept + self.m_d * d + draws["x"] @ np.asarray(self.m_x) + self.u_m * draws["u"]
        return base[:, None] + self.m_noise * draws["e_m"]

    def selection(self, draws, d, m):
        index = (
            self.s_intercept
            + self.s_d * d
            + m @ np.asarray(self.s_m)
            + draws["x"] @ np.asarray(self.s_x)
            + self.u_s * draws["u"]
        )
        return (draws["e_s"] < special.expit(index)).astype(np.int8)

    def outcome(self, draws, d, m):
        index = (
            self.y_intercept
            + self.y_d * d
            + m @ np.asarray(self.y_m)
            + self.y_dm * d * m.sum(axis=1)
            + draws["x"] @ np.asarray(self.y_x)
            + self.u_y * draws["u"]
        )
        if self.binary_outcome:
            return (index + self.y_noise * draws["e_y"] > 0).astype(float)
        return index + self.y_noise * draws["e_y"]


@dataclass(frozen=True, eq=False)
class SyntheticData:
    sample: AnalysisSample
    truths: dict
    frame: pd.DataFrame = field(repr=False, default=None)

    @property
    def effects(self):
        return {effect: estimands.difference(self.truths, effect) for effect in estimands.EFFECTS}

    def truth_record(self):
        return {"mpo": dict(self.truths), "effects": self.effects}


def closed_form_truths(dgp):
    """
    E[Y(d, M(d'))] for the linear outcome equation.

    X and U have mean 0, so only the intercepts and the treatment paths remain.
    """
    if dgp.binary_outcome:
        throw("No closed form for a thresholded outcome", ConfigError)
    y_m = np.asarray(dgp.y_m)
    truths = {}
    for target in estimands.TARGETS:
        d, d_mediator = int(target[1]), int(target[2])
        mean_m = dgp.m_intercept + dgp.m_d * d_mediator
        truths[target] = float(
            dgp.y_intercept + dgp.y_d * d + mean_m * y_m.sum() + dgp.y_dm * d * mean_m * dgp.n_mediators
        )
    return truths


def simulate_truths(dgp, draws=None, seed=None):
    """
    E[Y(d, M(d'))] by simulating both worlds from the same noise draws.

    Returns:
        dict: target -> mean
    """
    draws = draws or dgp.truth_draws
    rng = np.random.default_rng([dgp.seed if seed is None else seed, 1])
    noise = dgp._draws(rng, draws)
    worlds = {arm: dgp.mediators(noise, arm) for arm in (0, 1)}
    truths = {}
    for target in estimands.TARGETS:
        d, d_mediator = int(target[1]), int(target[2])
        truths[target] = float(dgp.outcome(noise, d, worlds[d_mediator]).mean())
    return truths


def generate(dgp):
    """
    Draw a sample from the DGP together with its true mean potential outcomes.

    Outcomes of unselected rows are left missing.

    Returns:
        SyntheticData
    """
    rng = np.random.default_rng([dgp.seed, 0])
    draws = dgp._draws(rng, dgp.n)
    d = dgp.treatment(draws)
    m = dgp.mediators(draws, d)
    s = dgp.selection(draws, d, m)
    y = np.where(s == 1, dgp.outcome(draws, d, m), np.nan)

    roles = dgp.roles
    frame = pd.DataFrame({roles.outcome: y, roles.treatment: d, roles.selection: s})
    for j, name in enumerate(roles.mediators):
        frame[name] = m[:, j]
    for j, name in enumerate(roles.covariates):
        frame[name] = draws["x"][:, j]

    truths = simulate_truths(dgp) if dgp.binary_outcome else closed_form_truths(dgp)
    sample = AnalysisSample.from_frame(frame, roles)
    log.debug(f"Oracle: generated {dgp.n} rows (seed {dgp.seed})")
    return SyntheticData(sample=sample, truths=truths, frame=frame)


# -- brute force -----------------------------------------------------------------


def _block_levels(block, k):
    """Per-row grid levels; one designated row absorbs the normalization."""
    pivot = int(np.argmax(block.upper - block.lower))
    levels = [
        np.unique(np.linspace(block.lower[j], block.upper[j], k + 2))
        for j in range(block.start.size)
        if j != pivot
    ]
    return pivot, levels


def _block_points(block, pivot, levels, tolerance):
    others = [j for j in range(block.start.size) if j != pivot]
    for combo in itertools.product(*levels):
        values = np.empty(block.start.size)
        values[others] = combo
        values[pivot] = block.total - values[others].sum()
        slack = tolerance * (1.0 + abs(values[pivot]))
        if block.lower[pivot] - slack <= values[pivot] <= block.upper[pivot] + slack:
            values[pivot] = min(max(values[pivot], block.lower[pivot]), block.upper[pivot])
            yield values


def grid_size(problem, k=3):
    """Grid points before the normalization filter; the last free block is solved, not gridded."""
    size = 1
    for index in free_blocks(problem)[:-1]:
        _, levels = _block_levels(problem.blocks[index], k)
        for level in levels:
            size *= len(level)
    return size


@dataclass(frozen=True)
class OracleBounds:
    lower: float
    upper: float
    evaluated: int = 0
    feasible: int = 0
    lower_weights: list = field(default=None, repr=False, compare=False)
    upper_weights: list = field(default=None, repr=False, compare=False)

    @property
    def interval(self):
        return self.lower, self.upper

    def contains(self, lower, upper, tolerance=0.0):
        return self.lower - tolerance <= lower and upper <= self.upper + tolerance


def _complete(problem, weights, last, sense, settings):
    """Solve the last free block exactly with the others fixed; None when infeasible."""
    solution = solve_block(problem, weights, last, sense, settings)
    if not solution.optimal:
        return None
    completed = [w.copy() for w in weights]
    completed[last] = solution.values
    return completed


# Shrink of an uncompletable mixture toward the IPW weights; never all the way
_SHRINK = (1.0, 0.5, 0.25, 0.125)


def _random_points(problem, draws, rng, settings):
    """
    Feasible points from random mixtures of block vertices.

    Each free block but the last is a random convex combination of two
    random-cost vertices of its own box and normalization; the last free
    block then meets the product constraint by LP. A mixture the LP cannot
    complete is shrunk toward the IPW weights a few times and dropped if
    it still fails.
    """
    solver = get_solver(settings)
    free = free_blocks(problem)
    ones = np.ones(problem.n_rows)

    def vertex(block):
        lp = LinearProgram.from_rows(
            objective=rng.standard_normal(problem.n_rows),
            boxes=np.column_stack([block.lower, block.upper]),
            equalities=[(ones, block.total)],
        )
        return solver(lp, settings).values

    points = []
    for _ in range(draws):
        mixture = {}
        for k in free[:-1]:
            block = problem.blocks[k]
            share = rng.uniform()
            mixture[k] = share * vertex(block) + (1.0 - share) * vertex(block)
        sense = "min" if rng.uniform() < 0.5 else "max"
        for shrink in _SHRINK:
            weights = problem.start()
            for k, values in mixture.items():
                weights[k] = weights[k] + shrink * (values - weights[k])
            completed = _complete(problem, weights, free[-1], sense, settings)
            if completed is not None:
                points.append(completed)
                break
    return points


def _polish(problem, candidates, sense, settings):
    """
    Best objective over alternating sweeps from each candidate.

    Values are recomputed from the returned weights, which must be feasible.
    """
    best_value, best_weights = None, None
    for start in candidates:
        weights = alternate_solve(problem, sense, settings, start=start).weights
        if not problem.is_feasible(weights, settings.lp_feasibility_tolerance, settings.lp_equality_tolerance):
            log.warning(f"Oracle: {problem.target} {sense} dropped an infeasible polished point")
            continue
        value = problem.objective(weights)
        if best_value is None or (value < best_value if sense == "min" else value > best_value):
            best_value, best_weights = value, weights
    return best_value, best_weights


def _best(points, sense, count):
    return sorted(points, key=lambda item: item[0], reverse=(sense == "max"))[:count]


def _extremes(problem, found, polish, settings):
    """Polish the best candidates of each sense and collect the bounds."""
    result = {}
    for sense, points in found.items():
        value, weights = _polish(problem, [w for _, w in _best(points, sense, polish)], sense, settings)
        if value is None:
            throw(f"Oracle: no feasible point for {problem.target} {sense}", Numerics)
        result[sense] = (value, weights)
    return result


def brute_force_bounds(problem, k=3, polish=5, draws=50, seed=0, settings=None, max_grid=MAX_GRID):
    """
    Widest feasible objective range over a grid of block values.

    Every free block but the last is gridded at its box endpoints plus k
    interior points per row; the last free block is solved exactly by LP for
    each grid point. The best grid points, and the best of `draws` random
    vertex mixtures, are then polished with alternating sweeps. Neither set
    of starts uses the IPW weights.

    Args:
        problem: BoundProblem (a handful of retained rows)
        k: Interior points per row
        polish: Number of best grid and random points to polish per sense
        draws: Random vertex mixtures
        max_grid: Refuse grids larger than this

    Returns:
        OracleBounds
    """
    settings = settings or get_settings()
    free = free_blocks(problem)
    if not free:
        point = problem.objective(problem.start())
        return OracleBounds(lower=point, upper=point, evaluated=1, feasible=1,
                            lower_weights=problem.start(), upper_weights=problem.start())

    size = grid_size(problem, k)
    if size > max_grid:
        throw(f"Brute-force grid has {size} points (limit {max_grid})", GridTooLarge)

    gridded = free[:-1]
    grids = []
    for index in gridded:
        block = problem.blocks[index]
        pivot, levels = _block_levels(block, k)
        grids.append(list(_block_points(block, pivot, levels, settings.lp_equality_tolerance)))

    found = {"min": [], "max": []}
    evaluated = feasible = 0
    for combo in itertools.product(*grids):
        weights = problem.start()
        for index, values in zip(gridded, combo):
            weights[index] = values
        evaluated += 1
        completed = {sense: _complete(problem, weights, free[-1], sense, settings) for sense in found}
        if any(c is None for c in completed.values()):
            continue
        feasible += 1
        for sense, point in completed.items():
            found[sense].append((problem.objective(point), point))

    mixtures = _random_points(problem, draws, np.random.default_rng(seed), settings)
    scored = [(problem.objective(w), w) for w in mixtures]
    candidates = {
        sense: _best(points, sense, polish) + _best(scored, sense, polish) for sense, points in found.items()
    }

    extremes = _extremes(problem, candidates, 2 * polish, settings)
    log.debug(f"Oracle: {problem.target} grid {evaluated} points, {feasible} feasible, {len(mixtures)} mixtures")
    return OracleBounds(
        lower=extremes["min"][0],
        upper=extremes["max"][0],
        evaluated=evaluated,
        feasible=feasible,
        lower_weights=extremes["min"][1],
        upper_weights=extremes["max"][1],
    )


def random_search_bounds(problem, draws=200, polish=5, seed=0, settings=None):
    """
    Objective range over random vertex mixtures, polished by alternating sweeps.

    Independent of the grid and of the IPW weights.

    Returns:
        OracleBounds
    """
    settings = settings or get_settings()
    if not free_blocks(problem):
        return brute_force_bounds(problem, settings=settings)
    points = _random_points(problem, draws, np.random.default_rng(seed), settings)
    scored = [(problem.objective(w), w) for w in points]
    extremes = _extremes(problem, {"min": list(scored), "max": list(scored)}, polish, settings)
    return OracleBounds(
        lower=extremes["min"][0],
        upper=extremes["max"][0],
        evaluated=draws,
        feasible=len(points),
        lower_weights=extremes["min"][1],
        upper_weights=extremes["max"][1],
    )
