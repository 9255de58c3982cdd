"""
LP Core

Dense bounded-variable primal simplex for programs with finite boxes and a
few equality rows. Phase I drives artificial variables out of the basis,
Phase II optimizes. Pricing is Dantzig for a bounded number of steps, then
Bland's rule, which also takes over after a long run of degenerate pivots.
"""

from dataclasses import dataclass, field

import numpy as np

from medbounds import hooks, logger
from medbounds.exceptions import ConfigError, Infeasible, Numerics, throw
from medbounds.sensitivity.doctype.solver_settings.solver_settings import get_settings

log = logger("lpcore")

_REFACTOR_EVERY = 200
_DEGENERATE_STREAK = 100
# Stand-in for the unbounded room of artificial columns when weighing moves
_ROOM_CAP = 1e12


@dataclass(frozen=True, eq=False)
class LinearProgram:
    """min/max c.x + constant  s.t.  A x = b,  lower <= x <= upper."""

    objective: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    equalities: np.ndarray = None
    rhs: np.ndarray = None
    sense: str = "min"
    constant: float = 0.0

    def __post_init__(self):
        c = np.asarray(self.objective, dtype=float).ravel()
        n = c.size
        lower = np.broadcast_to(np.asarray(self.lower, dtype=float), (n,)).copy()
        upper = np.broadcast_to(np.asarray(self.upper, dtype=float), (n,)).copy()
        if self.equalities is None:
            a = np.zeros((0, n))
            b = np.zeros(0)
        else:
            a = np.atleast_2d(np.asarray(self.equalities, dtype=float))
            b = np.atleast_1d(np.asarray(self.rhs, dtype=float))

        if self.sense not in ("min", "max"):
            throw(f"LP sense must be min or max, got {self.sense!r}", ConfigError)
        if a.shape != (b.size, n):
            throw(f"Equality matrix shape {a.shape} does not match {b.size} rows x {n} variables", ConfigError)
        if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
            throw("LP boxes must be finite", ConfigError)
        if np.any(lower > upper):
            throw("LP box has lower > upper", ConfigError)

        object.__setattr__(self, "objective", c)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "equalities", a)
        object.__setattr__(self, "rhs", b)

    @classmethod
    def from_rows(cls, objective, boxes, equalities=(), sense="min", constant=0.0):
        """Build from [(lower, upper), ...] boxes and [(row, rhs), ...] equalities."""
        boxes = np.asarray(boxes, dtype=float).reshape(-1, 2)
        rows = [np.asarray(row, dtype=float) for row, _ in equalities]
        rhs = [float(value) for _, value in equalities]
        return cls(
            objective=objective,
            lower=boxes[:, 0],
            upper=boxes[:, 1],
            equalities=np.vstack(rows) if rows else None,
            rhs=np.asarray(rhs) if rows else None,
            sense=sense,
            constant=constant,
        )

    @property
    def n(self):
        return self.objective.size

    def value(self, x):
        return float(self.objective @ x + self.constant)

    def residuals(self, x):
        return self.equalities @ x - self.rhs


@dataclass(frozen=True, eq=False)
class LpSolution:
    values: np.ndarray
    objective_value: float
    status: str = "optimal"
    iterations: int = 0
    duals: np.ndarray = field(default=None, repr=False)
    reduced_costs: np.ndarray = field(default=None, repr=False)

    @property
    def optimal(self):
        return self.status == "optimal"

    def dual_bound(self, lp):
        """
        Lagrangian bound b.y + sum_j min/max over the box of d_j x_j.

        Equals the primal objective at an optimal basis.
        """
        d = self.reduced_costs
        if lp.sense == "min":
            box_term = np.where(d >= 0, d * lp.lower, d * lp.upper)
        else:
            box_term = np.where(d >= 0, d * lp.upper, d * lp.lower)
        return float(lp.rhs @ self.duals + box_term.sum() + lp.constant)


@dataclass(frozen=True)
class Tolerances:
    feasibility: float = 1e-9
    optimality: float = 1e-9
    equality: float = 1e-7
    pivot: float = 1e-11
    dantzig_steps: int = 50000
    max_iterations: int = 200000

    @classmethod
    def from_settings(cls, settings):
        return cls(
            feasibility=settings.lp_feasibility_tolerance,
            optimality=settings.lp_optimality_tolerance,
            equality=settings.lp_equality_tolerance,
            pivot=settings.lp_pivot_tolerance,
            dantzig_steps=settings.lp_dantzig_steps,
            max_iterations=settings.lp_max_iterations,
        )


class _BoundedSimplex:
    """Dense tableau over [A | artificials] with explicit nonbasic bound states."""

    def __init__(self, lp, tol):
        self.tol = tol
        m, n = lp.equalities.shape
        self.m, self.n = m, n

        # Minimization form
        self.cost = lp.objective if lp.sense == "min" else -lp.objective

        x = np.where(self.cost >= 0, lp.lower, lp.upper).astype(float)
        residual = lp.rhs - lp.equalities @ x
        signs = np.where(residual >= 0, 1.0, -1.0)

        self.a_full = np.hstack([lp.equalities, np.diag(signs)])
        self.b = lp.rhs.astype(float)
        self.lower = np.concatenate([lp.lower, np.zeros(m)])
        self.upper = np.concatenate([lp.upper, np.full(m, np.inf)])
        self.x = np.concatenate([x, np.abs(residual)])
        self.basis = np.arange(n, n + m)
        self.is_basic = np.zeros(n + m, dtype=bool)
        self.is_basic[self.basis] = True
        self.tableau = signs[:, None] * self.a_full
        self.iterations = 0
        self.pivots_since_refactor = 0

    # -- linear algebra ------------------------------------------------------

    def refactor(self):
        """Recompute the tableau and basic values from the basis columns."""
        if self.m == 0:
            return
        basis_matrix = self.a_full[:, self.basis]
        nonbasic = ~self.is_basic
        try:
            self.tableau = np.linalg.solve(basis_matrix, self.a_full)
            rhs = self.b - self.a_full[:, nonbasic] @ self.x[nonbasic]
            self.x[self.basis] = np.linalg.solve(basis_matrix, rhs)
        except np.linalg.LinAlgError as e:
            throw(f"Singular basis during refactorization: {e}", Numerics)
        self.pivots_since_refactor = 0

    def pivot(self, row, column):
        element = self.tableau[row, column]
        if abs(element) < self.tol.pivot:
            throw(f"Pivot element {element:.3g} below threshold", Numerics)
        self.tableau[row] /= element
        for i in range(self.m):
            if i != row:
                self.tableau[i] -= self.tableau[i, column] * self.tableau[row]
        leaving = self.basis[row]
        self.is_basic[leaving] = False
        self.is_basic[column] = True
        self.basis[row] = column
        self.pivots_since_refactor += 1
        if self.pivots_since_refactor >= _REFACTOR_EVERY:
            self.refactor()

    # -- iterations ----------------------------------------------------------

    def reduced_costs(self, cost):
        return cost - cost[self.basis] @ self.tableau

    def eligible(self, d, movable):
        """
        Improving nonbasic moves.

        A column qualifies when its reduced cost clears the optimality
        tolerance, or when a smaller reduced cost times the room to its
        bound still changes the objective by more than the feasibility
        tolerance (wide boxes up to 1/clip_floor).
        """
        tol = self.tol
        nonbasic = ~self.is_basic & movable
        room_up = self.upper - self.x
        room_down = self.x - self.lower
        increase = nonbasic & (d < 0) & (room_up > tol.feasibility)
        decrease = nonbasic & (d > 0) & (room_down > tol.feasibility)
        room = np.minimum(np.where(d < 0, room_up, room_down), _ROOM_CAP)
        size = np.abs(d)
        significant = (size > tol.optimality) | ((size > tol.pivot) & (size * room > tol.feasibility))
        return increase & significant, decrease & significant

    def flip_batch(self, candidates, increase):
        """
        Move the leading candidates to their opposite bounds at once.

        The basis is unchanged, so every flip keeps its reduced cost; the
        longest prefix that keeps all basic variables inside their boxes is
        applied. Returns the number of flipped columns.
        """
        tol = self.tol
        direction = np.where(increase[candidates], 1.0, -1.0)
        flips = np.where(direction > 0, self.upper[candidates] - self.x[candidates],
                         self.x[candidates] - self.lower[candidates])
        finite = np.isfinite(flips)
        limit = candidates.size if finite.all() else int(np.argmin(finite))
        if limit == 0:
            return 0

        cols = candidates[:limit]
        delta = -self.tableau[:, cols] * (direction[:limit] * flips[:limit])
        path = self.x[self.basis][:, None] + np.cumsum(delta, axis=1)
        low_b = self.lower[self.basis][:, None] - tol.feasibility
        high_b = self.upper[self.basis][:, None] + tol.feasibility
        inside = np.all((path >= low_b) & (path <= high_b), axis=0)
        accepted = limit if inside.all() else int(np.argmin(inside))
        if accepted == 0:
            return 0

        moved = cols[:accepted]
        self.x[moved] = np.where(direction[:accepted] > 0, self.upper[moved], self.lower[moved])
        self.x[self.basis] = path[:, accepted - 1]
        return accepted

    def iterate(self, cost, phase):
        tol = self.tol
        movable = (self.upper - self.lower) > tol.feasibility
        degenerate_run = 0
        bland = False

        while True:
            if self.iterations >= tol.max_iterations:
                throw(f"Simplex exceeded {tol.max_iterations} iterations in phase {phase}", Numerics)

            d = self.reduced_costs(cost)
            increase, decrease = self.eligible(d, movable)
            eligible = increase | decrease
            if not eligible.any():
                return

            bland = bland or self.iterations >= tol.dantzig_steps or degenerate_run >= _DEGENERATE_STREAK
            candidates = np.flatnonzero(eligible)
            if not bland:
                candidates = candidates[np.argsort(-np.abs(d[candidates]), kind="stable")]

            self.iterations += 1
            if self.flip_batch(candidates, increase):
                degenerate_run = 0
                continue

            column = int(candidates[0])
            direction = 1.0 if increase[column] else -1.0

            alpha = direction * self.tableau[:, column]
            basic_x = self.x[self.basis]
            ratios = np.full(self.m, np.inf)
            down = alpha > tol.pivot
            up = alpha < -tol.pivot
            ratios[down] = (basic_x[down] - self.lower[self.basis][down]) / alpha[down]
            ratios[up] = (self.upper[self.basis][up] - basic_x[up]) / -alpha[up]
            ratios = np.maximum(ratios, 0.0)

            if direction > 0:
                flip = self.upper[column] - self.x[column]
            else:
                flip = self.x[column] - self.lower[column]
            step = ratios.min() if self.m else np.inf

            if flip <= step:
                # Bound flip, basis unchanged
                if not np.isfinite(flip):
                    throw("Unbounded direction in a boxed LP", Numerics)
                self.x[self.basis] -= flip * alpha
                self.x[column] = self.upper[column] if direction > 0 else self.lower[column]
                degenerate_run = 0 if flip > tol.feasibility else degenerate_run + 1
                continue

            ties = np.flatnonzero(ratios <= step + tol.feasibility)
            if bland:
                row = int(ties[np.argmin(self.basis[ties])])
            else:
                row = int(ties[np.argmax(np.abs(alpha[ties]))])
            leaving = self.basis[row]

            self.x[self.basis] -= step * alpha
            self.x[column] += direction * step
            self.x[leaving] = self.lower[leaving] if alpha[row] > 0 else self.upper[leaving]
            self.pivot(row, column)
            degenerate_run = degenerate_run + 1 if step <= tol.feasibility else 0

    def drive_out_artificials(self):
        """Pivot basic artificials out on any structural column with a usable entry."""
        for row in range(self.m):
            var = self.basis[row]
            if var < self.n:
                continue
            entries = np.where(~self.is_basic[: self.n], np.abs(self.tableau[row, : self.n]), 0.0)
            column = int(np.argmax(entries)) if entries.size else 0
            if entries.size and entries[column] > self.tol.pivot:
                self.pivot(row, column)
                self.x[var] = 0.0
        # Artificials are fixed at zero from here on
        self.upper[self.n:] = 0.0
        nonbasic_art = ~self.is_basic[self.n:]
        self.x[self.n:][nonbasic_art] = 0.0
        self.refactor()

    def duals(self, cost):
        if self.m == 0:
            return np.zeros(0)
        basis_matrix = self.a_full[:, self.basis]
        return np.linalg.solve(basis_matrix.T, cost[self.basis])


def _infeasible(lp, reason, raise_on_infeasible, iterations=0):
    if raise_on_infeasible:
        throw(f"LP infeasible ({reason})", Infeasible)
    return LpSolution(values=np.full(lp.n, np.nan), objective_value=np.nan, status="infeasible",
                      iterations=iterations)


def solve(lp, settings=None, raise_on_infeasible=True):
    """
    Solve a boxed LP with the bounded-variable simplex.

    Phase I is accepted only when the artificial sum is within the box
    feasibility tolerance (relative to the largest right-hand side); a point
    that still cannot be placed inside its boxes is reported infeasible.

    Args:
        lp: LinearProgram
        settings: SolverSettings
        raise_on_infeasible: Raise Infeasible instead of returning status "infeasible"

    Returns:
        LpSolution
    """
    tol = Tolerances.from_settings(settings or get_settings())
    simplex = _BoundedSimplex(lp, tol)
    m, n = simplex.m, simplex.n
    scale = 1.0 + (np.abs(lp.rhs).max() if m else 0.0)

    phase_one_cost = np.concatenate([np.zeros(n), np.ones(m)])
    simplex.iterate(phase_one_cost, phase=1)
    simplex.refactor()
    infeasibility = float(simplex.x[n:].sum())
    if infeasibility > tol.feasibility * scale:
        return _infeasible(lp, f"phase I residual {infeasibility:.3g}", raise_on_infeasible, simplex.iterations)

    simplex.drive_out_artificials()
    phase_two_cost = np.concatenate([simplex.cost, np.zeros(m)])
    simplex.iterate(phase_two_cost, phase=2)
    simplex.refactor()

    values, problem = _verified_point(lp, simplex.x[:n], tol)
    if problem:
        return _infeasible(lp, problem, raise_on_infeasible, simplex.iterations)
    y = simplex.duals(phase_two_cost)
    reduced = simplex.cost - lp.equalities.T @ y
    if lp.sense == "max":
        y, reduced = -y, -reduced
    return LpSolution(
        values=values,
        objective_value=lp.value(values),
        iterations=simplex.iterations,
        duals=y,
        reduced_costs=reduced,
    )


def _verified_point(lp, x, tol):
    """
    Check the returned point against boxes and equalities independently.

    Returns:
        tuple: (point clipped to its boxes, None) or (None, reason)
    """
    slack = tol.feasibility * (1.0 + np.maximum(np.abs(lp.lower), np.abs(lp.upper)))
    if np.any(x < lp.lower - slack) or np.any(x > lp.upper + slack):
        return None, "point outside its box"
    x = np.clip(x, lp.lower, lp.upper)
    residual = np.abs(lp.residuals(x))
    if np.any(residual > tol.equality * (1.0 + np.abs(lp.rhs))):
        return None, f"equality residual {residual.max():.3g} above tolerance"
    return x, None


def solve_highs(lp, settings=None, raise_on_infeasible=True):
    """Same contract as solve(), delegated to scipy's HiGHS interface."""
    from scipy.optimize import linprog

    tol = Tolerances.from_settings(settings or get_settings())
    sign = 1.0 if lp.sense == "min" else -1.0
    result = linprog(
        sign * lp.objective,
        A_eq=lp.equalities if lp.equalities.size else None,
        b_eq=lp.rhs if lp.rhs.size else None,
        bounds=np.column_stack([lp.lower, lp.upper]),
        method="highs",
    )
    if result.status == 2:
        return _infeasible(lp, result.message, raise_on_infeasible)
    if result.status != 0:
        throw(f"HiGHS failed: {result.message}", Numerics)

    values, problem = _verified_point(lp, result.x, tol)
    if problem:
        return _infeasible(lp, problem, raise_on_infeasible)
    y = sign * np.asarray(result.eqlin.marginals) if lp.rhs.size else np.zeros(0)
    reduced = lp.objective - lp.equalities.T @ y
    return LpSolution(
        values=values,
        objective_value=lp.value(values),
        iterations=int(getattr(result, "nit", 0)),
        duals=y,
        reduced_costs=reduced,
    )


def get_solver(settings=None):
    """LP backend named by settings.lp_backend, resolved through hooks."""
    settings = settings or get_settings()
    return hooks.get_hook("lp_backends", settings.lp_backend)


def solve_weighted_fraction_fixed(
    other_weights,
    outcome,
    lower,
    upper,
    product_rhs,
    normalizer,
    sense="min",
    offset=0.0,
    block_total=None,
    other_offsets=None,
    settings=None,
    raise_on_infeasible=True,
):
    """
    LP over one weight block with every other block held fixed.

    The objective (1/c) sum_i Y_i g_i (w_i - offset), with g_i the product of
    the fixed blocks' factors, and the product constraint
    sum_i g_i (w_i - offset) = product_rhs are both linear in w.

    Args:
        other_weights: Fixed blocks, one array per block
        outcome: Y on the retained rows
        lower, upper: Box of the free block
        product_rhs: Right-hand side of the product constraint
        normalizer: c in the objective
        sense: "min" or "max"
        offset: 1 for the mediator blocks entering as (w - 1), else 0
        block_total: Right-hand side of the free block's own normalization, if any
        other_offsets: Offsets of the fixed blocks (default 0)
        raise_on_infeasible: Passed to the backend

    Returns:
        LpSolution
    """
    outcome = np.asarray(outcome, dtype=float)
    other_offsets = other_offsets or [0.0] * len(other_weights)
    factor = np.ones_like(outcome)
    for weights, off in zip(other_weights, other_offsets):
        factor = factor * (np.asarray(weights, dtype=float) - off)

    coefficient = outcome * factor / normalizer
    equalities = [(factor, product_rhs + offset * factor.sum())]
    if block_total is not None:
        equalities.append((np.ones_like(outcome), block_total))

    lp = LinearProgram.from_rows(
        objective=coefficient,
        boxes=np.column_stack([lower, upper]),
        equalities=equalities,
        sense=sense,
        constant=-offset * coefficient.sum(),
    )
    return get_solver(settings)(lp, settings, raise_on_infeasible)
