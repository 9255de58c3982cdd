"""
Grid Tasks

Runs the relaxation cells of a config on a joblib pool. A failing cell is
logged and recorded; the remaining cells still run.
"""

from joblib import Parallel, delayed, effective_n_jobs

from medbounds import logger
from medbounds.exceptions import MedboundsError
from medbounds.sensitivity.doctype.cell_log.cell_log import create_cell_log
from medbounds.sensitivity.inference import subsample_cis
from medbounds.sensitivity.pipeline import evaluate_cell

log = logger("tasks")


def column_labels(cells):
    """Table column per cell; fixed-budget cells are numbered in grid order."""
    labels, fixed = [], 0
    for cell in cells:
        if cell.rule.kind == "fixed":
            fixed += 1
            labels.append(f"fixed{fixed}")
        else:
            labels.append(cell.column)
    return labels


def _diagnostics(result):
    return {
        target: {"sweeps": list(b.sweeps), "converged": list(b.converged), "local_optimum_gap": list(b.local_optimum_gap)}
        for target, b in result.mpo.targets.items()
    }


def run_single_cell(cell, sample, config, scores=None, plan=None, with_ci=True, n_jobs=1, column=None):
    """
    Run one relaxation cell.

    Args:
        cell: GridCell
        sample: AnalysisSample
        config: RunConfig
        scores: Full-sample PropensityScores to reuse
        plan: SubsamplingPlan or None
        with_ci: Compute subsampling intervals when a plan is given
        n_jobs: Workers for the bound solves and replications
        column: Table column label

    Returns:
        dict: Cell record with status, budget, bounds, CI and log
    """
    settings = config.get_settings()
    cell_log = create_cell_log(cell.label)
    record = {
        "row": cell.row,
        "column": column or cell.column,
        "cell": cell.as_dict(),
        "status": "Running",
        "budget": None,
        "targets": None,
        "effects": None,
        "ci": None,
        "error": None,
        "log": None,
    }

    try:
        result = evaluate_cell(
            sample,
            cell.assumptions,
            cell.rule,
            config.link,
            settings,
            config.groups,
            scores=scores,
            n_jobs=n_jobs,
            seed=config.seed,
        )
        record["budget"] = result.budget.as_dict()
        record["targets"] = result.mpo.as_dict()
        record["effects"] = result.effects.as_dict()

        if plan is not None and with_ci:
            ci = subsample_cis(
                sample, config.link, cell.rule, plan, cell.assumptions, settings, config.groups,
                full_result=result, n_jobs=n_jobs,
            )
            record["ci"] = ci.as_dict()

        cell_log.complete(status="Success", diagnostics=_diagnostics(result))
        record["status"] = "Success"

    except MedboundsError as e:
        log.error(f"Tasks: cell {cell.label} failed: {e}")
        cell_log.complete(status="Failed", error=e)
        record.update(status="Failed", budget=None, targets=None, effects=None, ci=None, error=e.as_record())

    record["log"] = cell_log.as_dict()
    return record


def split_workers(n_jobs, cells):
    """(cell workers, workers per cell) sharing n_jobs; -1 means every core."""
    total = effective_n_jobs(n_jobs)
    outer = max(1, min(total, cells))
    return outer, max(1, total // outer)


def run_grid(config, sample, scores=None, with_ci=True, n_jobs=1):
    """
    Run every cell of the config.

    Cells run on a joblib thread pool; the n_jobs workers are split between
    cells and the solves inside each cell. Records come back in grid order
    whatever the split.

    Returns:
        list: cell records in grid order
    """
    plan = config.get_plan() if with_ci else None
    outer, inner = split_workers(n_jobs, len(config.cells))
    log.info(f"Tasks: running {len(config.cells)} cell(s) on {outer} worker(s)")

    results = Parallel(n_jobs=outer, prefer="threads")(
        delayed(run_single_cell)(cell, sample, config, scores, plan, with_ci, inner, column)
        for cell, column in zip(config.cells, column_labels(config.cells))
    )

    failed = sum(1 for r in results if r["status"] == "Failed")
    if failed:
        log.warning(f"Tasks: {failed} of {len(results)} cell(s) failed")
    return results
