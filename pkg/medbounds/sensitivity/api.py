"""
medbounds API

Entry points behind the command line: full runs, predictor-importance
reports, data validation and synthetic data generation. Each returns a
plain dict.
"""

import json
import os
from datetime import datetime

from medbounds import __version__, logger

log = logger("api")

DECISIONS = {
    "ci_construction": "centered subsampling roots scaled by 1/sqrt(1/m - 1/n), rate sqrt(n), lower and upper bounds separately",
    "failed_replications": "dropped and counted; error above max_failed_share",
    "sweep_order": "A1 block, then A2 block, then A3 block",
    "convergence": "relative objective change per sweep below sweep_tolerance",
    "missing_values": "only empty cells count as missing",
}


def get_version_info():
    return {"version": __version__, "generated_at": datetime.now().isoformat(timespec="seconds")}


def _load(config):
    from medbounds.sensitivity.dataset import load_sample

    return load_sample(config.data, config.get_roles(), config.get_load_options())


def run(config, n_jobs=1, with_ci=True):
    """
    Full analysis: point estimates, bounds for every cell, optional CIs.

    Args:
        config: RunConfig
        n_jobs: Worker count for bound solves and replications
        with_ci: Compute subsampling intervals when the config has a plan

    Returns:
        dict: success flag, message, report and written paths
    """
    from medbounds.sensitivity.bounds import CORRECTIONS
    from medbounds.sensitivity.propensity import estimate_propensities, ipw_point_estimates
    from medbounds.sensitivity.report import write_outputs
    from medbounds.sensitivity.tasks import run_grid

    settings = config.get_settings()
    sample = _load(config)
    scores = estimate_propensities(sample, config.link, settings)
    point = ipw_point_estimates(sample, scores, settings)

    cells = run_grid(config, sample, scores, with_ci=with_ci, n_jobs=n_jobs)
    failed = sum(1 for cell in cells if cell["status"] == "Failed")
    plan = config.get_plan() if with_ci else None

    report = {
        "medbounds": get_version_info(),
        "config": {
            "data": config.data,
            "roles": config.get_roles().as_dict(),
            "link": config.link,
            "seed": config.seed,
            "groups": config.groups,
            "grid": [cell.as_dict() for cell in config.cells],
        },
        "settings": settings.as_dict(),
        "subsampling": plan.as_dict() if plan else None,
        "sample": sample.summary(),
        "propensity": scores.diagnostics(),
        "point_estimates": point.as_dict(),
        "corrections": list(CORRECTIONS),
        "decisions": dict(DECISIONS, clip_floor=settings.clip_floor),
        "cells": cells,
        "status": "Success" if not failed else ("Failed" if failed == len(cells) else "Partial"),
    }

    os.makedirs(config.output_dir, exist_ok=True)
    paths = write_outputs(report, config)
    return {
        "success": failed == 0,
        "message": f"Ran {len(cells)} cell(s), {failed} failed",
        "report": report,
        "paths": paths,
    }


def rank_report(config, top=3):
    """
    Most important X and M predictors of each propensity model.

    Importance is the deviance increase when the predictor (or group) is
    dropped, compared against the 95% chi-square quantile with the group's
    degrees of freedom.

    Returns:
        dict: success flag and rows
    """
    from scipy.stats import chi2

    from medbounds.sensitivity.calibration import rank_model_predictors
    from medbounds.sensitivity.propensity import PROPENSITY_MODELS, estimate_propensities

    settings = config.get_settings()
    sample = _load(config)
    scores = estimate_propensities(sample, config.link, settings)

    rows = []
    for assumption, (conditioning, _) in PROPENSITY_MODELS.items():
        for source in ("X", "M"):
            if source not in conditioning:
                continue
            ranking = rank_model_predictors(sample, scores, assumption, source, config.groups, settings)
            for rank, (label, names, drop) in enumerate(ranking[:top], start=1):
                reference = float(chi2.ppf(0.95, len(names)))
                rows.append({
                    "model": assumption,
                    "source": source,
                    "rank": rank,
                    "predictor": label,
                    "columns": list(names),
                    "deviance_drop": drop,
                    "df": len(names),
                    "chi2_95": reference,
                    "weak": drop < reference,
                })
    return {"success": True, "message": f"Ranked predictors of {len(PROPENSITY_MODELS)} models", "rows": rows}


def format_rank_table(rows):
    lines = [f"{'model':<6}{'source':<8}{'rank':<6}{'predictor':<24}{'drop':>12}{'df':>5}{'chi2_95':>10}  weak"]
    for row in rows:
        lines.append(
            f"{row['model']:<6}{row['source']:<8}{row['rank']:<6}{row['predictor']:<24}"
            f"{row['deviance_drop']:>12.3f}{row['df']:>5}{row['chi2_95']:>10.3f}  {'yes' if row['weak'] else ''}"
        )
    return "\n".join(lines)


def validate_data(config):
    """
    Load the data and fit the propensity models without computing bounds.

    Returns:
        dict: success flag, sample summary, model diagnostics and IPW weight checks
    """
    from medbounds.sensitivity.propensity import estimate_propensities, ipw_point_estimates

    settings = config.get_settings()
    sample = _load(config)
    scores = estimate_propensities(sample, config.link, settings)
    point = ipw_point_estimates(sample, scores, settings)
    over_cap = {t: w for t, w in point.max_weight.items() if w > settings.weight_cap_warning}
    return {
        "success": True,
        "message": f"{sample.n} rows validated",
        "sample": sample.summary(),
        "propensity": scores.diagnostics(),
        "max_weight": point.max_weight,
        "weight_cap_exceeded": over_cap,
    }


def synth(dgp_values, output_path, truth_path=None):
    """
    Write a synthetic data file and its true mean potential outcomes.

    Args:
        dgp_values: SyntheticDgp fields
        output_path: Delimited data file to write
        truth_path: JSON file for the truths (default: alongside the data)

    Returns:
        dict: success flag, paths and truths
    """
    from medbounds.sensitivity.dataset import write_sample
    from medbounds.sensitivity.oracle import SyntheticDgp, generate

    dgp = SyntheticDgp.from_dict(dgp_values or {})
    data = generate(dgp)
    write_sample(data.sample, output_path)

    truth_path = truth_path or os.path.splitext(output_path)[0] + ".truth.json"
    with open(truth_path, "w", encoding="utf-8") as f:
        json.dump({"dgp": dgp.as_dict(), "roles": dgp.roles.as_dict(), **data.truth_record()}, f, indent=2)
        f.write("\n")

    return {
        "success": True,
        "message": f"Wrote {dgp.n} rows to {output_path}",
        "paths": {"data": output_path, "truth": truth_path},
        "truths": data.truth_record(),
    }
