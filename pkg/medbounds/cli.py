"""
Command line interface for medbounds.

    medbounds run CONFIG [--seed N] [--threads N] [--no-ci] [--verbose]
    medbounds rank CONFIG [--top K]
    medbounds validate CONFIG
    medbounds synth CONFIG [--out PATH]

Exit codes: 0 success, 2 config error, 3 data error, 4 numerical failure.
"""

import argparse
import json
import logging
import os
import sys

from medbounds import __version__, logger
from medbounds.exceptions import MedboundsError

log = logger("cli")


def configure_logging(verbose=False):
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def build_parser():
    parser = argparse.ArgumentParser(prog="medbounds", description="Bounds on natural direct and indirect effects")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="cmd", required=True)

    run_p = sub.add_parser("run", help="bounds for every grid cell, with subsampling CIs")
    run_p.add_argument("config")
    run_p.add_argument("--seed", type=int)
    run_p.add_argument("--threads", type=int)
    run_p.add_argument("--no-ci", action="store_true")

    rank_p = sub.add_parser("rank", help="predictor importance of the propensity models")
    rank_p.add_argument("config")
    rank_p.add_argument("--top", type=int, default=3)

    validate_p = sub.add_parser("validate", help="load data and fit propensity models only")
    validate_p.add_argument("config")

    synth_p = sub.add_parser("synth", help="write synthetic data from the config's dgp block")
    synth_p.add_argument("config")
    synth_p.add_argument("--out")

    for p in (run_p, rank_p, validate_p, synth_p):
        p.add_argument("--verbose", action="store_true")
    return parser


def _worker_count(threads):
    if threads is None or threads > 0:
        return threads or 1
    return os.cpu_count() or 1


def write_error(error, directory):
    path = os.path.join(directory or ".", "error.json")
    try:
        os.makedirs(directory or ".", exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(error.as_record(), f, indent=2)
            f.write("\n")
    except OSError as e:
        log.error(f"CLI: could not write {path}: {e}")
        return None
    return path


def _run(args, config):
    from medbounds.sensitivity import api

    settings = config.get_settings()
    threads = args.threads if args.threads is not None else settings.threads
    result = api.run(config, n_jobs=_worker_count(threads), with_ci=not args.no_ci)
    print(result["message"])
    for kind, path in result["paths"].items():
        print(f"  {kind}: {path}")
    if result["success"]:
        return 0

    # Config errors outrank data errors, which outrank numerical failures
    errors = [cell["error"] for cell in result["report"]["cells"] if cell["error"]]
    record = dict(min(errors, key=lambda e: e["exit_code"]))
    record["failed_cells"] = [
        {"row": cell["row"], "column": cell["column"], **cell["error"]}
        for cell in result["report"]["cells"]
        if cell["error"]
    ]
    path = os.path.join(config.output_dir, "error.json")
    with open(path, "w", encoding="utf-8") as f:
        json.dump(record, f, indent=2)
        f.write("\n")
    print(f"error record: {path}", file=sys.stderr)
    return record["exit_code"]


def _rank(args, config):
    from medbounds.sensitivity import api

    result = api.rank_report(config, top=args.top)
    print(api.format_rank_table(result["rows"]))
    return 0


def _validate(args, config):
    from medbounds.sensitivity import api

    result = api.validate_data(config)
    print(json.dumps({k: v for k, v in result.items() if k != "success"}, indent=2, default=str))
    return 0


def _synth(args, config):
    from medbounds.exceptions import ConfigError, throw
    from medbounds.sensitivity import api

    output = args.out or config.data
    if not output:
        throw("synth needs --out or a data path in the config", ConfigError)
    result = api.synth(config.dgp, output)
    print(result["message"])
    return 0


COMMANDS = {"run": _run, "rank": _rank, "validate": _validate, "synth": _synth}


def main(argv=None):
    """Parse arguments, dispatch, and map errors to exit codes."""
    from medbounds.sensitivity.doctype.run_config.run_config import load_run_config

    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)

    output_dir = None
    try:
        overrides = {}
        if getattr(args, "seed", None) is not None:
            overrides["seed"] = args.seed
        config = load_run_config(args.config, overrides)
        output_dir = config.output_dir
        return COMMANDS[args.cmd](args, config)
    except MedboundsError as e:
        log.error(f"CLI: {type(e).__name__}: {e}")
        path = write_error(e, output_dir)
        if path:
            print(f"error record: {path}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
