#!/usr/bin/env python3
"""
Reachback Flow: Command-Line Front End

Sub-commands:
  check     cut-condition verdict for a problem spec
  route     min-cost rates and routes (optionally against the best tree)
  capacity  link capacities of a spec, or of a single BSC/BEC/Gaussian link
  simulate  Monte-Carlo error curves for the complete coding strategy
  report    merge result CSVs into one table

Machine-readable output (JSON or CSV) goes to stdout, logs go to stderr.
Exit codes: 0 success, 1 negative verdict, 2 parse/usage error, 3 model or
internal error.
"""

import argparse
import json
import logging
import os
import sys

import numpy as np
import pandas as pd
from dotenv import load_dotenv

# Try relative imports (when used as a module)
try:
    from .admissibility import DEFAULT_STRICT_MARGIN, RateVector, reachback_admissible
    from .channel_model import GaussianLink, bec, bsc, capacity, gaussian_capacity
    from .errors import EXIT_INTERNAL, EXIT_NEGATIVE, EXIT_OK, EXIT_PARSE, ReachbackError
    from .file_manager import FileManager
    from .flow_router import (
        DEFAULT_DELTA,
        Infeasible,
        MinCutWitness,
        feasible_flow,
        flow_to_schedule,
        min_cost_route,
        tree_route,
    )
    from .problem_spec import ParseError, load_problem_spec
    from .reachback_sim import (
        DEFAULT_SCAN_BUDGET,
        CodeConfig,
        achievability_curve,
        build_codes,
        converse_curve,
    )
# Fall back to absolute imports (when run directly)
except ImportError:
    from admissibility import DEFAULT_STRICT_MARGIN, RateVector, reachback_admissible
    from channel_model import GaussianLink, bec, bsc, capacity, gaussian_capacity
    from errors import EXIT_INTERNAL, EXIT_NEGATIVE, EXIT_OK, EXIT_PARSE, ReachbackError
    from file_manager import FileManager
    from flow_router import (
        DEFAULT_DELTA,
        Infeasible,
        MinCutWitness,
        feasible_flow,
        flow_to_schedule,
        min_cost_route,
        tree_route,
    )
    from problem_spec import ParseError, load_problem_spec
    from reachback_sim import (
        DEFAULT_SCAN_BUDGET,
        CodeConfig,
        achievability_curve,
        build_codes,
        converse_curve,
    )

logger = logging.getLogger(__name__)

RESULT_COLUMNS = ["arm", "n", "trials", "errors", "pe", "ci_low", "ci_high"]


class DuplicateKey(ReachbackError):
    """Two result rows share the same (arm, n)."""

    exit_code = EXIT_PARSE


def setup_logging(log_level=logging.INFO):
    """
    Configure logging to stderr only.

    Args:
        log_level (int): Logging level

    Returns:
        logger: Configured logger object
    """
    root = logging.getLogger()
    root.setLevel(log_level)

    # Clear any existing handlers
    for handler in root.handlers[:]:
        root.removeHandler(handler)

    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setLevel(log_level)
    console_handler.setFormatter(logging.Formatter('%(levelname)s: %(message)s'))
    root.addHandler(console_handler)

    return root


def configure_log_level(verbosity):
    """
    Set log level based on verbosity.

    Args:
        verbosity (int): Verbosity level from command line

    Returns:
        int: Corresponding logging level
    """
    if verbosity == 0:
        return logging.ERROR  # Only show errors by default
    elif verbosity == 1:
        return logging.INFO
    else:
        return logging.DEBUG


def _env_int(name, default):
    value = os.getenv(name)
    try:
        return int(float(value)) if value is not None else default
    except ValueError:
        logger.warning(f"ignoring non-numeric {name}={value!r}")
        return default


def _float_list(text):
    try:
        return [float(x) for x in text.split(',') if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _int_list(text):
    try:
        values = [int(x) for x in text.split(',') if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not values or any(v < 1 for v in values):
        raise argparse.ArgumentTypeError("block lengths must be positive")
    return values


def parse_arguments(argv=None):
    """
    Parse command line arguments.

    Args:
        argv (list, optional): Arguments to parse instead of sys.argv[1:]

    Returns:
        argparse.Namespace: Parsed command line arguments
    """
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--verbose",
        "-v",
        action="count",
        default=0,
        help="Increase verbosity (no flag: errors only, -v: info, -vv: debug)"
    )
    common.add_argument(
        "--output-dir",
        default=None,
        help="Also save results (and a run.yaml) in this directory"
    )

    parser = argparse.ArgumentParser(
        description="Sensor reachback: admissibility, routing and coding simulations",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter
    )
    commands = parser.add_subparsers(dest="command", required=True)
    formatter = argparse.ArgumentDefaultsHelpFormatter

    check = commands.add_parser("check", parents=[common], formatter_class=formatter,
                                help="Evaluate every cut condition")
    check.add_argument("spec", help="Problem spec (JSON or YAML)")
    check.add_argument("--delta", type=float, default=None,
                       help=f"Required slack per cut (default: spec value or {DEFAULT_STRICT_MARGIN})")

    route = commands.add_parser("route", parents=[common], formatter_class=formatter,
                                help="Min-cost rates and routes")
    route.add_argument("spec", help="Problem spec (JSON or YAML)")
    route.add_argument("--delta", type=float, default=None,
                       help=f"Margin over each conditional entropy (default: spec value or {DEFAULT_DELTA})")
    route.add_argument("--trees", action="store_true",
                       help="Also compare against the best spanning in-tree")

    cap = commands.add_parser("capacity", parents=[common], formatter_class=formatter,
                              help="Link capacities in bits per use")
    cap.add_argument("spec", nargs="?", default=None, help="Problem spec (JSON or YAML)")
    single = cap.add_mutually_exclusive_group()
    single.add_argument("--bsc", type=float, default=None, help="Crossover probability of a BSC")
    single.add_argument("--bec", type=float, default=None, help="Erasure probability of a BEC")
    single.add_argument("--gaussian", type=_float_list, default=None, metavar="TAU,P,VAR",
                        help="Orthogonal-access Gaussian link")

    sim = commands.add_parser("simulate", parents=[common], formatter_class=formatter,
                              help="Monte-Carlo error curves")
    sim.add_argument("spec", help="Problem spec (JSON or YAML)")
    sim.add_argument("--n-list", type=_int_list, default=None, help="Block lengths, e.g. 8,12,16")
    sim.add_argument("--trials", type=int, default=None, help="Blocks per length (0: validate only)")
    sim.add_argument("--seed", type=int, default=None, help="Master seed (default: spec, then REACHBACK_SEED)")
    sim.add_argument("--workers", type=int, default=None, help="Worker processes (default: REACHBACK_WORKERS)")
    sim.add_argument("--delta", type=float, default=None, help="Margin used when rates are 'auto'")
    sim.add_argument("--converse-rates", type=_float_list, default=None,
                     help="Rates for the converse arm, e.g. 0.69,0.69")
    sim.add_argument("--channel-mode", choices=["ideal", "dmc"], default=None,
                     help="Ideal bit pipes, or repetition-coded bits over DMC links")

    report = commands.add_parser("report", parents=[common], formatter_class=formatter,
                                 help="Merge result CSVs")
    report.add_argument("results", nargs="*", help="CSV files written by simulate")
    report.add_argument("--long", action="store_true",
                        help="Print the long-format table (arm,n,metric,value) instead")

    args = parser.parse_args(argv)
    if args.command == "report" and not args.results:
        report.error("at least one results CSV is required")
    if args.command == "capacity" and args.spec is None and args.bsc is None \
            and args.bec is None and args.gaussian is None:
        cap.error("give a spec file or one of --bsc, --bec, --gaussian")
    return args


def _json_default(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"not JSON serialisable: {type(value).__name__}")


def _plain(payload):
    return json.loads(json.dumps(payload, default=_json_default))


def emit_json(payload):
    print(json.dumps(payload, indent=2, sort_keys=True, default=_json_default))


def _file_manager(args):
    return FileManager(output_dir=args.output_dir) if args.output_dir else None


def _persist_json(args, payload, filename):
    file_manager = _file_manager(args)
    if file_manager:
        file_manager.save_json(_plain(payload), filename)
        file_manager.save_metadata(args.command, _effective_options(args))


def _effective_options(args):
    return {k: v for k, v in sorted(vars(args).items())
            if isinstance(v, (str, int, float, bool, list)) or v is None}


def cmd_check(args):
    """Verdict and all cut certificates; exit 0 iff admissible."""
    spec = load_problem_spec(args.spec)
    margin = args.delta if args.delta is not None else (spec.delta or DEFAULT_STRICT_MARGIN)
    report = reachback_admissible(spec.links, spec.source, strict_margin=margin)
    payload = report.to_dict()
    emit_json(payload)
    _persist_json(args, payload, "check.json")
    return EXIT_OK if report.admissible else EXIT_NEGATIVE


def cmd_route(args):
    """Min-cost routing; with --trees, the best tree and the overpayment ratio."""
    spec = load_problem_spec(args.spec)
    delta = args.delta if args.delta is not None else (spec.delta if spec.delta is not None else DEFAULT_DELTA)
    try:
        if spec.auto_rates:
            result = min_cost_route(spec.links, spec.costs, source=spec.source, margin=delta)
        else:
            result = min_cost_route(spec.links, spec.costs, rates=spec.rates, margin=delta)
    except Infeasible as e:
        payload = {"feasible": False,
                   "certificate": e.certificate.to_dict() if e.certificate else None}
        emit_json(payload)
        _persist_json(args, payload, "route.json")
        return EXIT_NEGATIVE

    payload = {"feasible": True, "status": result.status}
    if result.status == "optimal":
        payload.update(result.to_dict())
    else:
        payload["rates"] = list(result.rates.rates)
        payload["edges"] = result.flow.to_dict()["edges"]

    if args.trees:
        trees = tree_route(spec.links, result.rates, spec.costs)
        best = trees.best
        payload["trees"] = {
            "examined": trees.examined,
            "feasible": len(trees.feasible),
            "best_tree": [list(e) for e in best.parents] if best else None,
            "tree_cost": best.cost if best else None,
            "lp_cost": result.cost,
            "ratio": best.cost / result.cost if best and result.cost > 0 else None,
        }
        logger.info(f"best tree cost {payload['trees']['tree_cost']}, LP cost {result.cost}")

    emit_json(payload)
    _persist_json(args, payload, "route.json")
    return EXIT_OK


def cmd_capacity(args):
    """Capacities of a single channel, or of every link in a spec."""
    if args.bsc is not None:
        payload = {"channel": f"bsc({args.bsc})", "capacity": capacity(bsc(args.bsc)).capacity}
    elif args.bec is not None:
        payload = {"channel": f"bec({args.bec})", "capacity": capacity(bec(args.bec)).capacity}
    elif args.gaussian is not None:
        if len(args.gaussian) != 3:
            raise ParseError("--gaussian takes exactly three values: tau,P,var")
        tau, power, noise_var = args.gaussian
        payload = {"channel": f"gaussian({tau},{power},{noise_var})",
                   "capacity": gaussian_capacity(GaussianLink(tau, power, noise_var))}
    else:
        spec = load_problem_spec(args.spec)
        c = spec.links.capacity_matrix
        payload = {"links": [{"from": i, "to": j, "capacity": float(c[i, j])}
                             for (i, j) in sorted(spec.links.links)]}
    emit_json(payload)
    _persist_json(args, payload, "capacity.json")
    return EXIT_OK


def _simulation_rates(spec, delta):
    if not spec.auto_rates:
        return spec.rates
    return min_cost_route(spec.links, spec.costs, source=spec.source, margin=delta).rates


def cmd_simulate(args):
    """Achievability arm, plus a converse arm when converse rates are given."""
    spec = load_problem_spec(args.spec)
    experiment = spec.experiment
    n_list = args.n_list or list(experiment.n_list)
    trials = args.trials if args.trials is not None else experiment.trials
    if trials < 0:
        raise ParseError("--trials must be non-negative")
    seed = args.seed if args.seed is not None else (
        experiment.seed if experiment.seed is not None else _env_int("REACHBACK_SEED", 0))
    workers = args.workers if args.workers is not None else _env_int("REACHBACK_WORKERS", 1)
    scan_budget = _env_int("REACHBACK_SCAN_BUDGET", DEFAULT_SCAN_BUDGET)
    delta = args.delta if args.delta is not None else (spec.delta if spec.delta is not None else DEFAULT_DELTA)
    channel_mode = args.channel_mode or experiment.channel_mode
    converse_rates = RateVector(tuple(args.converse_rates)) if args.converse_rates else experiment.converse_rates

    rates = _simulation_rates(spec, delta)
    logger.info(f"simulating rates {list(rates.rates)} at n={n_list} with {trials} trial(s), seed {seed}")

    if trials == 0:
        # validation only: every schedule and code must build
        flow = feasible_flow(spec.links, rates)
        if isinstance(flow, MinCutWitness):
            raise Infeasible("rates cannot be routed", flow.as_certificate())
        for n in n_list:
            schedule = flow_to_schedule(flow, n)
            build_codes(spec.source, CodeConfig(n, rates, binning_seed=seed))
            logger.info(f"n={n}: {schedule.rounds} round(s), bits {list(schedule.bits_per_block[1:])}")
        emit_json({"dry_run": True, "n": n_list, "rates": list(rates.rates)})
        return EXIT_OK

    options = dict(workers=workers, scan_budget=scan_budget, channel_mode=channel_mode,
                   repeat=experiment.repeat, progress=args.verbose >= 1)
    results = achievability_curve(spec.links, spec.source, rates, n_list, trials, seed, **options)
    if converse_rates is not None:
        results += converse_curve(spec.links, spec.source, converse_rates, n_list, trials, seed, **options)

    frame = pd.DataFrame([r.to_row() for r in results], columns=RESULT_COLUMNS)
    frame.to_csv(sys.stdout, index=False)
    file_manager = _file_manager(args)
    if file_manager:
        file_manager.save_csv(frame, "simulate.csv")
        file_manager.save_metadata("simulate", dict(_effective_options(args), seed=seed, trials=trials))
    return EXIT_OK


def merge_results(paths):
    """
    Concatenate result CSVs sorted by (arm, n).

    Raises:
        ParseError: a file is unreadable or lacks the result columns
        DuplicateKey: two rows share (arm, n)
    """
    frames = []
    for path in paths:
        try:
            frame = pd.read_csv(path)
        except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
            raise ParseError(f"cannot read {path}: {e}") from e
        if "arm" not in frame.columns:
            frame.insert(0, "arm", "achievability")
        missing = [c for c in RESULT_COLUMNS if c not in frame.columns]
        if missing:
            raise ParseError(f"{path} lacks columns {missing}")
        frames.append(frame[RESULT_COLUMNS])

    merged = pd.concat(frames, ignore_index=True)
    duplicated = merged.duplicated(subset=["arm", "n"], keep=False)
    if duplicated.any():
        keys = merged.loc[duplicated, ["arm", "n"]].drop_duplicates().values.tolist()
        raise DuplicateKey(f"duplicate (arm, n) rows: {keys}")
    return merged.sort_values(["arm", "n"], kind="stable").reset_index(drop=True)


def long_format(merged):
    """One row per (arm, n, metric)."""
    long = merged.melt(id_vars=["arm", "n"], value_vars=["trials", "errors", "pe", "ci_low", "ci_high"],
                       var_name="metric", value_name="value")
    return long.sort_values(["arm", "n", "metric"], kind="stable").reset_index(drop=True)


def cmd_report(args):
    merged = merge_results(args.results)
    long = long_format(merged)
    (long if args.long else merged).to_csv(sys.stdout, index=False)
    file_manager = _file_manager(args)
    if file_manager:
        file_manager.save_csv(merged, "merged.csv")
        file_manager.save_csv(long, "long.csv")
    return EXIT_OK


COMMANDS = {
    "check": cmd_check,
    "route": cmd_route,
    "capacity": cmd_capacity,
    "simulate": cmd_simulate,
    "report": cmd_report,
}


def run(argv=None):
    """Run one sub-command and return its exit code."""
    load_dotenv()
    args = parse_arguments(argv)
    setup_logging(log_level=configure_log_level(args.verbose))

    try:
        return COMMANDS[args.command](args)
    except Infeasible as e:
        logger.error(str(e))
        emit_json({"feasible": False, "certificate": e.certificate.to_dict() if e.certificate else None})
        return EXIT_NEGATIVE
    except ReachbackError as e:
        logger.error(f"{type(e).__name__}: {e}")
        logger.debug("details", exc_info=True)
        return e.exit_code
    except Exception as e:
        logger.error(f"Unexpected error: {e}")
        logger.debug("details", exc_info=True)
        return EXIT_INTERNAL


def main():
    """Main entry point of the application."""
    sys.exit(run())


if __name__ == "__main__":
    main()
