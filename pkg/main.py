import argparse
import json
import logging
import sys

from config.scenario import ScenarioConfig, apply_overrides, config_from_dict, load_scenario
from config.settings import OUTPUT_DIR, SWEEP_JOBS
from dataset.tracks import ingest_tracks
from dataset.variance import fit_bins, fit_variance_curve, save_curve
from runner.closed_loop import build_setup, run_closed_loop
from runner.metrics import compute_metrics
from runner.sweep import load_grid, pareto_sweep
from utils.checks import validate_trace
from utils.exporter import export_sweep_results, export_trace, load_trace, write_summary
from utils.logger import setup_logger


def _config(path) -> ScenarioConfig:
    return load_scenario(path) if path else ScenarioConfig().validate()


def cmd_run(args, logger) -> int:
    config = _config(args.config)
    if args.seed is not None:
        config = apply_overrides(config, {"seed": args.seed})
    trace = run_closed_loop(config, log_level=args.log_level)
    setup = build_setup(config)
    metrics = compute_metrics(trace, setup.occ, wheelbase=setup.sim.l) if len(trace) else None
    export_trace(trace, args.out, fmt=args.format)
    write_summary(trace, metrics.to_dict() if metrics else {}, args.out)
    if trace.aborted:
        logger.error(f"Run aborted: {trace.reason}")
        return 2
    return 0


def cmd_metrics(args, logger) -> int:
    df, summary = load_trace(args.trace)
    if summary.get("config"):
        setup = build_setup(config_from_dict(summary["config"]))
    else:
        setup = build_setup(ScenarioConfig())
    metrics = compute_metrics(df, setup.occ, wheelbase=setup.sim.l)
    print(json.dumps(metrics.to_dict(), indent=2))
    return 0


def cmd_sweep(args, logger) -> int:
    base = _config(args.config)
    grid = load_grid(args.grid)
    results = pareto_sweep(base, grid, jobs=args.jobs, log_level=args.log_level)
    export_sweep_results(results, args.out)
    return 1 if all(r["failed"] for r in results) else 0


def cmd_fit_variance(args, logger) -> int:
    samples = ingest_tracks(args.tracks)
    bins = fit_bins(samples)
    curve = fit_variance_curve(bins)
    save_curve(curve, args.out)
    print(json.dumps(curve.fit_info, indent=2))
    return 0


def cmd_validate(args, logger) -> int:
    df, summary = load_trace(args.trace)
    reasons = validate_trace(df, summary, logger)
    if reasons:
        for reason in reasons:
            print(reason)
        print(f"{len(reasons)} invariant violation(s)")
        return 1
    print(f"Trace OK: {len(df)} steps")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Game-theoretic overtaking controller: closed-loop runs, metrics and sweeps")
    parser.add_argument("--debug", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Simulate one scenario and write the trace plus a run summary")
    run.add_argument("--config", help="Scenario TOML (defaults when omitted)")
    run.add_argument("--out", default=OUTPUT_DIR)
    run.add_argument("--seed", type=int)
    run.add_argument("--format", choices=("csv", "json"), default="csv")
    run.set_defaults(func=cmd_run)

    metrics = sub.add_parser("metrics", help="Compute metrics of a trace file")
    metrics.add_argument("--trace", required=True)
    metrics.set_defaults(func=cmd_metrics)

    sweep = sub.add_parser("sweep", help="Pareto sweep over a weight grid")
    sweep.add_argument("--config", help="Base scenario TOML")
    sweep.add_argument("--grid", required=True, help="TOML file with a [grid] table")
    sweep.add_argument("--jobs", type=int, default=SWEEP_JOBS)
    sweep.add_argument("--out", default=OUTPUT_DIR)
    sweep.set_defaults(func=cmd_sweep)

    fit = sub.add_parser("fit-variance", help="Fit the driver-response variance curve from track CSV")
    fit.add_argument("--tracks", required=True)
    fit.add_argument("--out", default="curve.json")
    fit.set_defaults(func=cmd_fit_variance)

    validate = sub.add_parser("validate", help="Run the invariant suite on a trace")
    validate.add_argument("--trace", required=True)
    validate.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)

    # Set log level based on --debug
    args.log_level = logging.DEBUG if args.debug else logging.INFO
    logger = setup_logger(level=args.log_level)

    try:
        return args.func(args, logger)
    except (ValueError, OSError) as e:
        logger.error(f"{args.command} failed: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
