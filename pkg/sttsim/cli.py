# CLI
# Experiment driver: python -m sttsim {run, sweep, report, gen-trace} ...
#
# Exit codes: 0 success, 1 usage or configuration error, 2 data error.

import argparse
import logging
import os
import sys

from concurrent.futures import ProcessPoolExecutor

from sttsim import history
from sttsim.config import ExperimentSpec, build_spec, environment_values, load_config_file
from sttsim.errors import ConfigurationError, SimulationError
from sttsim.report import (
    COMPARISON_COLUMNS, RESULT_COLUMNS, SWEEP_COLUMNS, comparison_rows, merge_results,
    render_comparison_table, result_row, sweep_rows, write_csv, write_normalized, write_text,
)
from sttsim.trace import AccessKind, TraceFormat, gen_strided, load_workload, write_trace
from sttsim.tuning import Policy, run_policy

logger = logging.getLogger("sttsim.cli")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class UsageError(ConfigurationError):
    pass


class ArgumentParser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; usage errors here exit with 1

    def error(self, message):
        raise UsageError("arguments", message)


# Worker processes rebuild the trace from the experiment settings.

def _run_job(spec : ExperimentSpec, policy : str, source = None):
    source = source if source is not None else spec.load_source()
    return run_policy(source, policy, spec.run_config())


def _run_all(spec : ExperimentSpec, policies : list) -> list:
    if spec.workers > 1 and len(policies) > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            # results are collected in submission order, not completion order
            futures = [pool.submit(_run_job, spec, policy) for policy in policies]
            return [future.result() for future in futures]

    source = spec.load_source().materialise()
    return [_run_job(spec, policy, source) for policy in policies]


def cmd_run(spec : ExperimentSpec) -> int:
    workload = spec.workload_name
    results = _run_all(spec, list(spec.policies))

    rows = [result_row(workload, result) for result in results]
    write_csv(os.path.join(spec.output_dir, "results.csv"), RESULT_COLUMNS, rows)

    comparison = comparison_rows(workload, results, spec.baseline_policy)
    write_csv(os.path.join(spec.output_dir, "comparison.csv"), COMPARISON_COLUMNS, comparison)
    write_text(os.path.join(spec.output_dir, "comparison.txt"), render_comparison_table(workload, comparison, results))

    if spec.tuning_log:
        lines = []
        for result in results:
            lines.append(f"# {result.policy}")
            lines.extend(result.tuning_log)
        write_text(os.path.join(spec.output_dir, "tuning.log"), "\n".join(lines) + "\n")

    if spec.history_db:
        history.init_db(spec.history_db)
        for row in rows:
            history.save_run_result(row, spec.history_db)
            print(history.baseline_change(row, spec.history_db))

    for row in comparison:
        print(f"{row['policy']:<24} energy {row['energy_nj']:>16} nJ  ratio {row['energy_ratio']}  latency ratio {row['latency_ratio']}")
    return EXIT_OK


def sweep_points(spec : ExperimentSpec, axis : str, no_prefetch : bool = False) -> list:
    """Grid points as (retention, distance, policy name), in grid-key order."""
    if axis == "retention":
        retentions, distances = list(spec.retentions), [spec.distance]
    elif axis == "distance":
        retentions, distances = [spec.retentions[0]], list(spec.distances)
    else:
        retentions, distances = list(spec.retentions), list(spec.distances)

    if not retentions:
        raise UsageError("retentions", "sweep axis is empty")
    if not distances and not no_prefetch:
        raise UsageError("distances", "sweep axis is empty")
    if no_prefetch:
        if axis == "distance":
            raise UsageError("axis", "a distance sweep needs prefetching")
        distances = [0]

    points = []
    for retention in retentions:
        for distance in distances:
            name = f"FIXED:{retention}" if distance == 0 else f"FIXED:{retention}+PFD_{distance}"
            points.append((retention, distance, Policy.parse(name).name))
    return points


def cmd_sweep(spec : ExperimentSpec, axis : str, no_prefetch : bool = False) -> int:
    points = sweep_points(spec, axis, no_prefetch)
    results = _run_all(spec, [policy for _, _, policy in points])
    rows = sweep_rows(spec.workload_name, [(r, d, result) for (r, d, _), result in zip(points, results)])
    write_csv(os.path.join(spec.output_dir, "sweep.csv"), SWEEP_COLUMNS, rows)

    best = next(row for row in rows if row["is_argmin"])
    print(f"{len(rows)} grid points, minimum energy {best['energy_nj']} nJ at {best['retention']} distance {best['distance']}")
    return EXIT_OK


def cmd_report(inputs : list, output_dir : str, baseline : str = None) -> int:
    tables = merge_results(inputs, Policy.parse(baseline).name if baseline else None)
    for path in write_normalized(tables, output_dir):
        print(path)
    return EXIT_OK


def _parse_strided(text : str) -> dict:
    names = ("pc", "base", "stride", "count", "start_cycle", "inter_arrival")
    values = [item.strip() for item in text.split(",")]
    if len(values) != len(names):
        raise UsageError("--strided", f"expected {len(names)} comma-separated values: {','.join(names)}")
    try:
        return {name: int(value, 0) for name, value in zip(names, values)}
    except ValueError as e:
        raise UsageError("--strided", str(e))


def cmd_gen_trace(args) -> int:
    if args.strided:
        source = gen_strided(kind=AccessKind(args.kind), **_parse_strided(args.strided))
    elif args.workload:
        source = load_workload(args.workload, args.seed)
    else:
        raise UsageError("gen-trace", "either --workload or --strided is required")

    count = write_trace(source, args.output, TraceFormat(args.format))
    print(f"{count} events written to {args.output}")
    return EXIT_OK


def _add_experiment_options(parser):
    parser.add_argument("--config", help="dotenv-style KEY=VALUE experiment file")
    parser.add_argument("--trace", help="trace file")
    parser.add_argument("--format", choices=[f.value for f in TraceFormat], help="trace file format")
    parser.add_argument("--workload", help="named workload from assets/workloads.json")
    parser.add_argument("--seed", help="seed for generated workloads")
    parser.add_argument("--output-dir", help="directory for result files")
    parser.add_argument("--retentions", help="comma-separated retention labels, e.g. STT-1ms,STT-25us")
    parser.add_argument("--window", help="sampling window in events")
    parser.add_argument("--memory-latency", help="memory latency in cycles")
    parser.add_argument("--mshr-entries", help="MSHR capacity")
    parser.add_argument("--workers", help="parallel worker processes")
    parser.add_argument("--no-expired-trigger", action="store_true", help="do not trigger prefetches on expiration misses")


# CLI flag -> configuration key
FLAG_KEYS = {
    "trace": "TRACE_PATH",
    "format": "TRACE_FORMAT",
    "workload": "TRACE_WORKLOAD",
    "seed": "SIM_SEED",
    "output_dir": "OUTPUT_DIR",
    "retentions": "CACHE_RETENTIONS",
    "window": "TUNING_WINDOW",
    "memory_latency": "SIM_MEMORY_LATENCY",
    "mshr_entries": "CACHE_MSHR_ENTRIES",
    "workers": "SIM_WORKERS",
    "policies": "SIM_POLICIES",
    "baseline": "SIM_BASELINE",
    "history_db": "OUTPUT_HISTORY_DB",
    "distances": "PREFETCH_DISTANCES",
    "distance": "PREFETCH_DISTANCE",
}


def _spec_from_args(args) -> ExperimentSpec:
    overrides = {}
    for flag, key in FLAG_KEYS.items():
        value = getattr(args, flag, None)
        if value is not None:
            overrides[key] = ",".join(value) if isinstance(value, list) else value
    if getattr(args, "no_expired_trigger", False):
        overrides["PREFETCH_TRIGGER_ON_EXPIRATION_MISS"] = "false"
    if getattr(args, "tuning_log", False):
        overrides["OUTPUT_TUNING_LOG"] = "true"

    file_values = load_config_file(args.config) if args.config else None
    return build_spec(file_values, environment_values(), overrides)


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog="sttsim", description="Reduced-retention STTRAM L1 cache simulator")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true")
    verbosity.add_argument("-q", "--quiet", action="store_true")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=ArgumentParser)

    run = commands.add_parser("run", help="run policies and compare them against a baseline")
    _add_experiment_options(run)
    run.add_argument("--policy", dest="policies", action="append", help="policy to run (repeatable)")
    run.add_argument("--baseline", help="policy every other policy is normalised to")
    run.add_argument("--tuning-log", action="store_true", help="write tuning.log")
    run.add_argument("--history-db", help="record results in this SQLite database")

    sweep = commands.add_parser("sweep", help="brute-force grid over retention and distance")
    _add_experiment_options(sweep)
    sweep.add_argument("--axis", choices=["retention", "distance", "both"], default="both")
    sweep.add_argument("--distances", help="comma-separated prefetch distances")
    sweep.add_argument("--distance", help="distance used by a retention-only sweep")
    sweep.add_argument("--no-prefetch", action="store_true", help="sweep retention with prefetching disabled")

    report = commands.add_parser("report", help="merge result CSVs into normalised tables")
    report.add_argument("inputs", nargs="+", help="results.csv files")
    report.add_argument("--baseline", help="policy to normalise against (default: first seen)")
    report.add_argument("--output-dir", default="results")

    gen = commands.add_parser("gen-trace", help="write a synthetic trace")
    gen.add_argument("--workload", help="named workload from assets/workloads.json")
    gen.add_argument("--strided", help="pc,base,stride,count,start_cycle,inter_arrival")
    gen.add_argument("--kind", choices=[k.value for k in AccessKind], default=AccessKind.READ.value)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--format", choices=[f.value for f in TraceFormat], default=TraceFormat.TEXT.value)
    gen.add_argument("--output", required=True)

    return parser


def _configure_logging(args):
    level = logging.INFO
    if getattr(args, "verbose", False):
        level = logging.DEBUG
    elif getattr(args, "quiet", False):
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def main(argv = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        _configure_logging(args)

        if args.command == "run":
            return cmd_run(_spec_from_args(args))
        if args.command == "sweep":
            return cmd_sweep(_spec_from_args(args), args.axis, args.no_prefetch)
        if args.command == "report":
            return cmd_report(args.inputs, args.output_dir, args.baseline)
        return cmd_gen_trace(args)

    except ConfigurationError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except SimulationError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
