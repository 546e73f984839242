# Report
# CSV emission and merging, normalised comparison tables and plot-ready data.
# Every CSV carries a schema_version column; readers refuse other versions.

import csv
import logging
import os

from dataclasses import dataclass, fields
from decimal import Decimal

import numpy as np

from jinja2 import Environment, FileSystemLoader

from sttsim.errors import ReportError, SchemaError
from sttsim.metrics import CounterSet, EnergyReport, compare, round_nj
from sttsim.tuning import PolicyResult

logger = logging.getLogger("sttsim.report")

SCHEMA_VERSION = 1

TEMPLATES_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), '..', 'assets', 'templates')

REPORT_HEADER = "cache-side energy only; sampling phase included"

COUNTER_COLUMNS = [f.name for f in fields(CounterSet)]
ENERGY_COLUMNS = ["dynamic_nj", "leakage_nj", "migration_nj", "energy_nj", "latency_cycles"]

RESULT_COLUMNS = (
    ["schema_version", "workload", "policy", "retention", "distance", "mode", "events", "migrations"]
    + COUNTER_COLUMNS
    + ENERGY_COLUMNS
    + ["registers", "dividers", "comparators"]
)

COMPARISON_COLUMNS = [
    "schema_version", "workload", "policy", "baseline", "energy_nj", "latency_cycles",
    "energy_ratio", "latency_ratio", "energy_reduction_pct", "latency_reduction_pct",
]

SWEEP_COLUMNS = (
    ["schema_version", "workload", "retention", "distance", "events"]
    + COUNTER_COLUMNS
    + ENERGY_COLUMNS
    + ["prefetchable_expired_fraction", "is_argmin"]
)

# columns cmd_report needs from its inputs
REPORT_REQUIRED_COLUMNS = ["schema_version", "workload", "policy", "energy_nj", "latency_cycles"]


def _template_environment() -> Environment:
    return Environment(loader=FileSystemLoader(TEMPLATES_DIR), keep_trailing_newline=True, trim_blocks=True, lstrip_blocks=True)


def _ratio(value : float) -> str:
    return f"{value:.6f}"


def _pct(value : float) -> str:
    return f"{value:.2f}"


def _energy_columns(report : EnergyReport) -> dict:
    return {key: str(value) for key, value in report.summary().items()}


def result_row(workload : str, result : PolicyResult) -> dict:
    row = {
        "schema_version": SCHEMA_VERSION,
        "workload": workload,
        "policy": result.policy,
        "retention": result.decision.retention,
        "distance": result.distance,
        "mode": result.decision.mode.value,
        "events": result.events,
        "migrations": result.decision.migrations,
    }
    row.update(result.counters.as_dict())
    row.update(_energy_columns(result.report))
    row.update({
        "registers": result.overhead.registers,
        "dividers": result.overhead.dividers,
        "comparators": result.overhead.comparators,
    })
    return row


def comparison_rows(workload : str, results : list, baseline : str) -> list:
    """The baseline itself first as a 1.0 row, then one normalised row per other policy."""
    reports = [(r.policy, r.report) for r in results]
    by_policy = dict(reports)
    if baseline not in by_policy:
        raise ReportError(f"baseline '{baseline}' was not run")

    base = by_policy[baseline]
    rows = [{
        "schema_version": SCHEMA_VERSION,
        "workload": workload,
        "policy": baseline,
        "baseline": baseline,
        "energy_nj": str(round_nj(base.total_nj)),
        "latency_cycles": base.total_latency_cycles,
        "energy_ratio": _ratio(1.0),
        "latency_ratio": _ratio(1.0),
        "energy_reduction_pct": _pct(0.0),
        "latency_reduction_pct": _pct(0.0),
    }]
    if len(reports) < 2:
        return rows

    for row in compare(reports, baseline):
        rows.append({
            "schema_version": SCHEMA_VERSION,
            "workload": workload,
            "policy": row.label,
            "baseline": baseline,
            "energy_nj": str(round_nj(row.energy_nj)),
            "latency_cycles": row.latency_cycles,
            "energy_ratio": _ratio(row.energy_ratio),
            "latency_ratio": _ratio(row.latency_ratio),
            "energy_reduction_pct": _pct(row.energy_reduction_pct),
            "latency_reduction_pct": _pct(row.latency_reduction_pct),
        })
    return rows


def render_comparison_table(workload : str, rows : list, results : list) -> str:
    overhead = {r.policy: r.overhead for r in results}
    template = _template_environment().get_template("comparison_table.txt.j2")
    return template.render(header=REPORT_HEADER, workload=workload, rows=rows, overhead=overhead)


def sweep_rows(workload : str, points : list) -> list:
    """
    points is [(retention, distance, PolicyResult)] already in grid order.
    The first row with the minimum total energy is flagged as the argmin.
    """
    rows = []
    energies = []
    for retention, distance, result in points:
        row = {
            "schema_version": SCHEMA_VERSION,
            "workload": workload,
            "retention": retention,
            "distance": distance,
            "events": result.events,
        }
        row.update(result.counters.as_dict())
        row.update(_energy_columns(result.report))
        expired = result.counters.expired_blocks
        fraction = result.counters.prefetchable_expired_reloads / expired if expired else 0.0
        row["prefetchable_expired_fraction"] = _ratio(fraction)
        row["is_argmin"] = 0
        rows.append(row)
        energies.append(result.report.total_units)

    if rows:
        rows[energies.index(min(energies))]["is_argmin"] = 1
    return rows


def write_csv(path, columns : list, rows : list):
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'w', newline='') as csv_file:
        writer = csv.DictWriter(csv_file, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({column: row.get(column, "") for column in columns})
    logger.info(f"Wrote {len(rows)} rows to {path}")


def write_text(path, text : str):
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'w', newline='') as text_file:
        text_file.write(text)
    logger.info(f"Wrote {path}")


def read_csv(path, required : list = REPORT_REQUIRED_COLUMNS) -> list:
    try:
        with open(path, 'r', newline='') as csv_file:
            reader = csv.DictReader(csv_file)
            header = reader.fieldnames or []
            for column in required:
                if column not in header:
                    raise SchemaError(column, f"missing from {path}")
            rows = list(reader)
    except OSError as e:
        raise ReportError(f"could not read {path}: {e}")

    for row in rows:
        if row["schema_version"] != str(SCHEMA_VERSION):
            raise SchemaError("schema_version", f"{path} has version {row['schema_version']}, expected {SCHEMA_VERSION}")
    return rows


def geometric_mean(values) -> float:
    values = np.asarray(list(values), dtype=float)
    if values.size == 0:
        raise ReportError("geometric mean of no values")
    if np.any(values <= 0):
        raise ReportError("geometric mean needs strictly positive values")
    return float(np.exp(np.mean(np.log(values))))


@dataclass(frozen=True)
class NormalizedTables:
    baseline : str
    workloads : tuple
    policies : tuple
    energy : dict
    latency : dict
    energy_geomean : dict
    latency_geomean : dict


def merge_results(paths : list, baseline : str = None) -> NormalizedTables:
    """Merges result CSVs into per-workload tables normalised to the baseline policy."""
    cells = {}
    workloads = []
    policies = []
    for path in paths:
        for row in read_csv(path):
            key = (row["workload"], row["policy"])
            if key in cells:
                raise ReportError(f"duplicate result for workload '{key[0]}' policy '{key[1]}' in {path}")
            cells[key] = (Decimal(row["energy_nj"]), Decimal(row["latency_cycles"]))
            if row["workload"] not in workloads:
                workloads.append(row["workload"])
            if row["policy"] not in policies:
                policies.append(row["policy"])

    if not cells:
        raise ReportError("no result rows to merge")

    baseline = baseline or policies[0]
    if baseline not in policies:
        raise SchemaError(baseline, "baseline policy column is missing from the inputs")

    energy = {}
    latency = {}
    for workload in workloads:
        if (workload, baseline) not in cells:
            raise SchemaError(baseline, f"baseline policy column is missing for workload '{workload}'")
        base_energy, base_latency = cells[(workload, baseline)]
        if base_energy == 0 or base_latency == 0:
            raise ReportError(f"baseline '{baseline}' has a zero total for workload '{workload}'")
        for policy in policies:
            if (workload, policy) not in cells:
                raise SchemaError(policy, f"policy column is missing for workload '{workload}'")
            policy_energy, policy_latency = cells[(workload, policy)]
            energy[(workload, policy)] = float(policy_energy / base_energy)
            latency[(workload, policy)] = float(policy_latency / base_latency)

    return NormalizedTables(
        baseline=baseline,
        workloads=tuple(workloads),
        policies=tuple(policies),
        energy=energy,
        latency=latency,
        energy_geomean={p: geometric_mean(energy[(w, p)] for w in workloads) for p in policies},
        latency_geomean={p: geometric_mean(latency[(w, p)] for w in workloads) for p in policies},
    )


def _table_rows(tables : NormalizedTables, values : dict, geomean : dict) -> list:
    rows = []
    for workload in tables.workloads:
        row = {"schema_version": SCHEMA_VERSION, "workload": workload}
        row.update({policy: _ratio(values[(workload, policy)]) for policy in tables.policies})
        rows.append(row)
    row = {"schema_version": SCHEMA_VERSION, "workload": "geomean"}
    row.update({policy: _ratio(geomean[policy]) for policy in tables.policies})
    rows.append(row)
    return rows


def write_normalized(tables : NormalizedTables, output_dir) -> list:
    columns = ["schema_version", "workload"] + list(tables.policies)
    energy_rows = _table_rows(tables, tables.energy, tables.energy_geomean)
    latency_rows = _table_rows(tables, tables.latency, tables.latency_geomean)

    energy_path = os.path.join(output_dir, "energy_normalized.csv")
    latency_path = os.path.join(output_dir, "latency_normalized.csv")
    figure_path = os.path.join(output_dir, "figure_table.txt")

    write_csv(energy_path, columns, energy_rows)
    write_csv(latency_path, columns, latency_rows)

    template = _template_environment().get_template("figure_table.txt.j2")
    write_text(figure_path, template.render(
        header=REPORT_HEADER,
        baseline=tables.baseline,
        policies=tables.policies,
        sections=[("Normalized energy", energy_rows), ("Normalized latency", latency_rows)],
    ))
    return [energy_path, latency_path, figure_path]
