# Policy comparisons
# Goal:
# 1. Run every catalog workload under PART+RPC and each comparison baseline
# 2. Save one results CSV per workload
# 3. Normalise PART+RPC against each baseline in turn
#
# Usage: python scripts/run_policy_comparisons.py [output_dir] [sampling_window]

import logging
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(os.path.abspath(__file__)), '..'))

from sttsim.errors import SimulationError
from sttsim.report import RESULT_COLUMNS, merge_results, result_row, write_csv, write_normalized
from sttsim.trace import load_workload, load_workload_catalog
from sttsim.tuning import PartThresholds, RunConfig, run_policy

logger = logging.getLogger("sttsim.scripts.comparisons")

OUTPUT_DIR = 'comparisons'
SAMPLING_WINDOW = 500
SEED = 0

CANDIDATE = "PART+RPC"
BASELINES = ["LARS", "LARS+PFD_16", "LARS+NST", "SRAM+NST"]


def run_workload(name : str, config : RunConfig, output_dir : str) -> str:
    source = load_workload(name, SEED)
    rows = []
    for policy in [CANDIDATE] + BASELINES:
        result = run_policy(source, policy, config)
        rows.append(result_row(name, result))
        logger.info(f"{name} {policy}: {result.report.summary()['energy_nj']} nJ")

    path = os.path.join(output_dir, 'runs', f'{name}.csv')
    write_csv(path, RESULT_COLUMNS, rows)
    return path


def main():
    output_dir = sys.argv[1] if len(sys.argv) > 1 else OUTPUT_DIR
    window = int(sys.argv[2]) if len(sys.argv) > 2 else SAMPLING_WINDOW
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")

    config = RunConfig(thresholds=PartThresholds(sampling_window=window))
    paths = []
    for name in load_workload_catalog():
        try:
            paths.append(run_workload(name, config, output_dir))
        except SimulationError as e:
            # a workload too short for the sampling window is skipped, not fatal
            logger.warning(f"Skipping {name}: {e}")

    if not paths:
        print("No workload completed")
        return 1

    for baseline in BASELINES:
        tables = merge_results(paths, baseline)
        write_normalized(tables, os.path.join(output_dir, baseline.replace('+', '_')))
        print(f"{CANDIDATE} vs {baseline}: energy {tables.energy_geomean[CANDIDATE]:.4f}, latency {tables.latency_geomean[CANDIDATE]:.4f} (geomean)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
