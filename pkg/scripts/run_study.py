"""
Full study runner.

Builds both capacity-case fixtures and one synthetic year, runs the winter
day, summer day and full-year studies for each case, and writes the
per-level summaries of the two cases side by side.

Usage:
    python scripts/run_study.py --out runs --workers 8
    python scripts/run_study.py --out runs --days-only   # skip the year runs
"""

import argparse
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent))

from dlmp import init_app
from dlmp.config import CASES
from dlmp.services import stats
from dlmp.services.netmodel import save_network
from dlmp.services.opf import OpfSettings
from dlmp.services.runner import RunnerSettings, run, study_cases, write_results
from dlmp.services.scenario import build_fixture, save_profiles, synthesize_year


def run_case(case: str, out: Path, profile_file: Path, profiles, workers: int, days_only: bool):
    """Run one capacity case's studies; returns {label: summary rows}."""
    config = init_app(case)
    network = build_fixture(case, config)
    network_file = save_network(network, out / f'fixture-{case}.json')
    opf_settings = OpfSettings.from_config(config)
    runner_settings = RunnerSettings.from_config(config, workers=workers)

    summaries = {}
    for scenario in study_cases(case, network_file, profile_file, profiles):
        if days_only and scenario.full_year:
            continue
        started = time.perf_counter()
        results = run(scenario, opf_settings, runner_settings)
        run_dir = write_results(results, out / scenario.label, network)
        rows = stats.level_summary(results, network)
        stats.write_summary(rows, run_dir / 'summary.csv', stats.grid_import_summary(results))
        summaries[scenario.label] = rows
        print(f'  {scenario.label}: {results.n_steps} timesteps, {results.failures} failed, '
              f'{time.perf_counter() - started:.1f} s')
    return summaries


def print_side_by_side(summaries: dict):
    """Print mean / spatial std / zero % per level for every study."""
    for label, rows in summaries.items():
        print(f'\n{label}')
        print(f"  {'kV':>4} {'mean':>8} {'sp.std':>8} {'min':>8} {'max':>8} {'zero%':>6}")
        for row in rows:
            print(f'  {row.voltage_level:>4} {row.mean_lmp:8.2f} {row.spatial_std:8.3f} '
                  f'{row.min_lmp:8.2f} {row.max_lmp:8.2f} {row.zero_pct:6.1f}')


def main():
    parser = argparse.ArgumentParser(description='Run the current and future capacity studies')
    parser.add_argument('--out', default='runs', help='Output directory')
    parser.add_argument('--seed', type=int, default=1, help='Synthetic profile seed')
    parser.add_argument('--workers', type=int, default=1, help='Worker processes')
    parser.add_argument('--days-only', action='store_true', help='Skip the full-year runs')
    args = parser.parse_args()

    out = Path(args.out)
    profiles = synthesize_year(args.seed)
    profile_file = save_profiles(profiles, out / 'profiles.csv')

    summaries = {}
    for case in CASES:
        print(f'\n{case} capacity')
        summaries.update(run_case(case, out, profile_file, profiles, args.workers, args.days_only))

    print_side_by_side(summaries)


if __name__ == '__main__':
    main()
