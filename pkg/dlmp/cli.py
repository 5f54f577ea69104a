"""
Command-line interface.

Usage:
    python run.py fixture --case current -o net.json
    python run.py profiles --seed 1 -o profiles.csv
    python run.py run --network net.json --profiles profiles.csv --case current --workers 8 --out runs
    python run.py stats runs/current --out runs/current
    python run.py plot runs/current --kind daily --buses 1,46 --day 0 --out runs/current

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

import argparse
import sys
import time
from pathlib import Path
from typing import List, Optional

from dlmp import init_app
from dlmp.config import CASES, get_output_path
from dlmp.exceptions import DlmpError
from dlmp.services import charts, stats
from dlmp.services.netmodel import load_network, save_network
from dlmp.services.opf import OpfSettings
from dlmp.services.runner import (
    RunnerSettings, failure_fraction, read_results, run, write_results,
)
from dlmp.services.scenario import (
    STEPS_PER_DAY, Scenario, build_fixture, installed_capacity, save_profiles, synthesize_year,
)

PLOT_KINDS = ('daily', 'yearly', 'level-bars')


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f'not an integer: {text!r}') from None
    if value < 1:
        raise argparse.ArgumentTypeError('must be at least 1')
    return value


def _bus_list(text: str) -> List[int]:
    try:
        return [int(part) for part in text.split(',') if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f'bus ids must be integers: {text!r}') from None


def cmd_fixture(args, config: dict) -> int:
    """Write the fixture network for a capacity case."""
    network = build_fixture(args.case, config)
    path = save_network(network, args.out)
    table = installed_capacity(network)
    print(f'{args.case} fixture: {network.n_bus} buses, {network.n_branch} branches, '
          f'{table.total():.1f} MW installed -> {path}')
    return 0


def cmd_profiles(args, config: dict) -> int:
    """Write a synthetic year of half-hourly profiles."""
    start = config.get('profiles', {}).get('start', '2015-01-01T00:00')
    profiles = synthesize_year(args.seed, start=start)
    path = save_profiles(profiles, args.out)
    print(f'{len(profiles)} half-hours from seed {args.seed} -> {path}')
    return 0


def cmd_run(args, config: dict) -> int:
    """Run a scenario and write its run directory."""
    time_range = None
    if args.day is not None:
        time_range = (args.day * STEPS_PER_DAY, (args.day + 1) * STEPS_PER_DAY)
    elif args.steps is not None:
        time_range = (0, args.steps)
    label = args.label or args.case
    scenario = Scenario(args.network, args.profiles, args.case, time_range, label,
                        full_year=args.full_year)

    started = time.perf_counter()
    results = run(scenario, OpfSettings.from_config(config),
                  RunnerSettings.from_config(config, workers=args.workers))
    run_dir = write_results(results, get_output_path(config, args.out) / label,
                            load_network(scenario.network_file))
    elapsed = time.perf_counter() - started

    fraction = failure_fraction(results)
    print(f'{label}: {results.n_steps} timesteps, {results.failures} failed, '
          f'{elapsed:.1f} s -> {run_dir}')
    limit = float(config.get('runner', {}).get('failure_warn_fraction', 0.001))
    if fraction > limit:
        print(f'error: {100 * fraction:.2f}% of timesteps failed', file=sys.stderr)
        return 1
    return 0


def cmd_stats(args, config: dict) -> int:
    """Write level summary, per-bus volatility and curtailment tables for a run."""
    results, network = read_results(args.run_dir)
    out = Path(args.out) if args.out else Path(args.run_dir)
    zero_tol = float(config.get('stats', {}).get('zero_tol', stats.ZERO_TOL))
    rows = stats.level_summary(results, network, zero_tol)
    grid = stats.grid_import_summary(results)
    summary = stats.write_summary(rows, out / 'summary.csv', grid)
    stats.temporal_table(results, network).to_csv(out / 'temporal.csv', index=False, lineterminator='\n')
    stats.curtailment_summary(results, network).to_csv(out / 'curtailment.csv', index=False,
                                                       lineterminator='\n')

    print(f"{'level':>6} {'mean':>8} {'sp.std':>8} {'min':>8} {'max':>8} {'zero%':>6}")
    print(f"{'grid':>6} {grid.mean:8.2f} {'':>8} {grid.min:8.2f} {grid.max:8.2f}")
    for row in rows:
        flag = ' (single bus)' if row.single_bus else ''
        print(f'{row.voltage_level:>6} {row.mean_lmp:8.2f} {row.spatial_std:8.3f} '
              f'{row.min_lmp:8.2f} {row.max_lmp:8.2f} {row.zero_pct:6.1f}{flag}')
    print(f'-> {summary}')
    return 0


def _default_buses(network) -> List[int]:
    """Grid bus and the last bus at the lowest voltage level."""
    lowest = min(bus.voltage_level for bus in network.buses)
    deepest = [bus.id for bus in network.buses if bus.voltage_level == lowest][-1]
    return [network.buses[network.slack_index].id, deepest]


def cmd_plot(args, config: dict) -> int:
    """Render an SVG chart of a run."""
    results, network = read_results(args.run_dir)
    out = Path(args.out) if args.out else Path(args.run_dir)
    buses = args.buses or _default_buses(network)

    if args.kind == 'daily':
        svg = charts.daily_chart(stats.daily_slice(results, buses, args.day or 0), args.day or 0)
    elif args.kind == 'yearly':
        svg = charts.yearly_chart({bus: results.lmp[:, results.column(bus)] for bus in buses},
                                  results.label)
    else:
        svg = charts.level_bars_chart(stats.average_by_level(results, network))

    out.mkdir(parents=True, exist_ok=True)
    path = out / f'{args.kind}.svg'
    path.write_text(svg, encoding='utf-8')
    print(f'{args.kind} chart -> {path}')
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='dlmp', description='Distribution LMP volatility toolkit')
    parser.add_argument('-v', '--verbose', action='store_true', help='Debug logging')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('fixture', help='Write the fixture network JSON')
    p.add_argument('--case', choices=CASES, default='current', help='Capacity case')
    p.add_argument('-o', '--out', required=True, help='Output network JSON file')
    p.set_defaults(handler=cmd_fixture)

    p = sub.add_parser('profiles', help='Write a synthetic year of profiles')
    p.add_argument('--seed', type=int, default=None, help='Random seed (default from config)')
    p.add_argument('-o', '--out', required=True, help='Output profile CSV file')
    p.set_defaults(handler=cmd_profiles)

    p = sub.add_parser('run', help='Run a scenario')
    p.add_argument('--network', required=True, help='Network JSON file')
    p.add_argument('--profiles', required=True, help='Profile CSV file')
    p.add_argument('--case', choices=CASES, default='current', help='Capacity case')
    p.add_argument('--workers', type=_positive_int, default=None, help='Worker processes')
    p.add_argument('--out', default=None, help='Output directory for run directories')
    p.add_argument('--label', default=None, help='Run label (default: the case name)')
    window = p.add_mutually_exclusive_group()
    window.add_argument('--day', type=int, default=None, help='Run a single day of the profiles')
    window.add_argument('--steps', type=_positive_int, default=None, help='Run the first N half-hours')
    p.add_argument('--full-year', action='store_true', help='Require a full-year profile file')
    p.set_defaults(handler=cmd_run)

    p = sub.add_parser('stats', help='Summarize a run directory')
    p.add_argument('run_dir', help='Run directory')
    p.add_argument('--out', default=None, help='Output directory (default: the run directory)')
    p.set_defaults(handler=cmd_stats)

    p = sub.add_parser('plot', help='Chart a run directory as SVG')
    p.add_argument('run_dir', help='Run directory')
    p.add_argument('--kind', choices=PLOT_KINDS, default='daily', help='Chart type')
    p.add_argument('--buses', type=_bus_list, default=None, help='Comma-separated bus ids')
    p.add_argument('--day', type=int, default=None, help='Day index for daily charts')
    p.add_argument('--out', default=None, help='Output directory (default: the run directory)')
    p.set_defaults(handler=cmd_plot)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    override = {'logging': {'level': 'DEBUG'}} if args.verbose else None
    config = init_app(getattr(args, 'case', None), override)
    if getattr(args, 'seed', 0) is None:
        args.seed = int(config.get('profiles', {}).get('seed', 1))

    try:
        return args.handler(args, config)
    except (DlmpError, OSError, ValueError) as e:
        print(f'error: {e}', file=sys.stderr)
        return 1


if __name__ == '__main__':
    sys.exit(main())
