"""
Scenario execution.

Every half hour is an independent dispatch problem, so a run is an ordered
map of solve_opf over timesteps. Work is cut into contiguous chunks and
handed to a process pool; results are collected in timestep order, which
makes the output independent of the worker count.
"""

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from dlmp.exceptions import DlmpError, ResultSetError, UnknownBusError
from dlmp.services.netmodel import Network, load_network, require_valid, save_network
from dlmp.services.opf import DispatchProblem, OpfSettings, solve_opf
from dlmp.services.scenario import STEPS_PER_DAY, ProfileSet, Scenario, load_profiles, representative_day

logger = logging.getLogger(__name__)

STATUS_OK = 'ok'
STATUS_UNCONVERGED = 'unconverged'
RESULT_FILES = ('lmp.csv', 'dispatch.csv', 'curtailed.csv', 'meta.csv', 'network.json')


@dataclass(frozen=True)
class RunnerSettings:
    """Worker pool sizing and failure reporting."""
    workers: int = 1
    chunk_size: int = STEPS_PER_DAY
    failure_warn_fraction: float = 0.001

    def __post_init__(self):
        if self.workers < 1:
            raise ValueError('worker count must be at least 1')
        if self.chunk_size < 1:
            raise ValueError('chunk size must be at least 1')

    @classmethod
    def from_config(cls, config: dict, workers: Optional[int] = None) -> 'RunnerSettings':
        section = config.get('runner', {})
        return cls(
            workers=int(workers if workers is not None else section.get('workers', 1)),
            chunk_size=int(section.get('chunk_size', STEPS_PER_DAY)),
            failure_warn_fraction=float(section.get('failure_warn_fraction', 0.001)),
        )


@dataclass
class ResultSet:
    """Per-timestep prices, dispatch and solver status of one run."""
    label: str
    bus_ids: List[int]
    steps: np.ndarray
    lmp: np.ndarray
    dispatch: np.ndarray
    curtailed: np.ndarray
    mip: np.ndarray
    iterations: np.ndarray
    converged: np.ndarray
    status: List[str] = field(default_factory=list)

    def __post_init__(self):
        n = len(self.steps)
        for name in ('lmp', 'dispatch', 'curtailed'):
            if getattr(self, name).shape[0] != n:
                raise ResultSetError(f'{name} has {getattr(self, name).shape[0]} rows for {n} timesteps')
        if self.lmp.shape[1] != len(self.bus_ids):
            raise ResultSetError('lmp columns do not match bus ids')
        if not self.status:
            self.status = [STATUS_OK if ok else STATUS_UNCONVERGED for ok in self.converged]

    @property
    def n_steps(self) -> int:
        return len(self.steps)

    @property
    def ok(self) -> np.ndarray:
        """Mask of converged timesteps, the only ones statistics use."""
        return np.asarray(self.converged, dtype=bool)

    @property
    def failures(self) -> int:
        return int(self.n_steps - self.ok.sum())

    def column(self, bus_id: int) -> int:
        try:
            return self.bus_ids.index(bus_id)
        except ValueError:
            raise UnknownBusError(bus_id) from None

    def solver_meta(self) -> pd.DataFrame:
        return pd.DataFrame({
            't': self.steps,
            'mip': self.mip,
            'iterations': self.iterations,
            'converged': self.converged,
            'status': self.status,
        })


class _ProblemBuilder:
    """Turns one half hour of profiles into a DispatchProblem."""

    def __init__(self, network: Network):
        gens = network.generators
        self.network = network
        self.p_max = np.array([g.p_max_mw for g in gens], dtype=float)
        self.pv = np.array([g.profile_driven and g.fuel == 'pv' for g in gens], dtype=bool)
        self.wind = np.array([g.profile_driven and g.fuel == 'wind' for g in gens], dtype=bool)
        self.grid = np.array([g.is_grid for g in gens], dtype=bool)
        self.cost = np.array([0.0 if g.is_grid else float(g.marginal_cost_gbp_mwh) for g in gens])
        self.peak = np.array([ld.p_peak_mw for ld in network.loads], dtype=float)

    def build(self, demand_factor: float, pv_cf: float, wind_cf: float, mip: float) -> DispatchProblem:
        available = self.p_max.copy()
        available[self.pv] *= pv_cf
        available[self.wind] *= wind_cf
        cost = np.where(self.grid, mip, self.cost)
        return DispatchProblem(
            network=self.network,
            gen_available_mw=available,
            gen_cost_gbp_mwh=cost,
            load_mw=self.peak * demand_factor,
        )


def build_problem(network: Network, demand_factor: float, pv_cf: float,
                  wind_cf: float, mip: float) -> DispatchProblem:
    """Dispatch problem for one half hour of profile values."""
    return _ProblemBuilder(network).build(demand_factor, pv_cf, wind_cf, mip)


# Per-process state, set once by the pool initializer
_WORKER = {}


def _init_worker(network: Network, settings: OpfSettings):
    _WORKER['builder'] = _ProblemBuilder(network)
    _WORKER['settings'] = settings


def _solve_chunk(chunk: Sequence[Tuple[int, float, float, float, float]]) -> list:
    builder = _WORKER['builder']
    settings = _WORKER['settings']
    n_bus = builder.network.n_bus
    n_gen = len(builder.network.generators)
    records = []
    for t, demand, pv, wind, mip in chunk:
        try:
            sol = solve_opf(builder.build(demand, pv, wind, mip), settings)
        except DlmpError as e:
            logger.debug('timestep %d failed: %s', t, e)
            status = str(e).split(':')[0]
            records.append((np.full(n_bus, np.nan), np.full(n_gen, np.nan),
                            np.full(n_gen, np.nan), 0, False, status))
            continue
        status = STATUS_OK if sol.converged else STATUS_UNCONVERGED
        records.append((sol.lmp_gbp_mwh, sol.dispatch_mw, sol.curtailed_mw,
                        sol.sl_iterations, sol.converged, status))
    return records


def run_network(network: Network, profiles: ProfileSet, label: str = 'run',
                opf_settings: Optional[OpfSettings] = None,
                settings: Optional[RunnerSettings] = None,
                first_step: int = 0) -> ResultSet:
    """
    Solve every half hour of a profile set on one network.

    Args:
        network: Validated network shared read-only by all workers
        profiles: Half hours to solve, in order
        label: Scenario label carried into the result set
        first_step: Absolute index of the first half hour, used for the t column

    Returns:
        ResultSet ordered by timestep whatever the worker count
    """
    require_valid(network)
    opf_settings = opf_settings or OpfSettings()
    settings = settings or RunnerSettings()
    n = len(profiles)
    tasks = [
        (first_step + i, float(profiles.demand_factor[i]), float(profiles.pv_cf[i]),
         float(profiles.wind_cf[i]), float(profiles.mip_gbp_mwh[i]))
        for i in range(n)
    ]
    chunks = [tasks[i:i + settings.chunk_size] for i in range(0, n, settings.chunk_size)]

    started = time.perf_counter()
    logger.info('Run %s: %d timesteps on %d worker(s)', label, n, settings.workers)
    if settings.workers == 1:
        _init_worker(network, opf_settings)
        batches = [_solve_chunk(chunk) for chunk in chunks]
    else:
        with ProcessPoolExecutor(max_workers=settings.workers, initializer=_init_worker,
                                 initargs=(network, opf_settings)) as pool:
            batches = list(pool.map(_solve_chunk, chunks))
    records = [record for batch in batches for record in batch]

    results = ResultSet(
        label=label,
        bus_ids=list(network.bus_ids),
        steps=np.array([task[0] for task in tasks], dtype=int),
        lmp=np.array([r[0] for r in records]).reshape(n, network.n_bus),
        dispatch=np.array([r[1] for r in records]).reshape(n, len(network.generators)),
        curtailed=np.array([r[2] for r in records]).reshape(n, len(network.generators)),
        mip=profiles.mip_gbp_mwh.copy(),
        iterations=np.array([r[3] for r in records], dtype=int),
        converged=np.array([r[4] for r in records], dtype=bool),
        status=[r[5] for r in records],
    )

    elapsed = time.perf_counter() - started
    logger.info('Run %s finished in %.1f s: %d failed timestep(s)', label, elapsed, results.failures)
    if n and results.failures / n > settings.failure_warn_fraction:
        logger.warning('Run %s: %d of %d timesteps failed (%.2f%%)',
                       label, results.failures, n, 100.0 * results.failures / n)
    return results


def run(scenario: Scenario, opf_settings: Optional[OpfSettings] = None,
        settings: Optional[RunnerSettings] = None) -> ResultSet:
    """Load a scenario's network and profiles and solve its time range."""
    network = require_valid(load_network(scenario.network_file))
    profiles = load_profiles(scenario.profile_file, full_year=scenario.full_year)
    start, end = scenario.steps(len(profiles))
    return run_network(network, profiles.slice(start, end), scenario.label,
                       opf_settings, settings, first_step=start)


def failure_fraction(results: ResultSet) -> float:
    return results.failures / results.n_steps if results.n_steps else 0.0


def study_cases(case: str, network_file: Union[str, Path], profile_file: Union[str, Path],
                profiles: ProfileSet) -> List[Scenario]:
    """The winter day, summer day and full-year studies of one capacity case."""
    winter = representative_day(profiles, 'winter')
    summer = representative_day(profiles, 'summer')
    day = STEPS_PER_DAY
    return [
        Scenario(network_file, profile_file, case, (winter * day, (winter + 1) * day), f'{case}-winter-day'),
        Scenario(network_file, profile_file, case, (summer * day, (summer + 1) * day), f'{case}-summer-day'),
        Scenario(network_file, profile_file, case, None, f'{case}-year', full_year=True),
    ]


# Run directory persistence

def _frame(results: ResultSet, values: np.ndarray, columns: List[str]) -> pd.DataFrame:
    frame = pd.DataFrame(values, columns=columns)
    frame.insert(0, 't', results.steps)
    return frame


def write_results(results: ResultSet, run_dir: Union[str, Path], network: Network) -> Path:
    """Write lmp, dispatch, curtailed and meta CSVs plus the network into run_dir."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    gen_columns = [f'g{k}' for k in range(results.dispatch.shape[1])]
    tables = {
        'lmp.csv': _frame(results, results.lmp, [str(b) for b in results.bus_ids]),
        'dispatch.csv': _frame(results, results.dispatch, gen_columns),
        'curtailed.csv': _frame(results, results.curtailed, gen_columns),
        'meta.csv': results.solver_meta(),
    }
    for name, frame in tables.items():
        frame.to_csv(run_dir / name, index=False, lineterminator='\n')
    save_network(network, run_dir / 'network.json')
    logger.info('Wrote run %s to %s', results.label, run_dir)
    return run_dir


def read_results(run_dir: Union[str, Path]) -> Tuple[ResultSet, Network]:
    """
    Load a run directory written by write_results.

    Raises:
        ResultSetError: missing files or tables that disagree
    """
    run_dir = Path(run_dir)
    missing = [name for name in RESULT_FILES if not (run_dir / name).exists()]
    if missing:
        raise ResultSetError(f'{run_dir}: missing {", ".join(missing)}')

    def read(name: str) -> pd.DataFrame:
        return pd.read_csv(run_dir / name, float_precision='round_trip')

    lmp = read('lmp.csv')
    dispatch = read('dispatch.csv')
    curtailed = read('curtailed.csv')
    meta = pd.read_csv(run_dir / 'meta.csv', float_precision='round_trip',
                       dtype={'status': str}, keep_default_na=False)
    network = load_network(run_dir / 'network.json')

    steps = lmp['t'].to_numpy()
    for name, frame in (('dispatch', dispatch), ('curtailed', curtailed), ('meta', meta)):
        if not np.array_equal(frame['t'].to_numpy(), steps):
            raise ResultSetError(f'{run_dir}: {name}.csv timesteps differ from lmp.csv')

    bus_ids = [int(c) for c in lmp.columns[1:]]
    if bus_ids != network.bus_ids:
        raise ResultSetError(f'{run_dir}: lmp.csv buses differ from network.json')

    converged = meta['converged'].astype(str).str.lower().eq('true').to_numpy()
    results = ResultSet(
        label=run_dir.name,
        bus_ids=bus_ids,
        steps=steps,
        lmp=lmp.iloc[:, 1:].to_numpy(dtype=float),
        dispatch=dispatch.iloc[:, 1:].to_numpy(dtype=float),
        curtailed=curtailed.iloc[:, 1:].to_numpy(dtype=float),
        mip=pd.to_numeric(meta['mip']).to_numpy(dtype=float),
        iterations=meta['iterations'].to_numpy(dtype=int),
        converged=converged,
        status=meta['status'].tolist(),
    )
    return results, network
