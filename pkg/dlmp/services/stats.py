"""
Statistical calculations over run results.

Voltage-level summaries, per-bus temporal volatility and curtailment totals.
Only converged timesteps enter any statistic.
"""

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from dlmp.exceptions import DayRangeError, ResultSetError, UnknownBusError
from dlmp.services.netmodel import VOLTAGE_LEVELS, Network
from dlmp.services.runner import ResultSet
from dlmp.services.scenario import FUEL_GROUPS, STEPS_PER_DAY

logger = logging.getLogger(__name__)

ZERO_TOL = 1e-6
SUMMARY_COLUMNS = ('voltage_level', 'mean', 'spatial_std', 'min', 'max', 'zero_pct')
HOURS_PER_STEP = 0.5


@dataclass(frozen=True)
class VoltageLevelSummary:
    """One row of the per-level LMP table; single_bus marks a level whose spatial_std is 0 by definition."""
    voltage_level: int
    mean_lmp: float
    spatial_std: float
    min_lmp: float
    max_lmp: float
    zero_pct: float
    single_bus: bool = False

    def as_row(self) -> Dict:
        return {
            'voltage_level': self.voltage_level,
            'mean': self.mean_lmp,
            'spatial_std': self.spatial_std,
            'min': self.min_lmp,
            'max': self.max_lmp,
            'zero_pct': self.zero_pct,
        }


@dataclass(frozen=True)
class GridImportSummary:
    """MIP statistics over converged timesteps."""
    mean: float
    temporal_std: float
    min: float
    max: float

    def as_row(self) -> Dict:
        return {'voltage_level': 'grid', 'mean': self.mean, 'spatial_std': '',
                'min': self.min, 'max': self.max, 'zero_pct': ''}


def _converged(results: ResultSet) -> np.ndarray:
    mask = results.ok
    if not mask.any():
        raise ResultSetError(f'run {results.label} has no converged timesteps')
    return mask


def _level_columns(results: ResultSet, network: Network) -> Dict[int, List[int]]:
    levels: Dict[int, List[int]] = {}
    for col, bus_id in enumerate(results.bus_ids):
        if bus_id not in network.bus_index:
            raise UnknownBusError(bus_id)
        levels.setdefault(network.bus(bus_id).voltage_level, []).append(col)
    return {level: levels[level] for level in VOLTAGE_LEVELS if level in levels}


def level_summary(results: ResultSet, network: Network, zero_tol: float = ZERO_TOL) -> List[VoltageLevelSummary]:
    """
    Per-voltage-level LMP summary.

    spatial_std is the time average of the population standard deviation
    across a level's buses. zero_pct counts |LMP| < zero_tol among cells of
    timesteps with positive MIP.

    Returns:
        One VoltageLevelSummary per level present, highest voltage first
    """
    mask = _converged(results)
    lmp = results.lmp[mask]
    mip = results.mip[mask]
    priced = mip > 0

    summaries = []
    for level, cols in _level_columns(results, network).items():
        block = lmp[:, cols]
        single = len(cols) == 1
        if single:
            logger.debug('voltage level %d has a single bus; spatial std reported as 0', level)
        spatial = 0.0 if single else float(np.mean(np.std(block, axis=1)))
        considered = block[priced]
        zero_pct = (100.0 * float(np.count_nonzero(np.abs(considered) < zero_tol)) / considered.size
                    if considered.size else 0.0)
        summaries.append(VoltageLevelSummary(
            voltage_level=level,
            mean_lmp=float(block.mean()),
            spatial_std=spatial,
            min_lmp=float(block.min()),
            max_lmp=float(block.max()),
            zero_pct=zero_pct,
            single_bus=single,
        ))
    return summaries


def temporal_std(results: ResultSet, bus: int) -> float:
    """Population standard deviation of one bus's LMP over converged timesteps."""
    col = results.column(bus)
    series = results.lmp[results.ok, col]
    if series.size < 2:
        raise ResultSetError('temporal standard deviation needs at least 2 converged timesteps')
    return float(np.std(series))


def daily_slice(results: ResultSet, buses: Sequence[int], day_index: int) -> Dict[int, np.ndarray]:
    """
    One day's LMP series for each requested bus, in call order.

    Raises:
        DayRangeError: day_index outside the run
        UnknownBusError: a bus is not in the run
    """
    n_days = results.n_steps // STEPS_PER_DAY
    if not 0 <= day_index < n_days:
        raise DayRangeError(f'day {day_index} outside 0..{n_days - 1}')
    rows = slice(day_index * STEPS_PER_DAY, (day_index + 1) * STEPS_PER_DAY)
    return {bus: results.lmp[rows, results.column(bus)].copy() for bus in buses}


def grid_import_summary(results: ResultSet) -> GridImportSummary:
    """Mean, temporal std, min and max of the market index price."""
    mip = results.mip[_converged(results)]
    return GridImportSummary(
        mean=float(mip.mean()),
        temporal_std=float(np.std(mip)),
        min=float(mip.min()),
        max=float(mip.max()),
    )


def temporal_table(results: ResultSet, network: Network) -> pd.DataFrame:
    """
    Temporal volatility of every bus.

    Returns:
        DataFrame with bus, voltage_level, mean_lmp and temporal_std columns
    """
    lmp = results.lmp[_converged(results)]
    return pd.DataFrame({
        'bus': results.bus_ids,
        'voltage_level': [network.bus(b).voltage_level for b in results.bus_ids],
        'mean_lmp': lmp.mean(axis=0),
        'temporal_std': lmp.std(axis=0),
    })


def curtailment_summary(results: ResultSet, network: Network, tol_mw: float = 1e-6) -> pd.DataFrame:
    """
    Curtailed energy per fuel and voltage level.

    Returns:
        DataFrame with fuel, voltage_level, curtailed_mwh and half_hours
        (timesteps with curtailment above tol_mw) columns
    """
    curtailed = results.curtailed[_converged(results)]
    groups: Dict[tuple, List[int]] = {}
    for k, gen in enumerate(network.generators):
        if gen.profile_driven:
            key = (FUEL_GROUPS.get(gen.fuel, gen.fuel), network.bus(gen.bus).voltage_level)
            groups.setdefault(key, []).append(k)

    rows = []
    for (fuel, level), cols in sorted(groups.items(), key=lambda item: (item[0][0], -item[0][1])):
        mw = curtailed[:, cols].sum(axis=1)
        rows.append({
            'fuel': fuel,
            'voltage_level': level,
            'curtailed_mwh': float(mw.sum() * HOURS_PER_STEP),
            'half_hours': int(np.count_nonzero(mw > tol_mw)),
        })
    return pd.DataFrame(rows, columns=['fuel', 'voltage_level', 'curtailed_mwh', 'half_hours'])


def average_by_level(results: ResultSet, network: Network) -> Dict[int, float]:
    """Mean LMP per voltage level over converged timesteps."""
    return {s.voltage_level: s.mean_lmp for s in level_summary(results, network)}


def write_summary(rows: Sequence[VoltageLevelSummary], path: Union[str, Path],
                  grid: Optional[GridImportSummary] = None) -> Path:
    """Write the level summary CSV (voltage_level,mean,spatial_std,min,max,zero_pct)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='') as f:
        writer = csv.DictWriter(f, fieldnames=SUMMARY_COLUMNS, lineterminator='\n')
        writer.writeheader()
        if grid is not None:
            writer.writerow(grid.as_row())
        for row in rows:
            writer.writerow(row.as_row())
    return path
