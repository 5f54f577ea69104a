"""
Scenario inputs: half-hourly profiles, capacity tables and the fixture network.

Profiles are one system-wide demand factor, one PV and one wind capacity
factor, and the market index price (MIP) at the grid boundary. The fixture
is a small south-west style network (400 kV spine, 132 kV ring, four 33 kV
bulk supply point groups and one 11 kV feeder) whose installed capacity per
fuel and voltage level follows the capacity table of each case.
"""

import csv
import logging
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from scipy.signal import lfilter

from dlmp.config import CASES, load_config
from dlmp.exceptions import DayRangeError, ProfileFormatError
from dlmp.services.netmodel import (
    GRID_PRICED, Branch, Bus, Generator, Load, Network, require_valid,
)

logger = logging.getLogger(__name__)

PROFILE_COLUMNS = ('timestamp', 'demand_factor', 'pv_cf', 'wind_cf', 'mip_gbp_mwh')
STEPS_PER_DAY = 48
YEAR_STEPS = 365 * STEPS_PER_DAY
STEP = timedelta(minutes=30)
TIMESTAMP_FORMAT = '%Y-%m-%dT%H:%M'

# Capacity-table fuels; gas is split into OCGT and CCGT units in the fixture
TABLE_FUELS = ('gas', 'wind', 'pv', 'biomass')
FUEL_GROUPS = {'ocgt': 'gas', 'ccgt': 'gas'}


@dataclass(frozen=True)
class ProfileSet:
    """Aligned half-hourly series."""
    timestamps: pd.DatetimeIndex
    demand_factor: np.ndarray
    pv_cf: np.ndarray
    wind_cf: np.ndarray
    mip_gbp_mwh: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'timestamps', pd.DatetimeIndex(self.timestamps))
        for name in PROFILE_COLUMNS[1:]:
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        n = len(self.timestamps)
        for name in PROFILE_COLUMNS[1:]:
            if getattr(self, name).shape != (n,):
                raise ProfileFormatError(f'{name} has {getattr(self, name).size} entries, expected {n}')
        if np.any(self.demand_factor <= 0) or np.any(self.demand_factor > 1):
            raise ProfileFormatError('demand_factor out of range')
        for name in ('pv_cf', 'wind_cf'):
            values = getattr(self, name)
            if np.any(values < 0) or np.any(values > 1):
                raise ProfileFormatError(f'{name} out of range')

    def __len__(self) -> int:
        return len(self.timestamps)

    @property
    def n_days(self) -> int:
        return len(self) // STEPS_PER_DAY

    def slice(self, start: int, end: int) -> 'ProfileSet':
        return ProfileSet(
            timestamps=self.timestamps[start:end],
            demand_factor=self.demand_factor[start:end],
            pv_cf=self.pv_cf[start:end],
            wind_cf=self.wind_cf[start:end],
            mip_gbp_mwh=self.mip_gbp_mwh[start:end],
        )

    def day(self, index: int) -> 'ProfileSet':
        if not 0 <= index < self.n_days:
            raise DayRangeError(f'day {index} outside 0..{self.n_days - 1}')
        return self.slice(index * STEPS_PER_DAY, (index + 1) * STEPS_PER_DAY)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            'timestamp': self.timestamps.strftime(TIMESTAMP_FORMAT),
            'demand_factor': self.demand_factor,
            'pv_cf': self.pv_cf,
            'wind_cf': self.wind_cf,
            'mip_gbp_mwh': self.mip_gbp_mwh,
        })


def _parse_float(cell: str, name: str, row: int) -> float:
    try:
        value = float(cell)
    except ValueError:
        raise ProfileFormatError(f'{name} is not numeric: {cell!r}', row) from None
    if not math.isfinite(value):
        raise ProfileFormatError(f'{name} is not finite', row)
    return value


def load_profiles(path: Union[str, Path], full_year: bool = False) -> ProfileSet:
    """
    Read and validate a profile CSV.

    Data rows are numbered from 1 in error messages.

    Args:
        path: CSV with header timestamp,demand_factor,pv_cf,wind_cf,mip_gbp_mwh
        full_year: require exactly one year of half hours

    Raises:
        ProfileFormatError: bad header, cell, range, ordering or length
    """
    path = Path(path)
    stamps: List[datetime] = []
    columns: Dict[str, List[float]] = {name: [] for name in PROFILE_COLUMNS[1:]}

    with open(path, 'r', encoding='utf-8', newline='') as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != PROFILE_COLUMNS:
            raise ProfileFormatError(f'header must be {",".join(PROFILE_COLUMNS)}')

        for row, cells in enumerate(reader, start=1):
            if not cells:
                continue
            if len(cells) != len(PROFILE_COLUMNS):
                raise ProfileFormatError(
                    f'expected {len(PROFILE_COLUMNS)} columns, found {len(cells)}', row)
            try:
                stamp = datetime.fromisoformat(cells[0].strip())
            except ValueError:
                raise ProfileFormatError(f'bad timestamp {cells[0]!r}', row) from None
            if stamps and stamp <= stamps[-1]:
                raise ProfileFormatError('timestamps are not increasing', row)
            if stamps and stamp - stamps[-1] != STEP:
                raise ProfileFormatError('timestamps are not half-hourly', row)

            values = {name: _parse_float(cell, name, row)
                      for name, cell in zip(PROFILE_COLUMNS[1:], cells[1:])}
            if not 0 < values['demand_factor'] <= 1:
                raise ProfileFormatError('demand_factor out of range', row)
            for name in ('pv_cf', 'wind_cf'):
                if not 0 <= values[name] <= 1:
                    raise ProfileFormatError(f'{name} out of range', row)

            stamps.append(stamp)
            for name, value in values.items():
                columns[name].append(value)

    if not stamps:
        raise ProfileFormatError(f'{path} holds no profile rows')
    if full_year and len(stamps) != YEAR_STEPS:
        raise ProfileFormatError(f'expected {YEAR_STEPS} rows for a full year, found {len(stamps)}')

    logger.info('Loaded %d half-hours of profiles from %s', len(stamps), path)
    return ProfileSet(timestamps=pd.DatetimeIndex(stamps), **columns)


def save_profiles(profiles: ProfileSet, path: Union[str, Path]) -> Path:
    """Write profiles in the CSV layout load_profiles reads."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    profiles.to_frame().to_csv(path, index=False, lineterminator='\n')
    logger.info('Wrote %d half-hours of profiles to %s', len(profiles), path)
    return path


def _smooth_noise(rng: np.random.Generator, n: int, phi: float) -> np.ndarray:
    """Unit-variance AR(1) series."""
    shocks = rng.standard_normal(n)
    return lfilter([math.sqrt(1.0 - phi * phi)], [1.0, -phi], shocks)


def synthesize_year(seed: int = 1, start: str = '2015-01-01T00:00') -> ProfileSet:
    """
    Build a deterministic synthetic year of half-hourly profiles.

    Demand peaks on winter evenings; PV is a daylight bell scaled by season
    and a daily cloud factor; wind is a smoothed random process; MIP is a
    demand-following price with a few spikes above 90 GBP/MWh and some
    negative half hours.
    """
    rng = np.random.default_rng(seed)
    timestamps = pd.date_range(start=start, periods=YEAR_STEPS, freq='30min')
    step = np.arange(YEAR_STEPS)
    day = step // STEPS_PER_DAY
    hour = (step % STEPS_PER_DAY) / 2.0
    season = np.cos(2 * np.pi * (day - 15) / 365.0)        # +1 mid January
    summer = np.cos(2 * np.pi * (day - 172) / 365.0)       # +1 at midsummer

    # Demand: winter-peaking seasonal level times a two-hump diurnal shape
    diurnal = (0.62
               + 0.13 * np.exp(-((hour - 9.0) / 2.5) ** 2)
               + 0.26 * np.exp(-((hour - 17.75) / 2.2) ** 2)
               - 0.08 * np.exp(-((hour - 3.5) / 2.0) ** 2))
    weekend = np.where(timestamps.dayofweek >= 5, 0.94, 1.0)
    demand = (1.0 + 0.18 * season) * diurnal * weekend
    demand = demand * (1.0 + 0.015 * _smooth_noise(rng, YEAR_STEPS, 0.9))
    demand = demand / demand.max()

    # PV: zero outside daylight, summer-peaked, with a daily cloud factor
    day_length = 12.0 + 4.2 * summer
    sunrise = 12.0 - day_length / 2.0
    phase = (hour - sunrise) / day_length
    daylight = (phase > 0) & (phase < 1)
    bell = np.where(daylight, np.sin(np.pi * np.clip(phase, 0.0, 1.0)), 0.0) ** 1.3
    cloud_daily = np.clip(0.8 + 0.35 * _smooth_noise(rng, 365, 0.6), 0.15, 1.0)
    pv = (0.55 + 0.4 * summer) * bell * cloud_daily[day]
    pv = np.where(daylight, np.clip(pv, 0.0, 1.0), 0.0)

    # Wind: slow AR process through a logistic, windier in winter
    wind_state = _smooth_noise(rng, YEAR_STEPS, 0.995)
    wind = 1.0 / (1.0 + np.exp(-(1.8 * wind_state + 0.5 * season - 0.4)))

    # MIP: demand-following price plus spikes and negative dips
    z = (demand - demand.mean()) / demand.std()
    mip = 40.0 + 11.0 * z + 4.0 * _smooth_noise(rng, YEAR_STEPS, 0.8)
    peak_steps = np.flatnonzero(demand >= np.quantile(demand, 0.97))
    spikes = rng.choice(peak_steps, size=38, replace=False)
    mip[spikes] = np.maximum(mip[spikes], rng.uniform(92.0, 180.0, size=38))
    windy_nights = np.flatnonzero((demand <= np.quantile(demand, 0.1)) & (wind > 0.6))
    if windy_nights.size < 60:
        windy_nights = np.argsort(demand - wind, kind='stable')[:600]
    dips = rng.choice(windy_nights, size=60, replace=False)
    mip[dips] = -rng.uniform(2.0, 35.0, size=60)

    profiles = ProfileSet(
        timestamps=timestamps,
        demand_factor=demand,
        pv_cf=pv,
        wind_cf=wind,
        mip_gbp_mwh=mip,
    )
    logger.info('Synthesized %d half-hours from seed %d', len(profiles), seed)
    return profiles


def representative_day(profiles: ProfileSet, season: str) -> int:
    """
    Day index of a study day.

    winter: the day holding the peak demand half hour.
    summer: the May to August day with the largest PV factor net of demand.
    """
    if season == 'winter':
        return int(np.argmax(profiles.demand_factor)) // STEPS_PER_DAY
    if season == 'summer':
        months = profiles.timestamps.month
        surplus = np.where((months >= 5) & (months <= 8),
                           profiles.pv_cf - profiles.demand_factor, -np.inf)
        return int(np.argmax(surplus)) // STEPS_PER_DAY
    raise ValueError(f'unknown season {season!r}')


@dataclass(frozen=True)
class Scenario:
    """One study: which network and profiles, which half hours, and a label."""
    network_file: Path
    profile_file: Path
    capacity_case: str = 'current'
    time_range: Optional[Tuple[int, int]] = None
    label: str = 'run'
    full_year: bool = False

    def __post_init__(self):
        object.__setattr__(self, 'network_file', Path(self.network_file))
        object.__setattr__(self, 'profile_file', Path(self.profile_file))
        if self.capacity_case not in CASES:
            raise ValueError(f'capacity case must be one of {CASES}')
        if self.time_range is not None:
            start, end = self.time_range
            if not 0 <= start < end:
                raise ValueError(f'bad time range {self.time_range}')

    def steps(self, n_profile: int) -> Tuple[int, int]:
        """Resolved (start, end) half-hour range within a profile of length n_profile."""
        start, end = self.time_range if self.time_range is not None else (0, n_profile)
        if end > n_profile:
            raise DayRangeError(f'time range {start}..{end} exceeds {n_profile} profile steps')
        return start, end


@dataclass(frozen=True)
class CapacityTable:
    """Installed MW per fuel and voltage level."""
    case: str
    mw: Dict[str, Dict[int, float]] = field(default_factory=dict)

    def get(self, fuel: str, level: int) -> float:
        return float(self.mw.get(fuel, {}).get(level, 0.0))

    def fuel_total(self, fuel: str) -> float:
        return float(sum(self.mw.get(fuel, {}).values()))

    def total(self) -> float:
        return float(sum(self.fuel_total(fuel) for fuel in self.mw))

    def share(self, fuel: str, level: int) -> float:
        total = self.fuel_total(fuel)
        return self.get(fuel, level) / total if total else 0.0

    def rows(self) -> List[Tuple[str, int, float]]:
        return [(fuel, level, mw) for fuel, by_level in self.mw.items()
                for level, mw in sorted(by_level.items(), reverse=True)]


def capacity_table(case: str, config: Optional[dict] = None) -> CapacityTable:
    """Capacity table for a case, read from its YAML settings."""
    if case not in CASES:
        raise ValueError(f'capacity case must be one of {CASES}')
    config = config if config is not None else load_config(case)
    raw = config.get('capacity', {})
    mw = {fuel: {int(level): float(value) for level, value in raw.get(fuel, {}).items()}
          for fuel in TABLE_FUELS}
    return CapacityTable(case=case, mw=mw)


def installed_capacity(network: Network) -> CapacityTable:
    """Capacity table recovered from a network's non-grid generators."""
    mw: Dict[str, Dict[int, float]] = {fuel: {} for fuel in TABLE_FUELS}
    for gen in network.generators:
        if gen.is_grid:
            continue
        fuel = FUEL_GROUPS.get(gen.fuel, gen.fuel)
        level = network.bus(gen.bus).voltage_level
        mw[fuel][level] = mw[fuel].get(level, 0.0) + gen.p_max_mw
    return CapacityTable(case=network.name, mw=mw)


# Fixture topology

SPINE = (
    (1, 'HINP'), (2, 'CHIC'), (3, 'MELK'), (4, 'ALVE'), (5, 'EXET'), (6, 'TAUN'),
)
RING = (
    (11, 'BRWA'), (12, 'BARN'), (13, 'TIVE'), (14, 'OKEH'),
    (15, 'NEWT'), (16, 'TORQ'), (17, 'PAIG'), (18, 'YEOV'),
)
GROUPS = ('RAME', 'LAND', 'INDI', 'ABHA')
# 132 kV ring bus feeding each group's 132/33 transformer
GROUP_FEEDS = (12, 14, 16, 18)
FEEDER_IDS = (41, 42, 43, 44, 45, 46)
DEEPEST_11KV = FEEDER_IDS[-1]

# Impedances in pu on the system base. Circuits and transformers are the
# parallel equivalents of each corridor or substation; transformer taps sit on
# the HV side and hold the lower levels near nominal at peak demand.
LINE_400 = dict(r=0.0002, x=0.0025, b_shunt=0.1)
TIE_400 = dict(r=0.0004, x=0.005, b_shunt=0.2)
SGT_400_132 = dict(r=0.0003, x=0.008, tap=0.97)
LINE_132 = dict(r=0.002, x=0.008, b_shunt=0.01)
BSP_132_33 = dict(r=0.0004, x=0.008, tap=0.98)
LINK_33 = dict(r=0.003, x=0.006)
PRIMARY_33_11 = dict(r=0.05, x=0.4, tap=0.96)
SEGMENTS_11 = ((0.10, 0.15), (0.12, 0.15), (0.14, 0.15), (0.16, 0.15), (0.18, 0.15))

# Units per level: fuel -> buses sharing that fuel's capacity
UNITS_132 = {'wind': (12, 16), 'pv': (13, 17), 'biomass': (15, 18)}
UNITS_11 = {'pv': (43, 45), 'wind': (46,), 'biomass': (44,)}


def _group_buses(g: int) -> Tuple[int, int, int, int]:
    """(busbar, primary 1, primary 2, primary 3) ids of a 33 kV group."""
    base = 21 + 4 * g
    return base, base + 1, base + 2, base + 3


def _group_dg(table: CapacityTable, weight: float, with_11kv: bool) -> float:
    total = sum(table.get(fuel, 33) for fuel in TABLE_FUELS) * weight
    if with_11kv:
        total += sum(table.get(fuel, 11) for fuel in TABLE_FUELS)
    return total


def _reverse_limits(fixture: dict, current: CapacityTable, future: CapacityTable,
                    demand: Dict[int, float]) -> List[float]:
    """
    132/33 kV transformer reverse limits per group.

    Sized above the current case's worst export (all DG at full output,
    demand at its design minimum) so the current case never binds, and at a
    fraction of the future case's net export so the future case does.
    """
    limits = []
    for g, (dg_w, dem_w) in enumerate(zip(fixture['dg_weights'], fixture['demand_weights'])):
        local = demand[33] * dem_w + (demand.get(11, 0.0) if g == 0 else 0.0)
        minimum = fixture['min_demand_factor'] * local
        now = _group_dg(current, dg_w, g == 0) - minimum
        later = _group_dg(future, dg_w, g == 0) - minimum
        limits.append(round(max(fixture['reverse_limit_fraction'] * later,
                                fixture['current_margin'] * now, 1.0), 1))
    return limits


def build_fixture(case: str, config: Optional[dict] = None) -> Network:
    """
    Build the fixture network for a capacity case.

    Both cases share buses, branches and loads (including the transformer
    limits); only the installed generation differs.
    """
    if case not in CASES:
        raise ValueError(f'capacity case must be one of {CASES}')
    config = config if config is not None else load_config(case)
    fixture = config['fixture']
    costs = fixture['costs']
    demand = {int(k): float(v) for k, v in config['demand'].items()}
    pf = float(config.get('network', {}).get('load_power_factor', 0.95))
    base_mva = float(config.get('network', {}).get('base_mva', 100))
    table = capacity_table(case, config)
    current = capacity_table('current', load_config('current')) if case != 'current' else table
    future = capacity_table('future', load_config('future')) if case != 'future' else table
    reverse = _reverse_limits(fixture, current, future, demand)
    forward = float(fixture['forward_limit_mw'])

    gens: List[Generator] = []
    loads: List[Load] = []
    branches: List[Branch] = []

    def add_units(fuel: str, total: float, buses):
        if total <= 0:
            return
        for bus in buses:
            gens.append(Generator(
                bus=bus, p_min_mw=0.0, p_max_mw=total / len(buses),
                marginal_cost_gbp_mwh=float(costs[fuel]), fuel=fuel,
                profile_driven=fuel in ('wind', 'pv'),
            ))

    # Grid boundary at the slack
    grid = float(fixture['grid_import_mw'])
    gens.append(Generator(bus=1, p_min_mw=-grid, p_max_mw=grid,
                          marginal_cost_gbp_mwh=GRID_PRICED, fuel='grid'))

    # 400 kV: gas units and transmission-connected demand
    gas = table.get('gas', 400)
    add_units('ccgt', gas * (1.0 - fixture['ocgt_share']), (4,))
    add_units('ocgt', gas * fixture['ocgt_share'], (6,))
    for bus in (1, 3, 5):
        loads.append(Load(bus, demand[400] / 3.0, pf))
    spine = [(1, 3), (3, 4), (4, 5), (5, 6), (6, 2)]
    branches += [Branch(f, t, **LINE_400) for f, t in spine]
    branches.append(Branch(2, 1, **TIE_400))

    # 132 kV ring fed by three supergrid transformers
    for hv, lv in ((3, 11), (5, 14), (6, 17)):
        branches.append(Branch(hv, lv, forward_limit_mw=forward, reverse_limit_mw=forward,
                               is_transformer=True, **SGT_400_132))
    ring_ids = [bus_id for bus_id, _ in RING]
    for f, t in zip(ring_ids, ring_ids[1:] + ring_ids[:1]):
        branches.append(Branch(f, t, **LINE_132))
    for fuel, buses in UNITS_132.items():
        add_units(fuel, table.get(fuel, 132), buses)
    if demand.get(132, 0.0) > 0:
        for bus in ring_ids:
            loads.append(Load(bus, demand[132] / len(ring_ids), pf))

    # 33 kV groups behind 132/33 kV transformers with reverse limits
    for g, feed in enumerate(GROUP_FEEDS):
        busbar, p1, p2, p3 = _group_buses(g)
        branches.append(Branch(feed, busbar, forward_limit_mw=forward, reverse_limit_mw=reverse[g],
                               is_transformer=True, **BSP_132_33))
        branches += [Branch(busbar, p1, **LINK_33), Branch(busbar, p2, **LINK_33),
                     Branch(p2, p3, **LINK_33)]
        weight = fixture['dg_weights'][g]
        add_units('pv', table.get('pv', 33) * weight, (p1, p3))
        add_units('wind', table.get('wind', 33) * weight, (p2,))
        add_units('biomass', table.get('biomass', 33) * weight, (p3,))
        for bus in (p1, p2, p3):
            loads.append(Load(bus, demand[33] * fixture['demand_weights'][g] / 3.0, pf))

    # 11 kV radial feeder off the first group's second primary
    branches.append(Branch(_group_buses(0)[2], FEEDER_IDS[0], is_transformer=True, **PRIMARY_33_11))
    for (f, t), (r, x) in zip(zip(FEEDER_IDS, FEEDER_IDS[1:]), SEGMENTS_11):
        branches.append(Branch(f, t, r=r, x=x))
    for fuel, buses in UNITS_11.items():
        add_units(fuel, table.get(fuel, 11), buses)
    for bus in FEEDER_IDS[1:]:
        loads.append(Load(bus, demand.get(11, 0.0) / (len(FEEDER_IDS) - 1), pf))

    gen_buses = {gen.bus for gen in gens}

    def role(bus_id: int) -> str:
        if bus_id == 1:
            return 'slack'
        return 'generator' if bus_id in gen_buses else 'load-only'

    buses = [Bus(bus_id, name, 400, role(bus_id), 'boundary' if bus_id in (1, 2) else 'spine')
             for bus_id, name in SPINE]
    buses += [Bus(bus_id, name, 132, role(bus_id), 'ring') for bus_id, name in RING]
    for g, group in enumerate(GROUPS):
        busbar, p1, p2, p3 = _group_buses(g)
        buses.append(Bus(busbar, f'{group} BSP', 33, role(busbar), group))
        buses += [Bus(bus_id, f'{group} P{k}', 33, role(bus_id), group)
                  for k, bus_id in enumerate((p1, p2, p3), start=1)]
    buses += [Bus(bus_id, f'{GROUPS[0]} 11-{k}', 11, role(bus_id), GROUPS[0])
              for k, bus_id in enumerate(FEEDER_IDS)]

    network = Network(buses=buses, branches=branches, generators=gens, loads=loads,
                      base_mva=base_mva, name=f'fixture-{case}')
    require_valid(network)
    logger.info('Built %s fixture: %d buses, %d branches, %d generators, %.1f MW installed',
                case, network.n_bus, network.n_branch, len(gens), installed_capacity(network).total())
    return network
