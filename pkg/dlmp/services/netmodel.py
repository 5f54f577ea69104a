"""
Per-unit network data model.

Immutable buses, branches, generators and loads, validation of the
structural invariants, JSON persistence and admittance (Y-bus) assembly.
Bus ids are user-facing; everything numerical works on bus *indices*, the
position of a bus in Network.buses.
"""

import json
import logging
import math
from dataclasses import dataclass, field, fields, replace, asdict
from functools import cached_property
from pathlib import Path
from typing import Dict, List, Tuple, Union

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from dlmp.exceptions import AdmittanceError, NetworkValidationError

logger = logging.getLogger(__name__)

VOLTAGE_LEVELS = (400, 132, 33, 11)
BUS_ROLES = ('slack', 'generator', 'load-only')
FUELS = ('ocgt', 'ccgt', 'wind', 'pv', 'biomass', 'grid')
PROFILE_FUELS = ('wind', 'pv')
GRID_PRICED = 'grid-priced'
DEFAULT_BASE_MVA = 100.0
DEFAULT_POWER_FACTOR = 0.95


@dataclass(frozen=True)
class Bus:
    """A network node."""
    id: int
    name: str
    voltage_level: int
    role: str = 'load-only'
    region_tag: str = ''


@dataclass(frozen=True)
class Branch:
    """A line or transformer; limits in MW, impedances in pu on system base."""
    from_bus: int
    to_bus: int
    r: float
    x: float
    b_shunt: float = 0.0
    tap: float = 1.0
    forward_limit_mw: float = math.inf
    reverse_limit_mw: float = math.inf
    is_transformer: bool = False


@dataclass(frozen=True)
class Generator:
    """A dispatchable unit. Grid units carry the GRID_PRICED cost sentinel."""
    bus: int
    p_min_mw: float
    p_max_mw: float
    marginal_cost_gbp_mwh: Union[float, str]
    fuel: str
    profile_driven: bool = False

    @property
    def is_grid(self) -> bool:
        return self.fuel == 'grid'


@dataclass(frozen=True)
class Load:
    """A constant-power demand scaled by the system demand factor."""
    bus: int
    p_peak_mw: float
    power_factor: float = DEFAULT_POWER_FACTOR

    @property
    def q_ratio(self) -> float:
        """Reactive to active power ratio implied by the power factor."""
        return math.tan(math.acos(self.power_factor))


@dataclass(frozen=True)
class Violation:
    """One violated invariant."""
    code: str
    message: str
    elements: Tuple = ()


@dataclass(frozen=True)
class ValidationReport:
    """Result of validate(); ok when no invariant is violated."""
    violations: Tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def messages(self) -> List[str]:
        return [v.message for v in self.violations]


@dataclass(frozen=True)
class Network:
    """Immutable network; safe to share read-only between workers."""
    buses: Tuple[Bus, ...]
    branches: Tuple[Branch, ...] = ()
    generators: Tuple[Generator, ...] = ()
    loads: Tuple[Load, ...] = ()
    base_mva: float = DEFAULT_BASE_MVA
    name: str = field(default='network', compare=False)

    def __post_init__(self):
        # Accept lists from callers but store tuples
        for name in ('buses', 'branches', 'generators', 'loads'):
            object.__setattr__(self, name, tuple(getattr(self, name)))

    @cached_property
    def bus_index(self) -> Dict[int, int]:
        return {bus.id: i for i, bus in enumerate(self.buses)}

    @cached_property
    def bus_ids(self) -> List[int]:
        return [bus.id for bus in self.buses]

    @cached_property
    def slack_index(self) -> int:
        slacks = [i for i, bus in enumerate(self.buses) if bus.role == 'slack']
        return slacks[0]

    @cached_property
    def report(self) -> ValidationReport:
        return validate(self)

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    @property
    def n_branch(self) -> int:
        return len(self.branches)

    def bus(self, bus_id: int) -> Bus:
        return self.buses[self.bus_index[bus_id]]

    def gen_bus_indices(self) -> np.ndarray:
        return np.array([self.bus_index[g.bus] for g in self.generators], dtype=int)

    def load_bus_indices(self) -> np.ndarray:
        return np.array([self.bus_index[ld.bus] for ld in self.loads], dtype=int)

    def branch_ends(self) -> Tuple[np.ndarray, np.ndarray]:
        f = np.array([self.bus_index[br.from_bus] for br in self.branches], dtype=int)
        t = np.array([self.bus_index[br.to_bus] for br in self.branches], dtype=int)
        return f, t


def validate(network: Network) -> ValidationReport:
    """
    Check the structural invariants of a network.

    Returns a report; never raises and never mutates the network.
    """
    violations: List[Violation] = []

    def flag(code: str, message: str, *elements):
        violations.append(Violation(code, message, tuple(elements)))

    if not (network.base_mva > 0 and math.isfinite(network.base_mva)):
        flag('base_mva', f'base_mva {network.base_mva} must be positive')

    seen = set()
    for bus in network.buses:
        if bus.id in seen:
            flag('duplicate_bus', f'duplicate bus id {bus.id}', bus.id)
        seen.add(bus.id)
        if bus.voltage_level not in VOLTAGE_LEVELS:
            flag('voltage_level', f'bus {bus.id}: voltage level {bus.voltage_level} not in {VOLTAGE_LEVELS}', bus.id)
        if bus.role not in BUS_ROLES:
            flag('role', f'bus {bus.id}: unknown role {bus.role!r}', bus.id)

    slack_count = sum(1 for bus in network.buses if bus.role == 'slack')
    if slack_count != 1:
        flag('slack_count', f'slack count {slack_count} ≠ 1')

    def check_bus(ref: int, what: str, idx: int):
        if ref not in seen:
            flag('unknown_bus', f'unknown bus {ref}', what, idx)
            return False
        return True

    edges_ok = True
    for k, br in enumerate(network.branches):
        ends_ok = check_bus(br.from_bus, 'branch', k) & check_bus(br.to_bus, 'branch', k)
        edges_ok = edges_ok and ends_ok
        if br.x == 0:
            flag('zero_reactance', f'branch {k}: x must be non-zero', k)
        if br.r < 0:
            flag('negative_resistance', f'branch {k}: r must be >= 0', k)
        if not (br.forward_limit_mw > 0 and br.reverse_limit_mw > 0):
            flag('limit', f'branch {k}: limits must be positive', k)
        if br.forward_limit_mw != br.reverse_limit_mw and not br.is_transformer:
            flag('asymmetric_limit', f'branch {k}: asymmetric limits only allowed on transformers', k)
        if br.tap <= 0:
            flag('tap', f'branch {k}: tap ratio must be positive', k)

    for j, gen in enumerate(network.generators):
        check_bus(gen.bus, 'generator', j)
        if gen.fuel not in FUELS:
            flag('fuel', f'generator {j}: unknown fuel {gen.fuel!r}', j)
        if gen.p_min_mw > gen.p_max_mw:
            flag('gen_limits', f'generator {j}: p_min {gen.p_min_mw} > p_max {gen.p_max_mw}', j)
        if gen.p_min_mw < 0 and not gen.is_grid:
            flag('negative_pmin', f'generator {j}: only grid units may absorb power', j)
        if gen.fuel in PROFILE_FUELS and not gen.profile_driven:
            flag('profile_flag', f'generator {j}: {gen.fuel} units must be profile driven', j)
        if gen.is_grid and gen.marginal_cost_gbp_mwh != GRID_PRICED:
            flag('grid_cost', f'generator {j}: grid units must be {GRID_PRICED}', j)
        if not gen.is_grid and not isinstance(gen.marginal_cost_gbp_mwh, (int, float)):
            flag('cost', f'generator {j}: cost must be numeric', j)

    for j, load in enumerate(network.loads):
        check_bus(load.bus, 'load', j)
        if load.p_peak_mw < 0:
            flag('negative_load', f'load {j}: p_peak_mw must be >= 0', j)
        if not 0 < load.power_factor <= 1:
            flag('power_factor', f'load {j}: power factor must be in (0, 1]', j)

    gen_total = sum(g.p_max_mw for g in network.generators if not g.is_grid)
    load_total = sum(ld.p_peak_mw for ld in network.loads)
    if not (math.isfinite(gen_total) and gen_total > 0):
        flag('gen_total', f'non-grid generation total {gen_total} must be finite and positive')
    if not (math.isfinite(load_total) and load_total > 0):
        flag('load_total', f'load total {load_total} must be finite and positive')

    if edges_ok and network.buses and len(seen) == len(network.buses):
        islands = _islands(network)
        if islands:
            flag('disconnected', f'buses unreachable from slack: {islands}', *islands)

    return ValidationReport(tuple(violations))


def _islands(network: Network) -> List[int]:
    """Bus ids not connected to the slack (or to bus 0 when no slack)."""
    n = network.n_bus
    if n == 1:
        return []
    f, t = network.branch_ends()
    graph = coo_matrix((np.ones(len(f)), (f, t)), shape=(n, n))
    _, labels = connected_components(graph, directed=False)
    slacks = [i for i, bus in enumerate(network.buses) if bus.role == 'slack']
    root = labels[slacks[0]] if slacks else labels[0]
    return [network.buses[i].id for i in range(n) if labels[i] != root]


def require_valid(network: Network) -> Network:
    """Raise NetworkValidationError unless the network validates."""
    if not network.report.ok:
        raise NetworkValidationError(network.report)
    return network


def mw_to_pu(value_mw, base_mva: float = DEFAULT_BASE_MVA):
    return np.asarray(value_mw, dtype=float) / base_mva


def pu_to_mw(value_pu, base_mva: float = DEFAULT_BASE_MVA):
    return np.asarray(value_pu, dtype=float) * base_mva


def branch_admittances(network: Network) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """
    Two-port admittances of every branch.

    Returns (yff, yft, ytf, ytt) arrays using the off-nominal tap on the
    from side.
    """
    r = np.array([br.r for br in network.branches], dtype=float)
    x = np.array([br.x for br in network.branches], dtype=float)
    b = np.array([br.b_shunt for br in network.branches], dtype=float)
    tap = np.array([br.tap for br in network.branches], dtype=float)

    zero = (r == 0) & (x == 0)
    if np.any(zero):
        raise AdmittanceError(f'zero-impedance branch {int(np.flatnonzero(zero)[0])}')

    ys = 1.0 / (r + 1j * x)
    ytt = ys + 0.5j * b
    yff = ytt / tap ** 2
    yft = -ys / tap
    ytf = -ys / tap
    return yff, yft, ytf, ytt


def build_admittance(network: Network) -> np.ndarray:
    """
    Assemble the dense complex nodal admittance matrix.

    Raises:
        AdmittanceError: no branches, or a branch with r = x = 0
        NetworkValidationError: the network does not validate
    """
    if not network.branches:
        raise AdmittanceError('disconnected: network has no branches')
    yff, yft, ytf, ytt = branch_admittances(network)
    require_valid(network)

    n = network.n_bus
    f, t = network.branch_ends()
    ybus = np.zeros((n, n), dtype=complex)
    np.add.at(ybus, (f, f), yff)
    np.add.at(ybus, (f, t), yft)
    np.add.at(ybus, (t, f), ytf)
    np.add.at(ybus, (t, t), ytt)
    return ybus


def branch_matrices(network: Network) -> Tuple[np.ndarray, np.ndarray]:
    """From- and to-end branch admittance matrices (Yf, Yt), n_branch x n_bus."""
    yff, yft, ytf, ytt = branch_admittances(network)
    nl, n = network.n_branch, network.n_bus
    f, t = network.branch_ends()
    rows = np.arange(nl)
    yf = np.zeros((nl, n), dtype=complex)
    yt = np.zeros((nl, n), dtype=complex)
    np.add.at(yf, (rows, f), yff)
    np.add.at(yf, (rows, t), yft)
    np.add.at(yt, (rows, f), ytf)
    np.add.at(yt, (rows, t), ytt)
    return yf, yt


def limits_pu(network: Network) -> Tuple[np.ndarray, np.ndarray]:
    """Forward and reverse branch limits in pu."""
    fwd = np.array([br.forward_limit_mw for br in network.branches], dtype=float)
    rev = np.array([br.reverse_limit_mw for br in network.branches], dtype=float)
    return mw_to_pu(fwd, network.base_mva), mw_to_pu(rev, network.base_mva)


def relax_limits(network: Network) -> Network:
    """Copy of the network with every branch limit removed."""
    branches = [replace(br, forward_limit_mw=math.inf, reverse_limit_mw=math.inf)
                for br in network.branches]
    return replace(network, branches=tuple(branches), name=f'{network.name}-unlimited')


def lossless(network: Network) -> Network:
    """Copy of the network with every branch resistance set to zero."""
    branches = [replace(br, r=0.0) for br in network.branches]
    return replace(network, branches=tuple(branches), name=f'{network.name}-lossless')


# JSON persistence

_SECTIONS = {
    'buses': Bus,
    'branches': Branch,
    'generators': Generator,
    'loads': Load,
}
_TOP_KEYS = {'base_mva', *_SECTIONS}


def _encode_number(value):
    if isinstance(value, float) and math.isinf(value):
        return 'inf' if value > 0 else '-inf'
    return value


def network_to_dict(network: Network) -> Dict:
    """Plain-dict form with the JSON key layout."""
    doc = {'base_mva': network.base_mva}
    for section in _SECTIONS:
        doc[section] = [
            {k: _encode_number(v) for k, v in asdict(item).items()}
            for item in getattr(network, section)
        ]
    return doc


def network_from_dict(doc: Dict, name: str = 'network') -> Network:
    """
    Build a network from the JSON layout, rejecting unknown keys.

    Raises:
        ValueError: unknown or missing keys
    """
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ValueError(f'unknown top-level keys: {sorted(unknown)}')

    parts = {}
    for section, cls in _SECTIONS.items():
        allowed = {f.name for f in fields(cls)}
        items = []
        for pos, entry in enumerate(doc.get(section, [])):
            extra = set(entry) - allowed
            if extra:
                raise ValueError(f'{section}[{pos}]: unknown keys {sorted(extra)}')
            values = {}
            for key, value in entry.items():
                if value in ('inf', '-inf') and key != 'marginal_cost_gbp_mwh':
                    value = float(value)
                values[key] = value
            try:
                items.append(cls(**values))
            except TypeError as e:
                raise ValueError(f'{section}[{pos}]: {e}') from e
        parts[section] = tuple(items)

    return Network(base_mva=float(doc.get('base_mva', DEFAULT_BASE_MVA)), name=name, **parts)


def save_network(network: Network, path: Union[str, Path]) -> Path:
    """Write the network as a JSON document."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(network_to_dict(network), f, indent=2)
        f.write('\n')
    logger.info('Wrote network %s (%d buses) to %s', network.name, network.n_bus, path)
    return path


def load_network(path: Union[str, Path]) -> Network:
    """Read a JSON network document."""
    path = Path(path)
    with open(path, 'r', encoding='utf-8') as f:
        doc = json.load(f)
    return network_from_dict(doc, name=path.stem)
