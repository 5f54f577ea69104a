"""
Locational marginal prices by sequential linear programming.

Each iteration linearizes the AC operating point (loss sensitivities and
shift factors), solves an active-power dispatch LP around it, then re-runs
the AC power flow at the new dispatch. Prices are read from the final LP's
row duals and split into energy, loss and congestion components.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from dlmp.exceptions import InfeasibleDispatchError, SlpDivergenceError
from dlmp.services.lpsolve import INFEASIBLE, LinearProgram, LpSettings, solve
from dlmp.services.netmodel import Network, require_valid
from dlmp.services.pflow import InjectionSet, PowerFlowSettings, PowerFlowSolution, linearize, solve_ac

logger = logging.getLogger(__name__)

FORWARD = 'forward'
REVERSE = 'reverse'


@dataclass(frozen=True)
class OpfSettings:
    """SLP loop controls."""
    max_iterations: int = 20
    dispatch_tol_mw: float = 0.01
    divergence_mw: float = 1.0
    screen_fraction: float = 0.5
    step_shrink: float = 0.5
    generator_power_factor: float = 1.0
    voltage_support: bool = False
    power_flow: PowerFlowSettings = field(default_factory=PowerFlowSettings)
    lp: LpSettings = field(default_factory=LpSettings)

    @classmethod
    def from_config(cls, config: dict) -> 'OpfSettings':
        section = config.get('opf', {})
        return cls(
            max_iterations=int(section.get('max_iterations', 20)),
            dispatch_tol_mw=float(section.get('dispatch_tol_mw', 0.01)),
            divergence_mw=float(section.get('divergence_mw', 1.0)),
            screen_fraction=float(section.get('screen_fraction', 0.5)),
            step_shrink=float(section.get('step_shrink', 0.5)),
            generator_power_factor=float(config.get('network', {}).get('generator_power_factor', 1.0)),
            voltage_support=bool(section.get('voltage_support', False)),
            power_flow=PowerFlowSettings.from_config(config),
            lp=LpSettings.from_config(config),
        )


@dataclass(frozen=True)
class DispatchProblem:
    """One timestep: availability, prices and demand over a fixed network."""
    network: Network
    gen_available_mw: np.ndarray
    gen_cost_gbp_mwh: np.ndarray
    load_mw: np.ndarray

    def __post_init__(self):
        for name in ('gen_available_mw', 'gen_cost_gbp_mwh', 'load_mw'):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        n_gen = len(self.network.generators)
        if self.gen_available_mw.shape != (n_gen,) or self.gen_cost_gbp_mwh.shape != (n_gen,):
            raise ValueError(f'generator vectors must have {n_gen} entries')
        if self.load_mw.shape != (len(self.network.loads),):
            raise ValueError(f'load vector must have {len(self.network.loads)} entries')
        p_max = np.array([g.p_max_mw for g in self.network.generators])
        if np.any(self.gen_available_mw < 0) or np.any(self.gen_available_mw > p_max + 1e-9):
            raise ValueError('available generation must lie in [0, p_max]')
        if np.any(self.load_mw < 0):
            raise ValueError('loads must be non-negative')
        if not np.all(np.isfinite(self.gen_cost_gbp_mwh)):
            raise ValueError('generator costs must be finite')


@dataclass(frozen=True)
class LmpComponents:
    """One row of a price decomposition."""
    bus: int
    energy: float
    loss: float
    congestion: float
    total: float


@dataclass
class OpfSolution:
    """Dispatch and prices for one timestep; arrays are per generator or per bus."""
    bus_ids: List[int]
    dispatch_mw: np.ndarray
    lmp_gbp_mwh: np.ndarray
    lmp_energy: np.ndarray
    lmp_loss: np.ndarray
    lmp_congestion: np.ndarray
    curtailed_mw: np.ndarray
    binding_branches: List[Tuple[int, str, float]]
    sl_iterations: int
    converged: bool
    total_loss_mw: float = 0.0


def _bus_sum(n: int, index: np.ndarray, values: np.ndarray) -> np.ndarray:
    out = np.zeros(n)
    np.add.at(out, index, values)
    return out


class _Linearization:
    """Dispatch LP rows around one AC operating point."""

    def __init__(self, network: Network, sol: PowerFlowSolution, voltage_support: bool):
        self.sens, self.factors = linearize(network, sol, voltage_support)
        self.p0 = sol.bus_p_mw.copy()
        self.p0[network.slack_index] = 0.0
        self.flow0 = sol.branch_p_from_mw
        self.loss0 = sol.total_loss_mw

    def balance_row(self, gen_bus, demand) -> Tuple[np.ndarray, float]:
        s = self.sens
        coeff = 1.0 + s[gen_bus]
        rhs = float(np.sum((1.0 + s) * demand) + self.loss0 + s @ self.p0)
        return coeff, rhs

    def flow_rows(self, k: int, gen_bus, demand, fwd: float, rev: float):
        sf = self.factors[k]
        coeff = sf[gen_bus]
        shift = float(sf @ self.p0 + sf @ demand)
        rows = []
        if np.isfinite(fwd):
            rows.append((k, FORWARD, coeff, fwd - self.flow0[k] + shift))
        if np.isfinite(rev):
            rows.append((k, REVERSE, -coeff, rev + self.flow0[k] - shift))
        return rows


class _Dispatch:
    """Builds injections and runs the AC step for a dispatch vector."""

    def __init__(self, problem: DispatchProblem, settings: OpfSettings):
        network = problem.network
        self.network = network
        self.settings = settings
        self.gen_bus = network.gen_bus_indices()
        load_bus = network.load_bus_indices()
        n = network.n_bus
        self.demand = _bus_sum(n, load_bus, problem.load_mw)
        q_ratio = np.array([ld.q_ratio for ld in network.loads])
        self.demand_q = _bus_sum(n, load_bus, problem.load_mw * q_ratio)
        pf = settings.generator_power_factor
        self.gen_q_ratio = float(np.tan(np.arccos(pf))) if pf < 1 else 0.0

    def ac(self, dispatch: np.ndarray) -> PowerFlowSolution:
        n = self.network.n_bus
        gen_p = _bus_sum(n, self.gen_bus, dispatch)
        gen_q = gen_p * self.gen_q_ratio
        inj = InjectionSet(gen_p - self.demand, gen_q - self.demand_q)
        return solve_ac(self.network, inj, self.settings.power_flow)


def _limits(network: Network) -> Tuple[np.ndarray, np.ndarray]:
    fwd = np.array([br.forward_limit_mw for br in network.branches], dtype=float)
    rev = np.array([br.reverse_limit_mw for br in network.branches], dtype=float)
    return fwd, rev


def _screen(flow: np.ndarray, fwd: np.ndarray, rev: np.ndarray, fraction: float) -> np.ndarray:
    limited = np.isfinite(fwd) | np.isfinite(rev)
    with np.errstate(invalid='ignore'):
        near = (flow >= fraction * fwd) | (-flow >= fraction * rev)
    return limited & near


def solve_opf(problem: DispatchProblem, settings: Optional[OpfSettings] = None) -> OpfSolution:
    """
    Solve one timestep's dispatch and nodal prices.

    Raises:
        InfeasibleDispatchError: load cannot be met within unit and branch limits
        SlpDivergenceError: AC step failed, or dispatch still oscillating at the
            iteration limit
    """
    settings = settings or OpfSettings()
    network = require_valid(problem.network)
    gens = network.generators
    n_gen = len(gens)

    p_min = np.array([g.p_min_mw for g in gens], dtype=float)
    grid = np.array([g.is_grid for g in gens], dtype=bool)
    upper = problem.gen_available_mw
    lower = np.minimum(p_min, upper)
    total_load = float(problem.load_mw.sum())
    if upper.sum() < total_load:
        raise InfeasibleDispatchError(
            f'available {upper.sum():.1f} MW including grid import is below load {total_load:.1f} MW')

    runner = _Dispatch(problem, settings)
    fwd, rev = _limits(network)
    sol = runner.ac(np.zeros(n_gen))
    if not sol.converged:
        raise SlpDivergenceError('initial AC power flow did not converge')

    active = _screen(sol.branch_p_from_mw, fwd, rev, settings.screen_fraction)
    last = np.zeros(n_gen)
    last_move = np.zeros(n_gen)
    step = np.full(n_gen, np.inf)
    converged = False
    change = np.inf

    for iteration in range(1, settings.max_iterations + 1):
        lin = _Linearization(network, sol, settings.voltage_support)
        balance, balance_rhs = lin.balance_row(runner.gen_bus, runner.demand)
        rows = []
        for k in np.flatnonzero(active):
            rows.extend(lin.flow_rows(int(k), runner.gen_bus, runner.demand, fwd[k], rev[k]))

        lp = LinearProgram(
            c=problem.gen_cost_gbp_mwh,
            A_eq=balance[np.newaxis, :],
            b_eq=np.array([balance_rhs]),
            A_ub=np.array([r[2] for r in rows]) if rows else None,
            b_ub=np.array([r[3] for r in rows]) if rows else None,
            lb=np.maximum(lower, last - step),
            ub=np.minimum(upper, last + step),
        )
        result = solve(lp, settings.lp)
        if result.status == INFEASIBLE and np.isfinite(step).any():
            logger.debug('SLP iteration %d: damped LP infeasible, retrying without step bounds', iteration)
            lp.lb, lp.ub = lower, upper
            result = solve(lp, settings.lp)
        if not result.optimal:
            raise InfeasibleDispatchError(f'dispatch LP {result.status} at SLP iteration {iteration}')

        dispatch = result.x
        move = dispatch - last
        change = float(np.max(np.abs(move))) if n_gen else 0.0

        sol = runner.ac(dispatch)
        if not sol.converged:
            raise SlpDivergenceError(f'AC power flow did not converge at SLP iteration {iteration}')
        logger.debug('SLP iteration %d: max dispatch change %.4f MW, losses %.3f MW',
                     iteration, change, sol.total_loss_mw)

        # Branches that bind now, or that the AC point pushes near a limit
        binding = np.zeros(network.n_branch, dtype=bool)
        for (k, _, _, _), mu in zip(rows, result.y_ub):
            if mu > 0:
                binding[k] = True
        newly = _screen(sol.branch_p_from_mw, fwd, rev, settings.screen_fraction) & ~active
        violated = newly & _screen(sol.branch_p_from_mw, fwd, rev, 1.0)
        if violated.any():
            logger.warning('SLP iteration %d: AC flow exceeds the limit of unscreened branches %s',
                           iteration, np.flatnonzero(violated).tolist())
        elif newly.any():
            logger.debug('SLP iteration %d: screening in branches %s', iteration, np.flatnonzero(newly).tolist())
        active |= newly | binding

        if change < settings.dispatch_tol_mw and not newly.any():
            converged = True
            break

        # Grid units balance the system and are never step-bounded
        reversed_ = (move * last_move < 0) & ~grid
        step = np.where(reversed_, settings.step_shrink * np.abs(move), step)
        last = dispatch
        last_move = move

    if not converged:
        if change > settings.divergence_mw:
            raise SlpDivergenceError(
                f'dispatch still moving {change:.3f} MW after {settings.max_iterations} iterations')
        logger.warning('SLP stopped after %d iterations with dispatch change %.4f MW', iteration, change)

    # Prices from the final LP, in the linearization it was built on
    lam = float(result.y_eq[0])
    energy = np.full(network.n_bus, lam)
    loss = lam * lin.sens
    congestion = np.zeros(network.n_bus)
    binding_branches = []
    for (k, direction, _, _), mu in zip(rows, result.y_ub):
        if mu == 0:
            continue
        sign = 1.0 if direction == FORWARD else -1.0
        congestion -= sign * mu * lin.factors[k]
        binding_branches.append((k, direction, float(mu)))

    profile = np.array([g.profile_driven for g in gens], dtype=bool)
    curtailed = np.where(profile, np.maximum(upper - dispatch, 0.0), 0.0)

    return OpfSolution(
        bus_ids=list(network.bus_ids),
        dispatch_mw=dispatch.copy(),
        lmp_gbp_mwh=energy + loss + congestion,
        lmp_energy=energy,
        lmp_loss=loss,
        lmp_congestion=congestion,
        curtailed_mw=curtailed,
        binding_branches=binding_branches,
        sl_iterations=iteration,
        converged=converged,
        total_loss_mw=sol.total_loss_mw,
    )


def decompose_lmp(solution: OpfSolution) -> List[LmpComponents]:
    """Per-bus (energy, loss, congestion, total) rows; total is the solution's LMP."""
    return [
        LmpComponents(
            bus=bus_id,
            energy=float(solution.lmp_energy[i]),
            loss=float(solution.lmp_loss[i]),
            congestion=float(solution.lmp_congestion[i]),
            total=float(solution.lmp_gbp_mwh[i]),
        )
        for i, bus_id in enumerate(solution.bus_ids)
    ]
