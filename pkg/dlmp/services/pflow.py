"""
Newton-Raphson AC power flow.

Polar formulation with a single slack bus; every other bus is PQ. Besides
the operating point this module produces the two linearizations the
dispatch LP needs: marginal losses per bus and branch shift factors, both
read off the power-flow Jacobian at the solved point.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy import linalg

from dlmp.exceptions import PowerFlowNotConvergedError, SingularSystemError
from dlmp.services.netmodel import Network, branch_matrices, build_admittance, require_valid

logger = logging.getLogger(__name__)

TOLERANCE_PU = 1e-8
MAX_ITERATIONS = 30
# Mismatch beyond this is treated as divergence, not a step to take
BLOWUP_PU = 1e6


@dataclass(frozen=True)
class PowerFlowSettings:
    """Newton-Raphson controls."""
    tolerance_pu: float = TOLERANCE_PU
    max_iterations: int = MAX_ITERATIONS

    @classmethod
    def from_config(cls, config: dict) -> 'PowerFlowSettings':
        section = config.get('power_flow', {})
        return cls(
            tolerance_pu=float(section.get('tolerance_pu', TOLERANCE_PU)),
            max_iterations=int(section.get('max_iterations', MAX_ITERATIONS)),
        )


@dataclass(frozen=True)
class InjectionSet:
    """Net bus injections (generation minus load); the slack entry of p is ignored."""
    p_mw: np.ndarray
    q_mvar: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'p_mw', np.asarray(self.p_mw, dtype=float))
        object.__setattr__(self, 'q_mvar', np.asarray(self.q_mvar, dtype=float))
        if self.p_mw.shape != self.q_mvar.shape or self.p_mw.ndim != 1:
            raise ValueError('p_mw and q_mvar must be 1-D arrays of equal length')

    @classmethod
    def zeros(cls, n_bus: int) -> 'InjectionSet':
        return cls(np.zeros(n_bus), np.zeros(n_bus))


@dataclass(frozen=True)
class PowerFlowSolution:
    """Operating point; bus_p_mw/bus_q_mvar are the computed injections."""
    v_mag: np.ndarray
    v_ang: np.ndarray
    branch_p_from_mw: np.ndarray
    branch_p_to_mw: np.ndarray
    bus_p_mw: np.ndarray
    bus_q_mvar: np.ndarray
    total_loss_mw: float
    iterations: int
    converged: bool
    mismatch_pu: float

    @property
    def voltage(self) -> np.ndarray:
        return self.v_mag * np.exp(1j * self.v_ang)


class _Jacobian:
    """Power-flow Jacobian pieces at one voltage vector."""

    def __init__(self, ybus: np.ndarray, v: np.ndarray, pq: np.ndarray):
        ibus = ybus @ v
        vnorm = v / np.abs(v)
        # dS/dVm and dS/dVa in the usual complex-derivative form
        self.ds_dvm = v[:, np.newaxis] * np.conj(ybus * vnorm[np.newaxis, :]) + np.diag(np.conj(ibus) * vnorm)
        self.ds_dva = 1j * v[:, np.newaxis] * np.conj(np.diag(ibus) - ybus * v[np.newaxis, :])
        self.pq = pq

    def matrix(self) -> np.ndarray:
        pq = self.pq
        dva = self.ds_dva[np.ix_(pq, pq)]
        dvm = self.ds_dvm[np.ix_(pq, pq)]
        return np.block([[dva.real, dvm.real], [dva.imag, dvm.imag]])

    def slack_row(self, slack: int) -> np.ndarray:
        """Gradient of the slack bus real injection with respect to (Va_pq, Vm_pq)."""
        return np.concatenate([self.ds_dva[slack, self.pq].real, self.ds_dvm[slack, self.pq].real])


def _non_slack(network: Network) -> np.ndarray:
    return np.array([i for i in range(network.n_bus) if i != network.slack_index], dtype=int)


def _branch_flows(yf: np.ndarray, yt: np.ndarray, network: Network, v: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    f, t = network.branch_ends()
    sf = v[f] * np.conj(yf @ v)
    st = v[t] * np.conj(yt @ v)
    return sf.real * network.base_mva, st.real * network.base_mva


def solve_ac(network: Network, inj: InjectionSet,
             settings: Optional[PowerFlowSettings] = None) -> PowerFlowSolution:
    """
    Solve the AC power flow from a flat start.

    Args:
        network: Validated network
        inj: Specified injections in MW / MVAr, one entry per bus
        settings: Tolerance and iteration limit

    Returns:
        PowerFlowSolution; converged is False (and the last iterate is
        returned) when the tolerance is not met within the iteration limit

    Raises:
        SingularSystemError: the Jacobian could not be factorised
    """
    settings = settings or PowerFlowSettings()
    require_valid(network)
    n = network.n_bus
    if inj.p_mw.shape != (n,):
        raise ValueError(f'injection vector has {inj.p_mw.size} entries for {n} buses')

    ybus = build_admittance(network)
    pq = _non_slack(network)
    npq = len(pq)
    s_spec = (inj.p_mw + 1j * inj.q_mvar) / network.base_mva

    vm = np.ones(n)
    va = np.zeros(n)
    v = vm * np.exp(1j * va)
    converged = False
    norm = np.inf
    iteration = 0

    with np.errstate(all='ignore'):
        while True:
            mis = v * np.conj(ybus @ v) - s_spec
            f_vec = np.concatenate([mis[pq].real, mis[pq].imag])
            norm = float(np.max(np.abs(f_vec))) if npq else 0.0
            logger.debug('NR iteration %d mismatch %.3e', iteration, norm)
            if norm < settings.tolerance_pu:
                converged = True
                break
            if not np.isfinite(norm) or norm > BLOWUP_PU or iteration >= settings.max_iterations:
                break

            jac = _Jacobian(ybus, v, pq).matrix()
            try:
                lu = linalg.lu_factor(jac, check_finite=True)
            except (linalg.LinAlgError, ValueError) as e:
                raise SingularSystemError(iteration + 1) from e
            if np.any(np.diag(lu[0]) == 0):
                raise SingularSystemError(iteration + 1)
            dx = -linalg.lu_solve(lu, f_vec)
            iteration += 1

            va[pq] += dx[:npq]
            vm[pq] += dx[npq:]
            v = vm * np.exp(1j * va)

    if not converged:
        logger.debug('NR stopped after %d iterations, mismatch %.3e', iteration, norm)

    s_calc = v * np.conj(ybus @ v) * network.base_mva
    yf, yt = branch_matrices(network)
    p_from, p_to = _branch_flows(yf, yt, network, v)

    return PowerFlowSolution(
        v_mag=vm.copy(),
        v_ang=va.copy(),
        branch_p_from_mw=p_from,
        branch_p_to_mw=p_to,
        bus_p_mw=s_calc.real,
        bus_q_mvar=s_calc.imag,
        total_loss_mw=float(np.sum(p_from + p_to)),
        iterations=iteration,
        converged=converged,
        mismatch_pu=norm,
    )


def _flow_gradient(network: Network, v: np.ndarray, pq: np.ndarray) -> np.ndarray:
    """Gradient of every branch's from-end real flow with respect to (Va_pq, Vm_pq)."""
    yf, _ = branch_matrices(network)
    f, _ = network.branch_ends()
    i_from = yf @ v
    vnorm = v / np.abs(v)
    cf = np.zeros_like(yf)
    cf[np.arange(network.n_branch), f] = 1.0
    dsf_dva = np.conj(i_from)[:, np.newaxis] * cf * (1j * v)[np.newaxis, :] \
        + v[f][:, np.newaxis] * np.conj(yf * (1j * v)[np.newaxis, :])
    dsf_dvm = v[f][:, np.newaxis] * np.conj(yf * vnorm[np.newaxis, :]) \
        + np.conj(i_from)[:, np.newaxis] * cf * vnorm[np.newaxis, :]
    return np.hstack([dsf_dva[:, pq].real, dsf_dvm[:, pq].real])


def linearize(network: Network, sol: PowerFlowSolution,
              voltage_support: bool = False) -> Tuple[np.ndarray, np.ndarray]:
    """
    Loss sensitivities and shift factors from one Jacobian factorization.

    With voltage_support the bus voltage magnitudes are held at the solved
    point (reactive injections free) and only the angle block of the
    Jacobian is used. A radial area behind a single branch then couples to
    the rest of the network through that branch's MW flow alone.

    Returns:
        (sensitivities per bus, shift factor matrix n_branch x n_bus)

    Raises:
        PowerFlowNotConvergedError: sol did not converge
    """
    if not sol.converged:
        raise PowerFlowNotConvergedError('sensitivities need a converged power flow')
    ybus = build_admittance(network)
    slack = network.slack_index
    pq = _non_slack(network)
    npq = len(pq)
    v = sol.voltage

    jac = _Jacobian(ybus, v, pq)
    grad = _flow_gradient(network, v, pq)
    slack_row = jac.slack_row(slack)
    matrix = jac.matrix()
    if voltage_support:
        matrix = matrix[:npq, :npq]
        slack_row = slack_row[:npq]
        grad = grad[:, :npq]
    rhs = np.column_stack([slack_row, grad.T])
    try:
        adj = linalg.lu_solve(linalg.lu_factor(matrix.T), rhs)
    except linalg.LinAlgError as e:
        raise SingularSystemError(sol.iterations) from e

    # Ploss = P_slack(x) + sum of specified P, so dPloss/dP_k = 1 + (J^-T g)_k
    sens = np.zeros(network.n_bus)
    sens[pq] = -(1.0 + adj[:npq, 0])

    # (H J^-1) restricted to the P-injection columns
    factors = np.zeros((network.n_branch, network.n_bus))
    factors[:, pq] = adj[:npq, 1:].T
    return sens, factors


def loss_sensitivities(network: Network, sol: PowerFlowSolution) -> np.ndarray:
    """
    Marginal losses per MW of extra withdrawal at each bus.

    Uses the adjoint of the Jacobian: the slack absorbs the change, reactive
    injections are held fixed. The slack entry is zero.

    Raises:
        PowerFlowNotConvergedError: sol did not converge
    """
    return linearize(network, sol)[0]


def shift_factors(network: Network, sol: PowerFlowSolution) -> np.ndarray:
    """
    Sensitivity of each branch's from-end MW flow to injection at each bus.

    Slack-referenced (slack column is zero), reactive injections held
    fixed; evaluated at the solved operating point.

    Raises:
        PowerFlowNotConvergedError: sol did not converge
    """
    return linearize(network, sol)[1]
