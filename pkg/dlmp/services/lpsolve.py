"""
Bounded-variable revised simplex.

Solves  min c.x  s.t.  A_eq x = b_eq,  A_ub x <= b_ub,  lb <= x <= ub
and returns the basic dual solution alongside the primal one. Dual values
come straight from the final basis, so prices behind a binding constraint
are exact (a zero-cost marginal unit gives a dual of 0, not 1e-9).

Pricing is Dantzig's rule with a switch to Bland's rule after a run of
degenerate pivots; both rules break ties by lowest index, so repeated
solves of the same problem take the same path.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import linalg

from dlmp.exceptions import LpDimensionError, LpNumericalError

logger = logging.getLogger(__name__)

OPTIMAL = 'optimal'
INFEASIBLE = 'infeasible'
UNBOUNDED = 'unbounded'

FEASIBILITY_TOL = 1e-9
OPTIMALITY_TOL = 1e-9
PIVOT_TOL = 1e-9
DEGENERATE_LIMIT = 50


@dataclass(frozen=True)
class LpSettings:
    """Simplex tolerances."""
    feasibility_tol: float = FEASIBILITY_TOL
    optimality_tol: float = OPTIMALITY_TOL
    degenerate_limit: int = DEGENERATE_LIMIT

    @classmethod
    def from_config(cls, config: dict) -> 'LpSettings':
        section = config.get('lp', {})
        return cls(
            feasibility_tol=float(section.get('feasibility_tol', FEASIBILITY_TOL)),
            optimality_tol=float(section.get('optimality_tol', OPTIMALITY_TOL)),
            degenerate_limit=int(section.get('degenerate_limit', DEGENERATE_LIMIT)),
        )


@dataclass
class LinearProgram:
    """
    LP data. Missing systems default to empty; bounds default to [0, +inf).
    """
    c: np.ndarray
    A_eq: Optional[np.ndarray] = None
    b_eq: Optional[np.ndarray] = None
    A_ub: Optional[np.ndarray] = None
    b_ub: Optional[np.ndarray] = None
    lb: Optional[np.ndarray] = None
    ub: Optional[np.ndarray] = None

    def __post_init__(self):
        self.c = np.atleast_1d(np.asarray(self.c, dtype=float))
        n = self.c.size
        self.A_eq, self.b_eq = _system(self.A_eq, self.b_eq, n, 'eq')
        self.A_ub, self.b_ub = _system(self.A_ub, self.b_ub, n, 'ub')
        self.lb = np.zeros(n) if self.lb is None else np.atleast_1d(np.asarray(self.lb, dtype=float))
        self.ub = np.full(n, np.inf) if self.ub is None else np.atleast_1d(np.asarray(self.ub, dtype=float))
        if self.lb.shape != (n,) or self.ub.shape != (n,):
            raise LpDimensionError(f'bounds must have {n} entries')
        if not np.all(np.isfinite(self.c)):
            raise LpDimensionError('cost vector must be finite')

    @property
    def n(self) -> int:
        return self.c.size


def _system(a, b, n: int, name: str):
    if a is None and b is None:
        return np.zeros((0, n)), np.zeros(0)
    if a is None or b is None:
        raise LpDimensionError(f'A_{name} and b_{name} must be given together')
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if a.size == 0 and b.size == 0:
        return np.zeros((0, n)), np.zeros(0)
    if a.shape != (b.size, n):
        raise LpDimensionError(f'A_{name} has shape {a.shape}, expected ({b.size}, {n})')
    if not np.all(np.isfinite(b)):
        raise LpDimensionError(f'b_{name} must be finite')
    return a, b


@dataclass
class LpSolution:
    """
    Status-tagged result.

    y_ub is reported non-negative: the cost decrease per unit relaxation of
    each <= row. z_bounds are the reduced costs c - A^T y of the structural
    variables (zero for basic ones).
    """
    status: str
    x: np.ndarray = field(default_factory=lambda: np.zeros(0))
    y_eq: np.ndarray = field(default_factory=lambda: np.zeros(0))
    y_ub: np.ndarray = field(default_factory=lambda: np.zeros(0))
    z_bounds: np.ndarray = field(default_factory=lambda: np.zeros(0))
    objective: float = np.nan
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL

    def dual_objective(self, lp: LinearProgram) -> float:
        return float(lp.b_eq @ self.y_eq - lp.b_ub @ self.y_ub + self.z_bounds @ self.x)


class _Simplex:
    """Working state of one solve: standard-form columns, bounds and basis."""

    def __init__(self, a, b, lo, hi, settings: LpSettings):
        self.a = a
        self.b = b
        self.lo = lo
        self.hi = hi
        self.settings = settings
        self.m, self.n = a.shape
        self.x = np.zeros(self.n)
        self.basis = np.zeros(self.m, dtype=int)
        self.is_basic = np.zeros(self.n, dtype=bool)
        self.iterations = 0
        self._lu = None

    def set_basis(self, basis):
        self.basis = np.asarray(basis, dtype=int)
        self.is_basic[:] = False
        self.is_basic[self.basis] = True
        self._lu = None

    def _factor(self):
        if self._lu is None:
            bmat = self.a[:, self.basis]
            lu, piv = linalg.lu_factor(bmat, check_finite=False)
            diag = np.abs(np.diag(lu))
            if diag.size and diag.min() <= 1e-13 * max(1.0, diag.max()):
                raise LpNumericalError(f'singular basis after {self.iterations} iterations')
            self._lu = (lu, piv)
        return self._lu

    def _solve(self, rhs: np.ndarray, trans: int = 0) -> np.ndarray:
        if self.m == 0:
            return np.zeros(0)
        return linalg.lu_solve(self._factor(), rhs, trans=trans, check_finite=False)

    def _update_basic_values(self):
        xn = np.where(self.is_basic, 0.0, self.x)
        self.x[self.basis] = self._solve(self.b - self.a @ xn)

    def run(self, cost: np.ndarray, max_iterations: int) -> str:
        tol = self.settings.optimality_tol
        bland = False
        degenerate = 0
        free = np.isinf(self.lo) & np.isinf(self.hi)
        movable = self.hi > self.lo

        while True:
            self._update_basic_values()
            if not np.all(np.isfinite(self.x)):
                raise LpNumericalError(f'non-finite iterate after {self.iterations} iterations')
            y = self._solve(cost[self.basis], trans=1)
            d = cost - self.a.T @ y

            nonbasic = ~self.is_basic & movable
            at_lo = self.x == self.lo
            at_hi = self.x == self.hi
            eligible = nonbasic & (
                (free & (np.abs(d) > tol))
                | (at_lo & ~free & (d < -tol))
                | (at_hi & ~free & (d > tol))
            )
            if not eligible.any():
                return OPTIMAL

            candidates = np.flatnonzero(eligible)
            if bland:
                j = int(candidates[0])
            else:
                j = int(candidates[np.argmax(np.abs(d[candidates]))])
            direction = 1.0 if d[j] < 0 else -1.0

            w = self._solve(self.a[:, j])
            rate = -direction * w
            xb = self.x[self.basis]
            lob = self.lo[self.basis]
            hib = self.hi[self.basis]
            steps = np.full(self.m, np.inf)
            down = rate < -PIVOT_TOL
            up = rate > PIVOT_TOL
            steps[down] = (xb[down] - lob[down]) / -rate[down]
            steps[up] = (hib[up] - xb[up]) / rate[up]
            steps = np.maximum(steps, 0.0)

            t_ratio = steps.min() if self.m else np.inf
            t_flip = self.hi[j] - self.lo[j]
            if not np.isfinite(t_ratio) and not np.isfinite(t_flip):
                return UNBOUNDED

            self.iterations += 1
            if self.iterations > max_iterations:
                raise LpNumericalError(f'iteration limit {max_iterations} reached')

            if t_flip <= t_ratio:
                # Bound flip, basis unchanged
                self.x[j] = self.hi[j] if direction > 0 else self.lo[j]
                step = t_flip
            else:
                ties = np.flatnonzero(steps <= t_ratio + 1e-12)
                if bland:
                    r = int(ties[np.argmin(self.basis[ties])])
                else:
                    r = int(ties[np.argmax(np.abs(rate[ties]))])
                leaving = self.basis[r]
                self.x[leaving] = self.lo[leaving] if rate[r] < 0 else self.hi[leaving]
                if free[leaving]:
                    self.x[leaving] = 0.0
                self.x[j] = self.x[j] + direction * t_ratio
                basis = self.basis.copy()
                basis[r] = j
                self.set_basis(basis)
                step = t_ratio

            if step < 1e-12:
                degenerate += 1
                if not bland and degenerate > self.settings.degenerate_limit:
                    logger.debug('switching to Bland rule after %d degenerate pivots', degenerate)
                    bland = True
            else:
                degenerate = 0

    def duals(self, cost: np.ndarray):
        y = self._solve(cost[self.basis], trans=1)
        d = cost - self.a.T @ y
        d[self.basis] = 0.0
        return y, d


def _start_value(lo: float, hi: float) -> float:
    if np.isfinite(lo):
        return lo
    if np.isfinite(hi):
        return hi
    return 0.0


def solve(lp: LinearProgram, settings: Optional[LpSettings] = None) -> LpSolution:
    """
    Solve a linear program with the two-phase bounded simplex.

    Returns:
        LpSolution with status optimal, infeasible or unbounded

    Raises:
        LpDimensionError: inconsistent array shapes
        LpNumericalError: singular basis or iteration limit
    """
    settings = settings or LpSettings()
    n = lp.n
    me, mu = lp.b_eq.size, lp.b_ub.size
    m = me + mu

    if np.any(lp.lb > lp.ub):
        return LpSolution(INFEASIBLE)

    # Standard form: structural | slacks for <= rows | artificials
    a = np.zeros((m, n + mu))
    a[:me, :n] = lp.A_eq
    a[me:, :n] = lp.A_ub
    a[me:, n:] = np.eye(mu)
    b = np.concatenate([lp.b_eq, lp.b_ub])
    lo = np.concatenate([lp.lb, np.zeros(mu)])
    hi = np.concatenate([lp.ub, np.full(mu, np.inf)])

    x0 = np.array([_start_value(l, h) for l, h in zip(lp.lb, lp.ub)])
    residual = b - a[:, :n] @ x0

    # Slack crash: a <= row whose residual is non-negative starts with its slack basic
    basis = []
    art_rows = []
    for i in range(m):
        if i >= me and residual[i] >= 0:
            basis.append(n + (i - me))
        else:
            art_rows.append(i)
    n_art = len(art_rows)
    art = np.zeros((m, n_art))
    for k, i in enumerate(art_rows):
        art[i, k] = 1.0 if residual[i] >= 0 else -1.0
    basis_art = [n + mu + k for k in range(n_art)]

    a_full = np.hstack([a, art])
    lo_full = np.concatenate([lo, np.zeros(n_art)])
    hi_full = np.concatenate([hi, np.full(n_art, np.inf)])
    order = np.empty(m, dtype=int)
    order[[i for i in range(m) if i not in art_rows]] = basis
    order[art_rows] = basis_art

    simplex = _Simplex(a_full, b, lo_full, hi_full, settings)
    simplex.x[:n] = x0
    simplex.set_basis(order)
    max_iterations = 50 * (m + a_full.shape[1]) + 1000

    if n_art:
        phase1 = np.zeros(a_full.shape[1])
        phase1[n + mu:] = 1.0
        simplex.run(phase1, max_iterations)
        infeasibility = float(simplex.x[n + mu:].sum())
        scale = max(1.0, float(np.max(np.abs(b))) if m else 1.0)
        logger.debug('phase 1 done in %d iterations, infeasibility %.3e', simplex.iterations, infeasibility)
        if infeasibility > settings.feasibility_tol * scale * max(1, n_art):
            return LpSolution(INFEASIBLE, iterations=simplex.iterations)
        # Artificials stay in the problem fixed at zero
        simplex.hi[n + mu:] = 0.0
        nonbasic_art = ~simplex.is_basic[n + mu:]
        simplex.x[n + mu:][nonbasic_art] = 0.0

    cost = np.concatenate([lp.c, np.zeros(mu + n_art)])
    status = simplex.run(cost, max_iterations)
    logger.debug('simplex %s after %d iterations', status, simplex.iterations)
    if status == UNBOUNDED:
        return LpSolution(UNBOUNDED, iterations=simplex.iterations)

    y, d = simplex.duals(cost)
    x = simplex.x[:n].copy()
    # Snap basic values that drifted past a bound by rounding
    x = np.clip(x, lp.lb, lp.ub)
    y_ub = -y[me:]
    y_ub[np.abs(y_ub) <= settings.optimality_tol] = 0.0
    if np.any(y_ub < 0):
        raise LpNumericalError('negative inequality dual at optimum')

    return LpSolution(
        status=OPTIMAL,
        x=x,
        y_eq=y[:me].copy(),
        y_ub=y_ub,
        z_bounds=d[:n].copy(),
        objective=float(lp.c @ x),
        iterations=simplex.iterations,
    )
