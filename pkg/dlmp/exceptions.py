"""
Error types raised by the LMP toolkit.

Every failure a caller is expected to handle derives from DlmpError so the
command line can map it to exit code 1 in one place.
"""

from typing import Optional


class DlmpError(Exception):
    """Base class for toolkit errors."""


class NetworkValidationError(DlmpError):
    """A network failed validation and cannot be used downstream."""

    def __init__(self, report):
        self.report = report
        super().__init__('network failed validation: ' + '; '.join(report.messages()))


class AdmittanceError(DlmpError):
    """The admittance matrix cannot be built (zero impedance, no branches)."""


class SingularSystemError(DlmpError):
    """The Newton-Raphson Jacobian became singular."""

    def __init__(self, iteration: int):
        self.iteration = iteration
        super().__init__(f'singular system at Newton iteration {iteration}')


class PowerFlowNotConvergedError(DlmpError):
    """Sensitivities were requested from an unconverged power flow."""


class LpDimensionError(DlmpError):
    """The linear program's arrays have inconsistent shapes."""


class LpNumericalError(DlmpError):
    """The simplex method broke down numerically."""


class InfeasibleDispatchError(DlmpError):
    """Load cannot be met within generator and branch limits."""

    def __init__(self, detail: Optional[str] = None):
        message = 'infeasible dispatch'
        if detail:
            message = f'{message}: {detail}'
        super().__init__(message)


class SlpDivergenceError(DlmpError):
    """Sequential linear programming failed to settle."""

    def __init__(self, detail: Optional[str] = None):
        message = 'SLP divergence'
        if detail:
            message = f'{message}: {detail}'
        super().__init__(message)


class ProfileFormatError(DlmpError):
    """A profile CSV is malformed; row is the 1-based data row."""

    def __init__(self, message: str, row: Optional[int] = None):
        self.row = row
        if row is not None:
            message = f'row {row}: {message}'
        super().__init__(message)


class UnknownBusError(DlmpError, KeyError):
    """A bus id is not part of the network or result set."""

    def __init__(self, bus_id):
        self.bus_id = bus_id
        super().__init__(f'unknown bus {bus_id}')

    def __str__(self):
        return self.args[0]


class DayRangeError(DlmpError, IndexError):
    """A requested day lies outside the run."""


class ResultSetError(DlmpError):
    """A run directory is missing files or holds inconsistent tables."""
