"""
Fundamental solutions, transfer function evaluation and the V, U, Z factors of
the Neumann-series representation G(s) = Z(s) (I - M U(s))^-1 K^-1.
"""

import logging
from dataclasses import dataclass
from typing import Iterable, List

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from .delta_calculus import AtomicMeasure, delay_basis
from .errors import NumericalError, ParameterError, ResolventError
from .spectral import BoundaryDecomposition, DiagonalForm
from .system_model import HyperbolicSystem, SpatialMatrixFunction, _check_domain

logger = logging.getLogger(__name__)

ODE_TOL = 1e-11
RESOLVENT_CONDITION_LIMIT = 1e12


@dataclass(frozen=True, eq=False)
class TransferSample:
    s: complex
    G: np.ndarray
    boundary_condition_number: float


def _generator(sys, xi, s, P1inv):
    return -P1inv @ (sys.P0_at(xi) - s * np.linalg.inv(sys.H_at(xi)))


def fundamental_solution(sys: HyperbolicSystem, s: complex, zeta: float, ode_tol: float = ODE_TOL):
    """Psi_zeta^s solving v' = -P1^-1 (P0 - s H^-1) v with Psi_a^s = I"""
    _check_domain(zeta, sys.a, sys.b)
    zeta = min(max(float(zeta), sys.a), sys.b)
    n = sys.n
    s = complex(s)
    P1inv = np.linalg.inv(sys.P1)

    if zeta == sys.a:
        return np.eye(n, dtype=complex)

    if sys.is_constant:
        return expm((zeta - sys.a) * _generator(sys, sys.a, s, P1inv))

    # coefficients are only piecewise smooth, so integrate segment by segment
    breakpoints = sys.sample_grid()
    breakpoints = np.concatenate([breakpoints[breakpoints < zeta], [zeta]])

    def rhs(xi, y):
        return (_generator(sys, xi, s, P1inv) @ y.reshape(n, n)).ravel()

    state = np.eye(n, dtype=complex).ravel()
    for left, right in zip(breakpoints[:-1], breakpoints[1:]):
        solution = solve_ivp(rhs, (left, right), state, method="RK45", rtol=ode_tol, atol=ode_tol)
        if not solution.success:
            raise NumericalError(f"fundamental solution integration failed on [{left}, {right}]: {solution.message}")
        state = solution.y[:, -1]
    return state.reshape(n, n)


def transfer_eval(sys: HyperbolicSystem, s: complex, ode_tol: float = ODE_TOL,
                  resolvent_condition_limit: float = RESOLVENT_CONDITION_LIMIT) -> TransferSample:
    """G(s) = WC [Psi_b; I] (WB [Psi_b; I])^-1"""
    psi_b = fundamental_solution(sys, s, sys.b, ode_tol)
    stacked = np.vstack([psi_b, np.eye(sys.n)])
    boundary = sys.WB @ stacked
    output = sys.WC @ stacked

    condition = float(np.linalg.cond(boundary))
    if not np.isfinite(condition) or condition > resolvent_condition_limit:
        raise ResolventError(
            f"s outside usable resolvent region at s={complex(s)}: boundary matrix singular (cond {condition:.3e})"
        )
    G = np.linalg.solve(boundary.T, output.T).T
    return TransferSample(complex(s), G, condition)


def transfer_grid(sys: HyperbolicSystem, s_values: Iterable[complex], **kwargs) -> List[TransferSample]:
    return [transfer_eval(sys, s, **kwargs) for s in s_values]


def _require_zero_P0D(diag):
    if not diag.P0D_is_zero:
        raise ParameterError(f"closed-form V/U requires P0^D = 0 (|P0^D| = {diag.P0D_residual:.3e})")


def vu_matrices(diag: DiagonalForm, s: complex):
    """V(s) = Q- + Q+ Psi_b^s, its inverse, and U(s) = diag(exp(-s tau_j))"""
    _require_zero_P0D(diag)
    tau = np.asarray(diag.tau)
    s = complex(s)
    growth = np.exp(s * tau)
    V = np.ones(diag.n, dtype=complex)
    V[: diag.m] = growth[: diag.m]
    U = np.exp(-s * tau)
    return np.diag(V), np.diag(1 / V), np.diag(U)


def _z_blocks(diag, u):
    """Diagonals of the two blocks of [Psi_b; I] V^-1 given u_j = exp(-s tau_j)"""
    top = np.ones(diag.n, dtype=np.result_type(u, float))
    bottom = np.ones(diag.n, dtype=top.dtype)
    top[diag.m:] = u[diag.m:]
    bottom[: diag.m] = u[: diag.m]
    return top, bottom


def z_eval(diag: DiagonalForm, s: complex):
    """Z(s) = WC^D [Psi_b^s; I] V(s)^-1"""
    _require_zero_P0D(diag)
    u = np.exp(-complex(s) * np.asarray(diag.tau))
    top, bottom = _z_blocks(diag, u)
    n = diag.n
    return diag.WCD[:, :n] * top + diag.WCD[:, n:] * bottom


def z_measure(diag: DiagonalForm) -> AtomicMeasure:
    """Atomic measure whose Laplace transform is Z: atoms at 0 and at the unit multi-indices"""
    _require_zero_P0D(diag)
    n, m = diag.n, diag.m
    base_delays, channel_index = delay_basis(diag.tau)
    d = len(base_delays)
    top, bottom = diag.WCD[:, :n], diag.WCD[:, n:]

    atoms = {}

    def accumulate(key, column, j):
        weight = atoms.setdefault(key, np.zeros((n, n), dtype=diag.WCD.dtype))
        weight[:, j] += column

    for j in range(n):
        unit = tuple(int(i == channel_index[j]) for i in range(d))
        zero = (0,) * d
        if j < m:
            accumulate(zero, top[:, j], j)
            accumulate(unit, bottom[:, j], j)
        else:
            accumulate(unit, top[:, j], j)
            accumulate(zero, bottom[:, j], j)
    return AtomicMeasure(n, base_delays, atoms)


def u_operator_norm(diag: DiagonalForm, s: complex, p: float = np.inf) -> float:
    """||U(s)||_{p->p}; for a diagonal matrix this is max_j exp(-Re(s) tau_j) for every p"""
    if not (p == np.inf or p >= 1):
        raise ParameterError(f"p must lie in [1, inf], got {p}")
    return float(np.max(np.exp(-np.real(complex(s)) * np.asarray(diag.tau))))


def neumann_abscissa(M, diag: DiagonalForm) -> float:
    """Smallest alpha >= 0 such that ||M||_2 ||U(s)||_2 < 1 on Re s > alpha"""
    norm = float(np.linalg.norm(np.asarray(M), 2))
    if norm <= 1.0:
        return 0.0
    return float(np.log(norm) / diag.tau_min)


def neumann_transfer(diag: DiagonalForm, dec: BoundaryDecomposition, s: complex, order: int):
    """Z(s) sum_{k<=order} (M U(s))^k K^-1"""
    if order < 0:
        raise ParameterError(f"order must be nonnegative, got {order}")
    _, _, U = vu_matrices(diag, s)
    MU = dec.M @ U
    term = np.eye(diag.n, dtype=complex)
    total = term.copy()
    for _ in range(order):
        term = term @ MU
        total += term
    return z_eval(diag, s) @ total @ dec.Kinv


def factorized_transfer(diag: DiagonalForm, dec: BoundaryDecomposition, s: complex):
    """Z(s) (I - M U(s))^-1 K^-1"""
    _, _, U = vu_matrices(diag, s)
    resolvent = np.eye(diag.n) - dec.M @ U
    return z_eval(diag, s) @ np.linalg.solve(resolvent, dec.Kinv)


def diagonal_system(diag: DiagonalForm, name: str = "") -> HyperbolicSystem:
    """The decoupled system (P1^D, P0^D, H^D, WB^D, WC^D) with the same input-output behaviour"""
    field = "complex" if diag.field == "complex" or np.iscomplexobj(diag.WBD) else "real"
    P0D = diag.P0D
    if field == "real":
        P0D = _real_part(P0D)
    return HyperbolicSystem(
        n=diag.n,
        a=diag.a,
        b=diag.b,
        P1=diag.P1D,
        P0=P0D,
        H=diag.HD,
        WB=diag.WBD,
        WC=diag.WCD,
        field=field,
        name=name,
    )


def _real_part(f: SpatialMatrixFunction) -> SpatialMatrixFunction:
    if f.kind.value == "constant":
        return SpatialMatrixFunction.constant(np.real(f.value))
    return SpatialMatrixFunction.grid(f.xs, np.real(f.values))
