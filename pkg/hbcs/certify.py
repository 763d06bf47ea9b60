"""
BIBO certificates from the reflection matrix M and truncated impulse responses.

Three sufficient conditions are tried in order, each stricter test being cheaper:
  1. ||M||_inf < 1
  2. spectral radius of |M| below 1 (the series sum |M|^k converges)
  3. some power k0 of the measure of M U(s) has total-variation row sums below 1
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from math import floor
from typing import Any, Dict, List, NamedTuple, Optional

import numpy as np

from .alert_system import AlertSystem
from .delta_calculus import (
    AtomicMeasure,
    MERGE_TOL,
    convolve,
    identity,
    mu_measure,
    neumann_partial_sum,
    scale,
    total_variation,
)
from .errors import CertificateError, HBCSError, NumericalError, ParameterError
from .spectral import BoundaryDecomposition, DiagonalForm, decompose_boundary, diagonalize, signature_projections
from .system_model import HyperbolicSystem, validate_system
from .transfer import z_measure

logger = logging.getLogger(__name__)

STRICT_MARGIN = 1e-12
DEFAULT_K_MAX = 12
K_CONDITION_LIMIT = 1e10

# used when certify is called without an alert system; it keeps no files
DEFAULT_ALERT_SYSTEM = AlertSystem()


class Outcome(str, Enum):
    CERTIFIED_BIBO = "certified_bibo"
    INCONCLUSIVE = "inconclusive"
    INVALID_INPUT = "invalid_input"


class Condition(str, Enum):
    INF_NORM = "cond1_inf_norm"
    ABS_SERIES = "cond2_abs_series"
    K0 = "cond3_k0"
    NONE = "none"


class Condition1Result(NamedTuple):
    passed: bool
    m_inf: float


class Condition2Result(NamedTuple):
    passed: bool
    rho_abs: float


class Condition3Result(NamedTuple):
    passed: bool
    k0: Optional[int]
    row_sums_by_k: List[np.ndarray]


@dataclass
class CertificateReport:
    outcome: Outcome
    triggered_condition: Condition = Condition.NONE
    details: Dict[str, Any] = field(default_factory=dict)
    contraction_margin: Optional[float] = None
    warnings: List[str] = field(default_factory=list)
    diag: Optional[DiagonalForm] = field(default=None, repr=False)
    dec: Optional[BoundaryDecomposition] = field(default=None, repr=False)

    @property
    def certified(self):
        return self.outcome == Outcome.CERTIFIED_BIBO


@dataclass(frozen=True, eq=False)
class ImpulseTruncation:
    """Truncated inverse Laplace transform of G with a bound on the discarded tail"""

    measure: AtomicMeasure
    order: int
    tail_tv_bound: Optional[np.ndarray]
    decay_ratio: Optional[float]
    condition: Condition = Condition.NONE
    horizon: float = float("inf")

    @property
    def bounded(self):
        return self.tail_tv_bound is not None


def condition1_inf_norm(M, strict_margin: float = STRICT_MARGIN) -> Condition1Result:
    m_inf = float(np.max(np.sum(np.abs(np.asarray(M)), axis=1)))
    return Condition1Result(m_inf < 1 - strict_margin, m_inf)


def condition2_abs_series(M, strict_margin: float = STRICT_MARGIN) -> Condition2Result:
    rho_abs = float(np.max(np.abs(np.linalg.eigvals(np.abs(np.asarray(M))))))
    return Condition2Result(rho_abs < 1 - strict_margin, rho_abs)


def condition3_k0(M, diag: DiagonalForm, k_max: int = DEFAULT_K_MAX, merge_tol: float = MERGE_TOL,
                  strict_margin: float = STRICT_MARGIN) -> Condition3Result:
    """Row sums of TV((M U)^k) for k = 1..k_max; passes at the first k below 1"""
    if k_max < 1:
        raise ParameterError(f"k_max must be at least 1, got {k_max}")

    mu = mu_measure(M, diag)
    term = mu
    k0 = None
    table = []
    for k in range(1, k_max + 1):
        if k > 1:
            term = convolve(term, mu)
        row_sums = total_variation(term, merge_tol).sum(axis=1)
        table.append(row_sums)
        if k0 is None and np.max(row_sums) < 1 - strict_margin:
            k0 = k
    return Condition3Result(k0 is not None, k0, table)


def _evaluate_conditions(M, diag, k_max, merge_tol, strict_margin, details):
    """Run the conditions in order, stopping at the first that passes"""
    first = condition1_inf_norm(M, strict_margin)
    details["m_inf"] = first.m_inf
    details["cond1_passed"] = first.passed
    if first.passed:
        return Condition.INF_NORM

    second = condition2_abs_series(M, strict_margin)
    details["rho_abs"] = second.rho_abs
    details["cond2_passed"] = second.passed
    if second.passed:
        return Condition.ABS_SERIES

    third = condition3_k0(M, diag, k_max, merge_tol, strict_margin)
    details["k0"] = third.k0
    details["cond3_passed"] = third.passed
    details["row_sums_by_k"] = [row.tolist() for row in third.row_sums_by_k]
    if third.passed:
        details["m_k0"] = float(np.max(third.row_sums_by_k[third.k0 - 1]))
        return Condition.K0
    return Condition.NONE


def _finish(report, alert_system):
    if alert_system is None:
        alert_system = DEFAULT_ALERT_SYSTEM
    for alert in alert_system.check_certificate(report):
        report.warnings.append(alert["message"])
    logger.info(
        f"Certificate: {report.outcome.value} via {report.triggered_condition.value}"
        + (f" ({len(report.warnings)} warnings)" if report.warnings else "")
    )
    return report


def certify(sys: HyperbolicSystem, k_max: int = DEFAULT_K_MAX, grid_size: int = 257, tol: float = 1e-10,
            merge_tol: float = MERGE_TOL, strict_margin: float = STRICT_MARGIN,
            k_condition_limit: float = K_CONDITION_LIMIT, alert_system=None) -> CertificateReport:
    """validate -> diagonalize -> P0^D gate -> (K, M) -> conditions 1, 2, 3"""
    if k_max < 1:
        raise ParameterError(f"k_max must be at least 1, got {k_max}")

    try:
        validation = validate_system(sys, tol)
    except HBCSError as e:
        logger.error(f"Error validating system: {e}")
        return CertificateReport(Outcome.INVALID_INPUT, warnings=[f"validation failed: {e}"])

    report = CertificateReport(Outcome.INCONCLUSIVE, contraction_margin=validation.contraction_margin)
    if not validation.ok:
        report.outcome = Outcome.INVALID_INPUT
        report.warnings.extend(f"check failed: {c.name} (residual {c.residual:.3e})" for c in validation.failed())
        return _finish(report, alert_system)

    try:
        diag = diagonalize(sys, grid_size)
    except NumericalError as e:
        logger.error(f"Error diagonalizing system: {e}")
        report.warnings.append(f"diagonalization failed: {e}")
        return _finish(report, alert_system)

    report.diag = diag
    report.details.update({
        "m": diag.m,
        "tau": list(diag.tau),
        "P0D_residual": diag.P0D_residual,
        "P0D_is_zero": diag.P0D_is_zero,
    })
    if not diag.P0D_is_zero:
        return _finish(report, alert_system)

    sig = signature_projections(diag.P1D, tol)
    dec = decompose_boundary(diag.WBD, sig, diag.P1D, tol, k_condition_limit)
    report.dec = dec
    report.details["K_condition"] = dec.J_condition
    if not dec.exists_KM:
        report.warnings.append("no (K, M) decomposition of the diagonal input matrix")
        return _finish(report, alert_system)

    M = dec.M
    M_norm_2 = float(np.linalg.norm(M, 2))
    report.details.update({
        "M": M,
        "M_norm_2": M_norm_2,
        "M_norm_2_le_1": bool(M_norm_2 <= 1 + tol),
    })

    condition = _evaluate_conditions(M, diag, k_max, merge_tol, strict_margin, report.details)
    report.triggered_condition = condition
    if condition != Condition.NONE:
        report.outcome = Outcome.CERTIFIED_BIBO
    return _finish(report, alert_system)


def _neumann_tail_rows(M, diag, order, k_max, merge_tol, strict_margin):
    """Per-row bound on the row sums of sum_{k > order} TV((M U)^k), with the condition used"""
    absM = np.abs(M)
    n = M.shape[0]

    first = condition1_inf_norm(M, strict_margin)
    second = condition2_abs_series(M, strict_margin)
    if first.passed or second.passed:
        # entrywise: TV((MU)^k) <= |M|^k, and rho(|M|) < 1 in both cases
        tail = np.linalg.matrix_power(absM, order + 1) @ np.linalg.inv(np.eye(n) - absM)
        if first.passed:
            return tail.sum(axis=1), first.m_inf, Condition.INF_NORM
        return tail.sum(axis=1), second.rho_abs, Condition.ABS_SERIES

    third = condition3_k0(M, diag, k_max, merge_tol, strict_margin)
    if not third.passed:
        return None, None, Condition.NONE

    k0 = third.k0
    ratio = float(np.max(third.row_sums_by_k[k0 - 1]))
    mu = mu_measure(M, diag)
    prefix = np.zeros(n)
    term = identity(n, mu.base_delays)
    for r in range(k0):
        if r > 0:
            term = convolve(term, mu)
        prefix += total_variation(term, merge_tol).sum(axis=1)
    blocks = floor((order + 1) / k0)
    return prefix * ratio ** blocks / (1 - ratio), ratio, Condition.K0


def impulse_response(diag: DiagonalForm, dec: BoundaryDecomposition, order: int, k_max: int = DEFAULT_K_MAX,
                     merge_tol: float = MERGE_TOL, strict_margin: float = STRICT_MARGIN,
                     require_bound: bool = False) -> ImpulseTruncation:
    """Lambda^-1[Z] * sum_{k<=order} Lambda^-1[MU]^{*k} K^-1, with a tail bound when a condition holds"""
    if order < 0:
        raise ParameterError(f"order must be nonnegative, got {order}")
    if not dec.exists_KM:
        raise NumericalError("impulse response needs a (K, M) decomposition")

    Kinv = dec.Kinv
    z = z_measure(diag)
    mu = mu_measure(dec.M, diag)
    measure = scale(convolve(z, neumann_partial_sum(mu, order)), Kinv, side="right")

    tail_rows, ratio, condition = _neumann_tail_rows(dec.M, diag, order, k_max, merge_tol, strict_margin)
    if tail_rows is None:
        if require_bound:
            raise CertificateError("no decay certificate")
        logger.warning("Impulse response truncated without a decay certificate: tail unbounded")
        tail_tv_bound = None
    else:
        # TV(z * X * K^-1) <= TV(z) TV(X) |K^-1| entrywise
        kinv_inf = float(np.max(np.sum(np.abs(Kinv), axis=1)))
        tail_tv_bound = total_variation(z, None) @ tail_rows * kinv_inf

    # every discarded term starts after (order + 1) shortest delays
    horizon = (order + 1) * diag.tau_min
    return ImpulseTruncation(measure, order, tail_tv_bound, ratio, condition, horizon)


def gain_upper_bound(imp: ImpulseTruncation) -> float:
    """Max row sum of TV(measure) plus the tail bound: an L-infinity gain bound in the sup-norm"""
    if imp.tail_tv_bound is None:
        raise CertificateError("no decay certificate: tail bound is unbounded")
    rows = total_variation(imp.measure).sum(axis=1) + imp.tail_tv_bound
    return float(np.max(rows))
