"""
Hyperbolic boundary control systems: data model and standing-assumption checks.

A system is given by

    dx/dt = P1 d/dxi (H x) + P0 (H x)         on [a, b]
    u = WB [(Hx)(b); (Hx)(a)],   y = WC [(Hx)(b); (Hx)(a)]

with P1 constant, self-adjoint and invertible, and P0, H either constant or
sampled on a grid (piecewise-linear in between).
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import List, NamedTuple, Optional, Tuple, Union

import numpy as np
from scipy.interpolate import make_interp_spline

from .errors import DomainError, HBCSError, SingularMatrixError, StructuralError

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
POSITIVITY_GRID_POINTS = 129


class SpatialKind(str, Enum):
    CONSTANT = "constant"
    GRID = "grid"


class Field(str, Enum):
    REAL = "real"
    COMPLEX = "complex"


class ContractionClass(str, Enum):
    STRICTLY_POSITIVE = "strictly_positive"
    PSD = "psd"
    INDEFINITE = "indefinite"


def _frozen(array):
    array = np.array(array)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class SpatialMatrixFunction:
    """A xi-dependent n x n coefficient, constant or piecewise linear on a grid"""

    kind: SpatialKind
    value: Optional[np.ndarray] = None
    xs: Optional[np.ndarray] = None
    values: Optional[np.ndarray] = None

    @classmethod
    def constant(cls, value):
        value = np.atleast_2d(np.asarray(value))
        if value.ndim != 2 or value.shape[0] != value.shape[1]:
            raise StructuralError(f"constant coefficient must be square, got shape {value.shape}")
        return cls(SpatialKind.CONSTANT, value=_frozen(value))

    @classmethod
    def grid(cls, xs, values):
        xs = np.asarray(xs, dtype=float)
        values = np.asarray(values)
        if xs.ndim != 1 or len(xs) < 2:
            raise StructuralError("grid coefficient needs at least 2 samples")
        if np.any(np.diff(xs) <= 0):
            raise StructuralError("grid sample points must be strictly increasing")
        if values.ndim != 3 or values.shape[0] != len(xs) or values.shape[1] != values.shape[2]:
            raise StructuralError(f"grid values must have shape ({len(xs)}, n, n), got {values.shape}")
        return cls(SpatialKind.GRID, xs=_frozen(xs), values=_frozen(values))

    @property
    def n(self):
        if self.kind == SpatialKind.CONSTANT:
            return self.value.shape[0]
        return self.values.shape[1]

    @property
    def is_complex(self):
        data = self.value if self.kind == SpatialKind.CONSTANT else self.values
        return np.iscomplexobj(data) and bool(np.any(np.imag(data) != 0))

    @cached_property
    def _spline(self):
        return make_interp_spline(self.xs, self.values, k=1, axis=0)

    def __call__(self, xi):
        return eval_spatial(self, xi)

    def sample(self, xis):
        """Evaluate at many points at once, shape (len(xis), n, n)"""
        xis = np.asarray(xis, dtype=float)
        if self.kind == SpatialKind.CONSTANT:
            return np.broadcast_to(self.value, (len(xis),) + self.value.shape).copy()
        _check_domain(xis, self.xs[0], self.xs[-1])
        return self._spline(np.clip(xis, self.xs[0], self.xs[-1]))


def _check_domain(xi, a, b):
    slack = 1e-12 * (b - a)
    xi = np.asarray(xi, dtype=float)
    if np.any(xi < a - slack) or np.any(xi > b + slack):
        raise DomainError(f"xi outside [{a}, {b}]: {xi}")


def eval_spatial(f: SpatialMatrixFunction, xi: float, interval: Optional[Tuple[float, float]] = None):
    """Value of f at xi; linear interpolation between grid samples"""
    if f.kind == SpatialKind.CONSTANT:
        if interval is not None:
            _check_domain(xi, *interval)
        return np.array(f.value)
    _check_domain(xi, f.xs[0], f.xs[-1])
    xi = min(max(float(xi), f.xs[0]), f.xs[-1])
    return np.asarray(f._spline(xi))


@dataclass(frozen=True, eq=False)
class HyperbolicSystem:
    """Full data of a hyperbolic boundary control system"""

    n: int
    a: float
    b: float
    P1: np.ndarray
    P0: SpatialMatrixFunction
    H: SpatialMatrixFunction
    WB: np.ndarray
    WC: np.ndarray
    field: Field = Field.REAL
    name: str = ""

    def __post_init__(self):
        n = self.n
        if not isinstance(n, (int, np.integer)) or n < 1:
            raise StructuralError(f"n must be a positive integer, got {n!r}")
        if not self.a < self.b:
            raise StructuralError(f"interval must satisfy a < b, got [{self.a}, {self.b}]")

        object.__setattr__(self, "field", Field(self.field))
        dtype = complex if self.field == Field.COMPLEX else float
        for key, shape in (("P1", (n, n)), ("WB", (n, 2 * n)), ("WC", (n, 2 * n))):
            matrix = np.atleast_2d(np.asarray(getattr(self, key)))
            if matrix.shape != shape:
                raise StructuralError(f"{key} must have shape {shape}, got {matrix.shape}")
            object.__setattr__(self, key, _frozen(self._cast(key, matrix, dtype)))

        for key in ("P0", "H"):
            coefficient = getattr(self, key)
            if not isinstance(coefficient, SpatialMatrixFunction):
                coefficient = SpatialMatrixFunction.constant(coefficient)
                object.__setattr__(self, key, coefficient)
            if coefficient.n != n:
                raise StructuralError(f"{key} must be {n} x {n}, got {coefficient.n} x {coefficient.n}")
            if self.field == Field.REAL and coefficient.is_complex:
                raise StructuralError(f"{key} has complex entries but field is real")
            if coefficient.kind == SpatialKind.GRID:
                xs = coefficient.xs
                if not (np.isclose(xs[0], self.a, atol=1e-12) and np.isclose(xs[-1], self.b, atol=1e-12)):
                    raise StructuralError(f"{key} grid must start at a={self.a} and end at b={self.b}")

    def _cast(self, key, matrix, dtype):
        if dtype is float:
            if np.iscomplexobj(matrix) and np.any(np.imag(matrix) != 0):
                raise StructuralError(f"{key} has complex entries but field is real")
            return np.real(matrix).astype(float)
        return matrix.astype(complex)

    @property
    def interval(self):
        return (self.a, self.b)

    @property
    def is_constant(self):
        return self.P0.kind == SpatialKind.CONSTANT and self.H.kind == SpatialKind.CONSTANT

    def H_at(self, xi):
        return eval_spatial(self.H, xi, self.interval)

    def P0_at(self, xi):
        return eval_spatial(self.P0, xi, self.interval)

    def sample_grid(self):
        """Union of all coefficient sample points, always containing a and b"""
        points = [np.array([self.a, self.b])]
        for coefficient in (self.P0, self.H):
            if coefficient.kind == SpatialKind.GRID:
                points.append(coefficient.xs)
        return np.unique(np.concatenate(points))

    def evaluation_grid(self, points=POSITIVITY_GRID_POINTS):
        uniform = np.linspace(self.a, self.b, points)
        return np.unique(np.concatenate([uniform, self.sample_grid()]))


class Check(NamedTuple):
    name: str
    passed: bool
    residual: float


class ContractionForm(NamedTuple):
    matrix: np.ndarray
    contraction_class: ContractionClass
    margin: float


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    checks: List[Check]
    contraction_matrix: Optional[np.ndarray]
    contraction_class: Optional[ContractionClass]
    semigroup_rank_ok: Union[bool, str] = "not_applicable"
    contraction_margin: Optional[float] = None

    def failed(self):
        return [check for check in self.checks if not check.passed]


def _relative(value, scale):
    return value / max(1.0, scale)


def contraction_form(sys: HyperbolicSystem, tol: float = DEFAULT_TOL) -> ContractionForm:
    """WB R0^-1 Sigma (WB R0^-1)^* and its sign class"""
    n = sys.n
    identity = np.eye(n)
    if np.linalg.svd(sys.P1, compute_uv=False)[-1] <= tol * max(1.0, np.linalg.norm(sys.P1, 2)):
        raise SingularMatrixError("P1 not invertible")

    R0 = np.block([[sys.P1, -sys.P1], [identity, identity]]) / np.sqrt(2.0)
    Sigma = np.block([[np.zeros((n, n)), identity], [identity, np.zeros((n, n))]])
    F = np.linalg.solve(R0.T, sys.WB.T).T
    matrix = F @ Sigma @ F.conj().T
    matrix = (matrix + matrix.conj().T) / 2

    margin = float(np.linalg.eigvalsh(matrix)[0])
    scale = max(1.0, np.linalg.norm(matrix, 2))
    if margin > tol * scale:
        contraction_class = ContractionClass.STRICTLY_POSITIVE
    elif margin >= -tol * scale:
        contraction_class = ContractionClass.PSD
    else:
        contraction_class = ContractionClass.INDEFINITE
    return ContractionForm(matrix, contraction_class, margin)


def validate_system(sys: HyperbolicSystem, tol: float = DEFAULT_TOL) -> ValidationReport:
    """Check the standing assumptions and report residuals"""
    checks = []
    P1 = sys.P1
    p1_norm = np.linalg.norm(P1, 2)

    residual = _relative(np.linalg.norm(P1 - P1.conj().T, 2), p1_norm)
    checks.append(Check("P1 self-adjoint", residual <= tol, float(residual)))

    sigma_min = float(np.linalg.svd(P1, compute_uv=False)[-1])
    checks.append(Check("P1 invertible", sigma_min > tol * max(1.0, p1_norm), sigma_min))

    grid = sys.evaluation_grid()
    H = sys.H.sample(grid)
    H_norm = max(1.0, float(np.max(np.linalg.norm(H, 2, axis=(1, 2)))))
    residual = float(np.max(np.linalg.norm(H - np.conj(np.swapaxes(H, 1, 2)), 2, axis=(1, 2))))
    checks.append(Check("H self-adjoint", residual / H_norm <= tol, residual))

    eigenvalues = np.linalg.eigvalsh((H + np.conj(np.swapaxes(H, 1, 2))) / 2)
    h_min, h_max = float(eigenvalues.min()), float(eigenvalues.max())
    checks.append(Check("H uniformly positive", h_min > tol * H_norm, h_min))
    checks.append(Check("H bounded", bool(np.isfinite(h_max)), h_max))

    sv = np.linalg.svd(sys.WB, compute_uv=False)
    checks.append(Check("WB full row rank", sv[-1] > tol * max(1.0, sv[0]), float(sv[-1])))

    stacked = np.vstack([sys.WB, sys.WC])
    sv = np.linalg.svd(stacked, compute_uv=False)
    checks.append(Check("[WB; WC] full rank", sv[-1] > tol * max(1.0, sv[0]), float(sv[-1])))

    ok = all(check.passed for check in checks)

    contraction = None
    if sigma_min > tol * max(1.0, p1_norm):
        contraction = contraction_form(sys, tol)

    semigroup_rank_ok = "not_applicable"
    if ok:
        semigroup_rank_ok = _diagonal_rank_test(sys, tol)

    for check in checks:
        if not check.passed:
            logger.info(f"Validation check failed for {sys.name or 'system'}: {check.name} (residual {check.residual:.3e})")

    return ValidationReport(
        ok=ok,
        checks=checks,
        contraction_matrix=None if contraction is None else contraction.matrix,
        contraction_class=None if contraction is None else contraction.contraction_class,
        semigroup_rank_ok=semigroup_rank_ok,
        contraction_margin=None if contraction is None else contraction.margin,
    )


def _diagonal_rank_test(sys, tol):
    """Invertibility of WB^D [P+^D; P-^D] when the system diagonalizes"""
    from .spectral import diagonalize

    try:
        diag = diagonalize(sys)
    except HBCSError as e:
        logger.debug(f"Diagonal rank test not applicable: {e}")
        return "not_applicable"

    n, m = sys.n, diag.m
    plus = np.diag([1.0] * m + [0.0] * (n - m))
    minus = np.eye(n) - plus
    matrix = diag.WBD @ np.vstack([plus, minus])
    sv = np.linalg.svd(matrix, compute_uv=False)
    return bool(sv[-1] > tol * max(1.0, sv[0]))
