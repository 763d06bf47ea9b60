"""
Signature projections of P1, boundary decompositions and diagonalization of P1 H.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.integrate import simpson
from scipy.interpolate import KroghInterpolator, make_interp_spline
from scipy.optimize import linear_sum_assignment

from .errors import HyperbolicityError, ParameterError, SingularMatrixError
from .system_model import HyperbolicSystem, SpatialMatrixFunction, SpatialKind

logger = logging.getLogger(__name__)

DEFAULT_GRID_SIZE = 257
P0D_ZERO_TOL = 1e-8
CLUSTER_TOL = 1e-8
EXTRAPOLATION_POINTS = 6


@dataclass(frozen=True, eq=False)
class SignatureData:
    """Square-root weighted spectral projections of P1"""

    m: int
    Qplus: np.ndarray
    Qminus: np.ndarray
    Pplus: np.ndarray
    Pminus: np.ndarray

    @property
    def n(self):
        return self.Qplus.shape[0]


@dataclass(frozen=True, eq=False)
class BoundaryDecomposition:
    """WB = (J Q+ - L Q- | J Q- - L Q+), and WB = K (Q+ - M Q- | Q- - M Q+) when J is invertible"""

    signature: SignatureData
    J: np.ndarray
    L: np.ndarray
    K: Optional[np.ndarray]
    M: Optional[np.ndarray]
    exists_KM: bool
    J_condition: float

    @property
    def Kinv(self):
        if not self.exists_KM:
            raise SingularMatrixError("no (K, M) decomposition: J is not invertible")
        return np.linalg.inv(self.K)

    def reconstruct_from_JL(self):
        Qp, Qm = self.signature.Qplus, self.signature.Qminus
        return np.hstack([self.J @ Qp - self.L @ Qm, self.J @ Qm - self.L @ Qp])

    def reconstruct_from_KM(self):
        if not self.exists_KM:
            raise SingularMatrixError("no (K, M) decomposition: J is not invertible")
        Qp, Qm = self.signature.Qplus, self.signature.Qminus
        return self.K @ np.hstack([Qp - self.M @ Qm, Qm - self.M @ Qp])


@dataclass(frozen=True, eq=False)
class DiagonalForm:
    """Riemann-invariant form P1 H = S^-1 P1^D H^D S with transformed boundary matrices"""

    n: int
    a: float
    b: float
    m: int
    S: SpatialMatrixFunction
    S_inv: SpatialMatrixFunction
    HD: SpatialMatrixFunction
    P0D: SpatialMatrixFunction
    WBD: np.ndarray
    WCD: np.ndarray
    tau: Tuple[float, ...]
    P0D_is_zero: bool
    P0D_residual: float
    relation_residual: float
    field: str = "real"

    @property
    def P1D(self):
        return np.diag([1.0] * self.m + [-1.0] * (self.n - self.m))

    @property
    def tau_min(self):
        return min(self.tau)


def signature_projections(P1, tol: float = 1e-10) -> SignatureData:
    """Q+ and Q- with P1 = Q+^2 - Q-^2 and orthogonal projections onto E+ and E-"""
    P1 = np.atleast_2d(np.asarray(P1))
    n = P1.shape[0]

    if np.count_nonzero(P1 - np.diag(np.diag(P1))) == 0:
        eigenvalues = np.real(np.diag(P1)).astype(float)
        vectors = np.eye(n)
    else:
        eigenvalues, vectors = np.linalg.eigh((P1 + P1.conj().T) / 2)

    scale = max(1.0, float(np.max(np.abs(eigenvalues))))
    if np.min(np.abs(eigenvalues)) <= tol * scale:
        raise SingularMatrixError("P1 numerically singular")

    positive = eigenvalues > 0
    Vp, Vm = vectors[:, positive], vectors[:, ~positive]
    Qplus = (Vp * np.sqrt(eigenvalues[positive])) @ Vp.conj().T
    Qminus = (Vm * np.sqrt(-eigenvalues[~positive])) @ Vm.conj().T
    Pplus = Vp @ Vp.conj().T
    Pminus = Vm @ Vm.conj().T

    if not np.iscomplexobj(P1):
        Qplus, Qminus, Pplus, Pminus = (np.real(X) for X in (Qplus, Qminus, Pplus, Pminus))

    return SignatureData(int(positive.sum()), Qplus, Qminus, Pplus, Pminus)


def decompose_boundary(WB, sig: SignatureData, P1, tol: float = 1e-10,
                       k_condition_limit: float = 1e10) -> BoundaryDecomposition:
    """J, L from the closed formulas, and K = J, M = K^-1 L whenever J is invertible"""
    WB = np.asarray(WB)
    P1 = np.asarray(P1)
    n = sig.n
    if WB.shape != (n, 2 * n):
        raise ParameterError(f"WB must have shape ({n}, {2 * n}), got {WB.shape}")

    P1inv = np.linalg.inv(P1)
    J = WB @ np.vstack([sig.Qplus, -sig.Qminus]) @ P1inv
    L = WB @ np.vstack([sig.Qminus, -sig.Qplus]) @ P1inv

    sv = np.linalg.svd(J, compute_uv=False)
    condition = float(sv[0] / sv[-1]) if sv[-1] > 0 else float("inf")
    exists_KM = bool(sv[-1] > tol * max(1.0, sv[0]) and condition < k_condition_limit)

    K = M = None
    if exists_KM:
        K = J
        M = np.linalg.solve(K, L)
        logger.debug(f"Boundary decomposition: cond(K) = {condition:.3e}")
    else:
        logger.info(f"No (K, M) decomposition: J near singular (cond {condition:.3e})")

    return BoundaryDecomposition(sig, J, L, K, M, exists_KM, condition)


def _sqrt_and_inverse_sqrt(H):
    if np.count_nonzero(H - np.diag(np.diag(H))) == 0:
        d = np.real(np.diag(H))
        if np.any(d <= 0):
            raise HyperbolicityError("H is not positive definite")
        return np.diag(np.sqrt(d)), np.diag(1 / np.sqrt(d))
    h, Q = np.linalg.eigh((H + H.conj().T) / 2)
    if np.any(h <= 0):
        raise HyperbolicityError("H is not positive definite")
    return (Q * np.sqrt(h)) @ Q.conj().T, (Q / np.sqrt(h)) @ Q.conj().T


def _pointwise_eigensystem(P1, H):
    """Real eigenvalues (descending) and unit eigenvectors of P1 H through the congruence H^1/2 P1 H^1/2"""
    A = P1 @ H
    if np.count_nonzero(A - np.diag(np.diag(A))) == 0:
        eigenvalues = np.real(np.diag(A)).astype(float)
        vectors = np.eye(len(A), dtype=A.dtype)
    else:
        root, inverse_root = _sqrt_and_inverse_sqrt(H)
        C = root @ P1 @ root
        eigenvalues, W = np.linalg.eigh((C + C.conj().T) / 2)
        vectors = inverse_root @ W
        vectors = vectors / np.linalg.norm(vectors, axis=0)

    order = np.argsort(-eigenvalues, kind="stable")
    eigenvalues, vectors = eigenvalues[order], vectors[:, order]

    residual = np.linalg.norm(A @ vectors - vectors * eigenvalues) / max(1.0, np.linalg.norm(A))
    if residual > 1e-8:
        raise HyperbolicityError(f"P1 H not diagonalizable with real eigenvalues (residual {residual:.2e})")
    if np.min(np.abs(eigenvalues)) <= 0:
        raise HyperbolicityError("P1 H has a zero characteristic speed")
    return eigenvalues, vectors


def _clusters(eigenvalues, tol=CLUSTER_TOL):
    """Groups of indices whose eigenvalues coincide within tol"""
    groups, current = [], [0]
    scale = max(1.0, float(np.max(np.abs(eigenvalues))))
    for i in range(1, len(eigenvalues)):
        if abs(eigenvalues[i] - eigenvalues[i - 1]) <= tol * scale:
            current.append(i)
        else:
            groups.append(current)
            current = [i]
    groups.append(current)
    return [g for g in groups if len(g) > 1]


def _align(reference, eigenvalues, vectors, m):
    """Match eigenpairs to the reference channels and fix phases, returning (values, vectors)"""
    n = len(eigenvalues)
    aligned_values = np.empty(n)
    aligned_vectors = np.empty_like(vectors, dtype=np.result_type(vectors, reference))

    for block in (slice(0, m), slice(m, n)):
        ref = reference[:, block]
        cand = vectors[:, block]
        if ref.shape[1] == 0:
            continue
        overlap = np.abs(ref.conj().T @ cand)
        rows, cols = linear_sum_assignment(-overlap)
        offset = block.start
        for r, c in zip(rows, cols):
            aligned_values[offset + r] = eigenvalues[offset + c]
            aligned_vectors[:, offset + r] = cand[:, c]

    # within a repeated eigenvalue the basis is free: take the reference's projection
    for group in _clusters(aligned_values):
        basis = aligned_vectors[:, group]
        coefficients, *_ = np.linalg.lstsq(basis, reference[:, group], rcond=None)
        aligned_vectors[:, group] = basis @ coefficients

    aligned_vectors = aligned_vectors / np.linalg.norm(aligned_vectors, axis=0)
    phases = np.sum(reference.conj() * aligned_vectors, axis=0)
    phases = np.where(np.abs(phases) > 0, phases / np.abs(phases), 1.0)
    return aligned_values, aligned_vectors * phases.conj()


def _extrapolate(xs, vectors, indices, target):
    """Polynomial extrapolation of aligned eigenvectors to xs[target]"""
    interpolator = KroghInterpolator(xs[indices], vectors[indices])
    return interpolator(xs[target])


def _track(xs, eigenvalues, vectors, m):
    """Continuity-aligned eigenvector branches across the grid"""
    count = len(xs)
    clustered = [bool(_clusters(eigenvalues[i])) for i in range(count)]
    for i in range(1, count - 1):
        if clustered[i] and not (clustered[i - 1] and clustered[i + 1]):
            raise HyperbolicityError(f"not uniformly hyperbolic: characteristic speeds collide at xi={xs[i]:.6g}")

    start = next((i for i in range(count) if not clustered[i]), 0)
    values_out = np.empty_like(eigenvalues)
    vectors_out = np.empty(vectors.shape, dtype=vectors.dtype)
    values_out[start], vectors_out[start] = eigenvalues[start], vectors[start]

    def step(i, previous_indices):
        reference = vectors_out[previous_indices[0]]
        if clustered[i] and len(previous_indices) >= EXTRAPOLATION_POINTS:
            reference = _extrapolate(xs, vectors_out, previous_indices[:EXTRAPOLATION_POINTS], i)
        values_out[i], vectors_out[i] = _align(reference, eigenvalues[i], vectors[i], m)

    for i in range(start + 1, count):
        step(i, list(range(i - 1, start - 1, -1)))
    for i in range(start - 1, -1, -1):
        step(i, list(range(i + 1, count)))
    return values_out, vectors_out


def _canonical_channel_order(values, vectors, m):
    """Order channels inside each sign block by their overlap with the coordinate axes at xi=a"""
    n = values.shape[1]
    order = np.arange(n)
    for block in (slice(0, m), slice(m, n)):
        columns = order[block]
        if len(columns) < 2:
            continue
        # rows are coordinate axes, returned in ascending order
        _, channels = linear_sum_assignment(-np.abs(vectors[0][:, columns]))
        order[block] = columns[channels]
    return values[:, order], vectors[:, :, order]


def _normalize_phase(vectors, tol=1e-8):
    """Last nonzero component of each channel real and positive at xi=a"""
    at_a = vectors[0]
    phases = np.ones(at_a.shape[1], dtype=at_a.dtype)
    for j in range(at_a.shape[1]):
        nonzero = np.flatnonzero(np.abs(at_a[:, j]) > tol)
        entry = at_a[nonzero[-1], j]
        phases[j] = np.conj(entry) / abs(entry)
    return vectors * phases


def diagonalize(sys: HyperbolicSystem, grid_size: int = DEFAULT_GRID_SIZE) -> DiagonalForm:
    """Pointwise diagonalization of P1 H with characteristic delays and transformed boundary matrices"""
    n = sys.n
    if sys.is_constant:
        xs = np.array([sys.a, sys.b])
    else:
        if grid_size < EXTRAPOLATION_POINTS:
            raise ParameterError(f"grid_size must be at least {EXTRAPOLATION_POINTS}, got {grid_size}")
        xs = np.linspace(sys.a, sys.b, grid_size)

    H_samples = sys.H.sample(xs)
    pairs = [_pointwise_eigensystem(sys.P1, H) for H in (H_samples[:1] if sys.is_constant else H_samples)]
    eigenvalues = np.array([p[0] for p in pairs])
    vectors = np.array([p[1] for p in pairs])

    m = int(np.sum(eigenvalues[0] > 0))
    if np.any(np.sum(eigenvalues > 0, axis=1) != m):
        raise HyperbolicityError("not uniformly hyperbolic: number of positive characteristic speeds varies in xi")

    if not sys.is_constant:
        eigenvalues, vectors = _track(xs, eigenvalues, vectors, m)
    eigenvalues, vectors = _canonical_channel_order(eigenvalues, vectors, m)
    vectors = _normalize_phase(vectors)
    if sys.field.value == "real":
        vectors = np.real(vectors)

    speeds = np.abs(eigenvalues)
    P1D = np.diag([1.0] * m + [-1.0] * (n - m))
    P1inv = np.linalg.inv(sys.P1)

    if sys.is_constant:
        S_inv_value = vectors[0]
        S_value = np.linalg.inv(S_inv_value)
        HD_value = np.diag(speeds[0])
        P0D_value = S_value @ sys.P0_at(sys.a) @ P1inv @ S_inv_value @ P1D
        S_inv = SpatialMatrixFunction.constant(S_inv_value)
        S = SpatialMatrixFunction.constant(S_value)
        HD = SpatialMatrixFunction.constant(HD_value)
        P0D = SpatialMatrixFunction.constant(P0D_value)
        tau = tuple(float((sys.b - sys.a) / d) for d in speeds[0])
        relation = _relation_residual(sys.P1 @ H_samples[0], S_inv_value, P1D @ HD_value)
        P0D_norm = float(np.linalg.norm(P0D_value, 2))
        S_inv_b = S_inv_a = S_inv_value
    else:
        S_inv_values = vectors
        S_values = np.linalg.inv(S_inv_values)
        derivative = make_interp_spline(xs, S_inv_values, k=5, axis=0).derivative()(xs)
        P0_samples = sys.P0.sample(xs)
        P0D_values = S_values @ (derivative + P0_samples @ P1inv @ S_inv_values) @ P1D
        HD_values = np.array([np.diag(row) for row in speeds])
        S_inv = SpatialMatrixFunction.grid(xs, S_inv_values)
        S = SpatialMatrixFunction.grid(xs, S_values)
        HD = SpatialMatrixFunction.grid(xs, HD_values)
        P0D = SpatialMatrixFunction.grid(xs, P0D_values)
        tau = tuple(float(simpson(1 / speeds[:, j], x=xs)) for j in range(n))
        relation = max(
            _relation_residual(sys.P1 @ H_samples[i], S_inv_values[i], P1D @ HD_values[i])
            for i in range(len(xs))
        )
        P0D_norm = float(np.max(np.linalg.norm(P0D_values, 2, axis=(1, 2))))
        S_inv_a, S_inv_b = S_inv_values[0], S_inv_values[-1]

    if min(tau) <= 0:
        raise HyperbolicityError(f"nonpositive characteristic delay: {tau}")

    transform = np.zeros((2 * n, 2 * n), dtype=np.result_type(S_inv_a, float))
    transform[:n, :n] = P1inv @ S_inv_b @ P1D
    transform[n:, n:] = P1inv @ S_inv_a @ P1D
    WBD = sys.WB @ transform
    WCD = sys.WC @ transform

    P0D_is_zero = P0D_norm <= P0D_ZERO_TOL
    logger.debug(
        f"Diagonalized {sys.name or 'system'} on {len(xs)} points: m={m}, tau={tau}, "
        f"|P0D|={P0D_norm:.2e}, relation residual={relation:.2e}"
    )

    return DiagonalForm(
        n=n,
        a=sys.a,
        b=sys.b,
        m=m,
        S=S,
        S_inv=S_inv,
        HD=HD,
        P0D=P0D,
        WBD=WBD,
        WCD=WCD,
        tau=tau,
        P0D_is_zero=P0D_is_zero,
        P0D_residual=P0D_norm,
        relation_residual=relation,
        field=sys.field.value,
    )


def _relation_residual(P1H, S_inv, P1DHD):
    """|| P1 H - S^-1 P1^D H^D S || relative to || P1 H ||"""
    reconstructed = S_inv @ P1DHD @ np.linalg.inv(S_inv)
    return float(np.linalg.norm(P1H - reconstructed, 2) / max(1.0, np.linalg.norm(P1H, 2)))
