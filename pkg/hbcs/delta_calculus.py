"""
Matrix-valued measures made of finitely many Dirac atoms.

Atoms are keyed by multi-indices c over a list of base delays, so the atom sits
at t = c . tau. Products stay exact on the index level; locations are only
compared numerically when atoms are merged for a total variation.
"""

import logging
from dataclasses import dataclass
from types import MappingProxyType
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ParameterError, StructuralError

logger = logging.getLogger(__name__)

DELAY_DEDUP_TOL = 1e-12
MERGE_TOL = 1e-9

MultiIndex = Tuple[int, ...]


@dataclass(frozen=True, eq=False)
class AtomicMeasure:
    """Finite sum of n x n matrix weights times delta(t - c . base_delays)"""

    n: int
    base_delays: Tuple[float, ...]
    atoms: Dict[MultiIndex, np.ndarray]

    def __post_init__(self):
        base_delays = tuple(float(t) for t in self.base_delays)
        if any(t <= 0 for t in base_delays):
            raise StructuralError(f"base delays must be positive, got {base_delays}")
        d = len(base_delays)

        atoms = {}
        for index, weight in self.atoms.items():
            index = tuple(int(c) for c in index)
            if len(index) != d or any(c < 0 for c in index):
                raise StructuralError(f"invalid multi-index {index} for {d} base delays")
            weight = np.array(weight)
            if weight.shape != (self.n, self.n):
                raise StructuralError(f"atom weight must be {self.n} x {self.n}, got {weight.shape}")
            if np.any(weight != 0):
                weight.setflags(write=False)
                atoms[index] = weight

        object.__setattr__(self, "base_delays", base_delays)
        object.__setattr__(self, "atoms", MappingProxyType(dict(sorted(atoms.items()))))

    @property
    def d(self):
        return len(self.base_delays)

    def __len__(self):
        return len(self.atoms)

    def location(self, index: MultiIndex) -> float:
        return float(np.dot(index, self.base_delays)) if index else 0.0

    def locations(self):
        return {index: self.location(index) for index in self.atoms}

    @property
    def dtype(self):
        return np.result_type(float, *self.atoms.values()) if self.atoms else np.dtype(float)


def delay_basis(tau: Sequence[float], rel_tol: float = DELAY_DEDUP_TOL):
    """Deduplicated base delays and, for every channel, the index of its base delay"""
    base: List[float] = []
    channel_index = []
    for t in tau:
        t = float(t)
        if t <= 0:
            raise ParameterError(f"delays must be positive, got {t}")
        for i, existing in enumerate(base):
            if abs(t - existing) <= rel_tol * max(t, existing):
                channel_index.append(i)
                break
        else:
            base.append(t)
            channel_index.append(len(base) - 1)
    return tuple(base), channel_index


def identity(n: int, base_delays: Sequence[float] = ()) -> AtomicMeasure:
    """delta_0 times the identity"""
    return AtomicMeasure(n, tuple(base_delays), {(0,) * len(base_delays): np.eye(n)})


def zero(n: int, base_delays: Sequence[float] = ()) -> AtomicMeasure:
    return AtomicMeasure(n, tuple(base_delays), {})


def _lift(a: AtomicMeasure, base_delays):
    """Re-express a measure supported at 0 without base delays over a nonempty basis"""
    d = len(base_delays)
    return AtomicMeasure(a.n, base_delays, {(0,) * d: w for w in a.atoms.values()})


def _compatible(a: AtomicMeasure, b: AtomicMeasure):
    if a.n != b.n:
        raise StructuralError(f"dimension mismatch: {a.n} vs {b.n}")
    if a.base_delays == b.base_delays:
        return a, b
    if not a.base_delays:
        return _lift(a, b.base_delays), b
    if not b.base_delays:
        return a, _lift(b, a.base_delays)
    raise StructuralError(f"incompatible delay bases: {a.base_delays} vs {b.base_delays}")


def add(a: AtomicMeasure, b: AtomicMeasure) -> AtomicMeasure:
    a, b = _compatible(a, b)
    atoms = {index: np.array(w) for index, w in a.atoms.items()}
    for index, w in b.atoms.items():
        atoms[index] = atoms[index] + w if index in atoms else np.array(w)
    return AtomicMeasure(a.n, a.base_delays, atoms)


def scale(a: AtomicMeasure, c, side: str = "left") -> AtomicMeasure:
    """Multiply every weight by a scalar or, on the given side, by an n x n matrix"""
    if side not in ("left", "right"):
        raise ParameterError(f"side must be 'left' or 'right', got {side!r}")
    if np.ndim(c) == 0:
        return AtomicMeasure(a.n, a.base_delays, {i: c * w for i, w in a.atoms.items()})
    c = np.asarray(c)
    if c.shape != (a.n, a.n):
        raise StructuralError(f"scaling matrix must be {a.n} x {a.n}, got {c.shape}")
    if side == "left":
        return AtomicMeasure(a.n, a.base_delays, {i: c @ w for i, w in a.atoms.items()})
    return AtomicMeasure(a.n, a.base_delays, {i: w @ c for i, w in a.atoms.items()})


def convolve(a: AtomicMeasure, b: AtomicMeasure) -> AtomicMeasure:
    """Convolution product: atoms at c1 + c2 with weights W1 W2"""
    a, b = _compatible(a, b)
    atoms: Dict[MultiIndex, np.ndarray] = {}
    for i1, w1 in a.atoms.items():
        for i2, w2 in b.atoms.items():
            index = tuple(x + y for x, y in zip(i1, i2))
            product = w1 @ w2
            atoms[index] = atoms[index] + product if index in atoms else product
    return AtomicMeasure(a.n, a.base_delays, atoms)


def power(a: AtomicMeasure, k: int) -> AtomicMeasure:
    if k < 0:
        raise ParameterError(f"power must be nonnegative, got {k}")
    result = identity(a.n, a.base_delays)
    for _ in range(k):
        result = convolve(result, a)
    return result


def merged_atoms(a: AtomicMeasure, merge_tol: Optional[float] = MERGE_TOL):
    """(location, weight) pairs sorted by location, coincident atoms summed"""
    pairs = sorted(((a.location(i), w) for i, w in a.atoms.items()), key=lambda pair: pair[0])
    if merge_tol is None:
        return [(t, np.array(w)) for t, w in pairs]

    merged = []
    for t, w in pairs:
        if merged:
            anchor = merged[-1][0]
            scale = max(abs(anchor), abs(t)) if anchor != 0 else 1.0
            if abs(t - anchor) <= merge_tol * scale:
                merged[-1][1] = merged[-1][1] + w
                continue
        merged.append([t, np.array(w)])
    return [(t, w) for t, w in merged]


def total_variation(a: AtomicMeasure, merge_tol: Optional[float] = MERGE_TOL):
    """Entrywise sum of absolute weights after merging atoms at equal locations"""
    result = np.zeros((a.n, a.n))
    for _, w in merged_atoms(a, merge_tol):
        result += np.abs(w)
    return result


def laplace_eval(a: AtomicMeasure, s: complex):
    """sum_c W_c exp(-s c . tau)"""
    s = complex(s)
    result = np.zeros((a.n, a.n), dtype=complex)
    for index, w in a.atoms.items():
        result += w * np.exp(-s * a.location(index))
    return result


def mu_measure(M, diag) -> AtomicMeasure:
    """Inverse Laplace transform of M U(s): column j of M sits at the unit multi-index of tau_j"""
    if not diag.P0D_is_zero:
        raise ParameterError(f"closed-form V/U requires P0^D = 0 (|P0^D| = {diag.P0D_residual:.3e})")
    M = np.asarray(M)
    n = M.shape[0]
    base_delays, channel_index = delay_basis(diag.tau)
    d = len(base_delays)

    atoms: Dict[MultiIndex, np.ndarray] = {}
    for j in range(n):
        index = tuple(int(i == channel_index[j]) for i in range(d))
        weight = atoms.setdefault(index, np.zeros((n, n), dtype=M.dtype))
        weight[:, j] += M[:, j]
    return AtomicMeasure(n, base_delays, atoms)


def neumann_partial_sum(mu: AtomicMeasure, order: int) -> AtomicMeasure:
    """sum_{k=0}^{order} mu^{*k}"""
    term = identity(mu.n, mu.base_delays)
    total = term
    for _ in range(order):
        term = convolve(term, mu)
        total = add(total, term)
    return total
