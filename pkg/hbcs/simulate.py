"""
Method-of-characteristics simulator for diagonal systems with P0^D = 0.

In diagonal coordinates every channel z_j = H^D_jj x_j is constant along its
characteristic, so the interior is a pure delay line of length tau_j:

    j <= m:  z_j(a, t) = z_j(b, t - tau_j)      (inflow at b)
    j >  m:  z_j(b, t) = z_j(a, t - tau_j)      (inflow at a)

Each step solves WB^D [z(b); z(a)] = u(t) for the inflow values.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from itertools import product
from typing import List, Optional, Tuple

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .certify import ImpulseTruncation
from .errors import ParameterError, SingularMatrixError
from .spectral import BoundaryDecomposition, DiagonalForm

logger = logging.getLogger(__name__)

EXACT_SHIFT_TOL = 1e-9
SWITCHING_SHARPNESS = 20.0
RANDOM_TERMS = 4


class InputKind(str, Enum):
    CONSTANT = "constant"
    SAMPLED = "sampled"
    SINE_COMBINATION = "sine_combination"


@dataclass(frozen=True, eq=False)
class InputSignal:
    """Boundary input u(t) on [0, T]

    sine_combination terms are (channel, amplitude, angular frequency, phase) and
    contribute amplitude * cos(frequency * t + phase) to their channel.
    """

    kind: InputKind
    n: int
    value: Optional[np.ndarray] = None
    times: Optional[np.ndarray] = None
    samples: Optional[np.ndarray] = None
    terms: Tuple[Tuple[int, float, float, float], ...] = ()
    gain: float = 1.0

    @classmethod
    def constant(cls, value):
        value = np.atleast_1d(np.asarray(value, dtype=float))
        return cls(InputKind.CONSTANT, len(value), value=value)

    @classmethod
    def sampled(cls, times, samples):
        times = np.asarray(times, dtype=float)
        samples = np.asarray(samples, dtype=float)
        if samples.ndim == 1:
            samples = samples[:, None]
        if len(times) < 2 or np.any(np.diff(times) <= 0) or samples.shape[0] != len(times):
            raise ParameterError("sampled input needs increasing times aligned with the samples")
        return cls(InputKind.SAMPLED, samples.shape[1], times=times, samples=samples)

    @classmethod
    def sine_combination(cls, n, terms):
        terms = tuple((int(c), float(a), float(f), float(p)) for c, a, f, p in terms)
        for channel, *_ in terms:
            if not 0 <= channel < n:
                raise ParameterError(f"input channel {channel} out of range for n={n}")
        return cls(InputKind.SINE_COMBINATION, n, terms=terms)

    def scaled(self, gain):
        return InputSignal(self.kind, self.n, self.value, self.times, self.samples, self.terms, self.gain * gain)

    def evaluate(self, t):
        """Values at the times t, shape (len(t), n); zero for t < 0"""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if self.kind == InputKind.CONSTANT:
            values = np.tile(self.value, (len(t), 1))
        elif self.kind == InputKind.SAMPLED:
            values = np.column_stack([np.interp(t, self.times, self.samples[:, c]) for c in range(self.n)])
        else:
            values = np.zeros((len(t), self.n))
            for channel, amplitude, frequency, phase in self.terms:
                values[:, channel] += amplitude * np.cos(frequency * t + phase)
        values = self.gain * values
        values[t < 0] = 0
        return values

    def __call__(self, t):
        return self.evaluate([t])[0]


@dataclass
class Trace:
    dt: float
    times: np.ndarray
    y: np.ndarray
    sup_y: np.ndarray
    x_final: List[np.ndarray] = field(default_factory=list)


def _boundary_solver(diag, dec):
    """LU factors of WB^D [P+; P-] and the matrix applied to the outflow values"""
    Pplus, Pminus = dec.signature.Pplus, dec.signature.Pminus
    inflow_matrix = diag.WBD @ np.vstack([Pplus, Pminus])
    outflow_matrix = diag.WBD @ np.vstack([Pminus, Pplus])
    sv = np.linalg.svd(inflow_matrix, compute_uv=False)
    if sv[-1] <= 1e-12 * max(1.0, sv[0]):
        raise SingularMatrixError("boundary coupling singular")
    return lu_factor(inflow_matrix), outflow_matrix


def _delayed(inflow, idx, shifts):
    """Inflow values shifts[j] steps before the steps idx, zero before t = 0"""
    out = np.zeros((len(idx), inflow.shape[1]), dtype=inflow.dtype)
    grid = np.arange(inflow.shape[0])
    for j, shift in enumerate(shifts):
        rounded = round(shift)
        if abs(shift - rounded) <= EXACT_SHIFT_TOL * shift:
            source = idx - rounded
            valid = source >= 0
            out[valid, j] = inflow[source[valid], j]
        else:
            position = idx - shift
            column = inflow[:, j]
            out[:, j] = np.interp(position, grid, column.real, left=0.0)
            if np.iscomplexobj(column):
                out[:, j] += 1j * np.interp(position, grid, column.imag, left=0.0)
    return out


def simulate(diag: DiagonalForm, dec: BoundaryDecomposition, u: InputSignal, T: float, dt: float) -> Trace:
    """Zero-initial-state response y on the uniform grid 0, dt, ..., T"""
    if not diag.P0D_is_zero:
        raise ParameterError("simulation requires P0^D = 0")
    if T <= 0 or dt <= 0:
        raise ParameterError(f"T and dt must be positive, got T={T}, dt={dt}")
    if dt > diag.tau_min:
        raise ParameterError(f"dt={dt} exceeds the shortest delay {diag.tau_min}")
    if u.n != diag.n:
        raise ParameterError(f"input has {u.n} channels, system has {diag.n}")

    n = diag.n
    lu, outflow_matrix = _boundary_solver(diag, dec)
    Pplus, Pminus = dec.signature.Pplus, dec.signature.Pminus

    steps = int(round(T / dt))
    times = dt * np.arange(steps + 1)
    U = u.evaluate(times)
    shifts = np.asarray(diag.tau) / dt
    dtype = np.result_type(diag.WBD, diag.WCD, U, float)

    inflow = np.zeros((steps + 1, n), dtype=dtype)
    outflow = np.zeros((steps + 1, n), dtype=dtype)

    # within a chunk every outflow value depends only on inflow from earlier chunks
    chunk = max(1, int(np.floor(diag.tau_min / dt * (1 + EXACT_SHIFT_TOL))))
    for start in range(0, steps + 1, chunk):
        idx = np.arange(start, min(start + chunk, steps + 1))
        out = _delayed(inflow, idx, shifts)
        rhs = U[idx] - out @ outflow_matrix.T
        inflow[idx] = lu_solve(lu, rhs.T).T
        outflow[idx] = out

    z_b = inflow @ Pplus.T + outflow @ Pminus.T
    z_a = inflow @ Pminus.T + outflow @ Pplus.T
    y = np.hstack([z_b, z_a]) @ diag.WCD.T
    if np.isrealobj(diag.WCD) and np.isrealobj(diag.WBD):
        y = np.real(y)
    sup_y = np.maximum.accumulate(np.max(np.abs(y), axis=1))

    x_final = []
    for j, shift in enumerate(shifts):
        cells = int(round(shift))
        line = inflow[max(0, steps - cells):, j][::-1]
        x_final.append(np.concatenate([line, np.zeros(cells + 1 - len(line), dtype=dtype)]))

    logger.debug(f"Simulated {steps} steps of dt={dt}: sup|y| = {sup_y[-1]:.6g}")
    return Trace(dt, times, y, sup_y, x_final)


def _sign_patterns(n):
    """Sign vectors in {+1, -1}^n with a leading +1"""
    return [np.array((1.0,) + rest) for rest in product((1.0, -1.0), repeat=n - 1)]


def _label(signs):
    return ",".join("+1" if s > 0 else "-1" for s in signs)


def _input_family(diag, T, dt, trials, seed):
    """(descriptor, input) pairs: constants, switching waves and seeded random smooth inputs"""
    n = diag.n
    family = []
    for signs in _sign_patterns(n):
        family.append((f"constant({_label(signs)})", InputSignal.constant(signs)))

    # smooth square waves switching once per delay
    times = np.arange(0.0, T + dt / 2, dt)
    for period in sorted(set(round(t, 12) for t in diag.tau)):
        wave = np.tanh(SWITCHING_SHARPNESS * np.cos(np.pi * times / period)) / np.tanh(SWITCHING_SHARPNESS)
        for signs in _sign_patterns(n):
            signal = InputSignal.sampled(times, np.outer(wave, signs))
            family.append((f"switching(period={period:.6g};{_label(signs)})", signal))

    rng = np.random.default_rng(seed)
    max_frequency = 2 * np.pi / diag.tau_min
    for trial in range(trials):
        terms = [
            (channel, rng.uniform(-1, 1), rng.uniform(0, max_frequency), rng.uniform(0, 2 * np.pi))
            for channel in range(n)
            for _ in range(RANDOM_TERMS)
        ]
        signal = InputSignal.sine_combination(n, terms)
        peak = float(np.max(np.abs(signal.evaluate(times))))
        if peak > 0:
            family.append((f"random(seed={seed};trial={trial})", signal.scaled(1 / peak)))
    return family


def linf_gain_probe(diag: DiagonalForm, dec: BoundaryDecomposition, T: float, dt: float,
                    trials: int = 8, seed: int = 0):
    """Empirical lower bound on the L-infinity gain over a deterministic input family"""
    if trials < 0:
        raise ParameterError(f"trials must be nonnegative, got {trials}")
    best, best_descriptor = 0.0, None
    for descriptor, signal in _input_family(diag, T, dt, trials, seed):
        trace = simulate(diag, dec, signal, T, dt)
        sup = float(trace.sup_y[-1])
        logger.debug(f"Gain input {descriptor}: sup|y| = {sup:.6g}")
        if sup > best:
            best, best_descriptor = sup, descriptor
    return best, best_descriptor


def convolve_input(imp: ImpulseTruncation, u: InputSignal, times):
    """(measure * u)(t) = sum of W u(t - location) over the atoms"""
    times = np.asarray(times, dtype=float)
    result = np.zeros((len(times), imp.measure.n), dtype=np.result_type(imp.measure.dtype, float))
    for index, weight in imp.measure.atoms.items():
        location = imp.measure.location(index)
        shifted_times = times - location
        # roundoff must not move a grid point that lands on the atom to t < 0
        shifted_times[np.abs(shifted_times) <= EXACT_SHIFT_TOL * max(1.0, location)] = 0.0
        shifted = u.evaluate(shifted_times)
        result += shifted @ np.asarray(weight).T
    return result


def cross_check_impulse(diag: DiagonalForm, dec: BoundaryDecomposition, imp: ImpulseTruncation,
                        u: InputSignal, T: float, dt: float) -> float:
    """sup_t |y_sim(t) - (measure * u)(t)| over the horizon the truncation covers"""
    horizon = min(T, imp.horizon)
    if horizon < diag.tau_min:
        raise ParameterError(f"horizon {horizon} is shorter than one delay {diag.tau_min}")

    trace = simulate(diag, dec, u, horizon, dt)
    # atoms dropped by the truncation start at the horizon itself
    keep = trace.times < imp.horizon - dt / 2
    predicted = convolve_input(imp, u, trace.times[keep])
    return float(np.max(np.abs(trace.y[keep] - predicted))) if np.any(keep) else 0.0
