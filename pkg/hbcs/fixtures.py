"""Reference systems with known transfer functions, certificates and time responses"""

import numpy as np

from .errors import ParameterError
from .system_model import HyperbolicSystem, SpatialMatrixFunction

ROTATION_GRID_SIZE = 257

_OUTPUT_AT_A = [[0, 0, 1, 0], [0, 0, 0, 1]]
_SWAPPED_INPUT = [[-1, 0, 0.5, 0.5], [0, -1, -0.5, -0.5]]


def _system(name, P1, H, WB, WC, P0=None, a=0.0, b=1.0):
    P1 = np.atleast_2d(np.asarray(P1, dtype=float))
    n = P1.shape[0]
    if P0 is None:
        P0 = np.zeros((n, n))
    if not isinstance(H, SpatialMatrixFunction):
        H = SpatialMatrixFunction.constant(np.atleast_2d(np.asarray(H, dtype=float)))
    return HyperbolicSystem(
        n=n,
        a=a,
        b=b,
        P1=P1,
        P0=SpatialMatrixFunction.constant(np.atleast_2d(np.asarray(P0, dtype=float))),
        H=H,
        WB=np.asarray(WB, dtype=float),
        WC=np.asarray(WC, dtype=float),
        name=name,
    )


def transport():
    """Fixture A: unit transport, G(s) = exp(-s)"""
    return _system("fixtureA", [[1]], [[1]], [[1, 0]], [[0, 1]])


def feedback_transport():
    """Fixture B: transport with unit feedback, G(s) = 1 / (exp(s) - 1), not BIBO"""
    return _system("fixtureB", [[1]], [[1]], [[1, -1]], [[0, 1]])


def finite_response_pair():
    """Fixture C: two coupled transport lines with a finite impulse response"""
    return _system("fixtureC", np.eye(2), np.eye(2), _SWAPPED_INPUT, _OUTPUT_AT_A)


def unequal_speed_pair():
    """Fixture D: fixture C with H = diag(1/2, 1), which is not BIBO"""
    return _system("fixtureD", np.eye(2), np.diag([0.5, 1.0]), _SWAPPED_INPUT, _OUTPUT_AT_A)


def damped_string(rho=1.0, T=1.0, k=3.0):
    """Fixture E: vibrating string, fixed at one end, with a damper of gain k at the other"""
    if rho <= 0 or T <= 0:
        raise ParameterError(f"rho and T must be positive, got rho={rho}, T={T}")
    return _system(
        "fixtureE",
        [[0, 1], [1, 0]],
        np.diag([1 / rho, T]),
        [[k, 1, 0, 0], [0, 0, 1, 0]],
        [[1, 0, 0, 0], [0, 0, 0, 1]],
    )


def commensurate_pair():
    """Fixture F: equal delays whose reflections cancel in the second power"""
    return _system("fixtureF", np.eye(2), 2 * np.eye(2), [[1, 0, 0.5, 0.5], [0, 1, 0.5, -0.5]], _OUTPUT_AT_A)


def rotation_hamiltonian(xi):
    """H(xi) = R(xi) diag(1 + xi, 1 + 2 xi) R(xi)^T with R the rotation by xi"""
    return 0.5 * np.array([
        [2 + 3 * xi - xi * np.cos(2 * xi), -xi * np.sin(2 * xi)],
        [-xi * np.sin(2 * xi), 2 + 3 * xi + xi * np.cos(2 * xi)],
    ])


def rotating_hamiltonian(grid_size=ROTATION_GRID_SIZE):
    """Fixture G: non-constant H and P0 != 0 that still diagonalize with P0^D = 0"""
    xs = np.linspace(0.0, 1.0, grid_size)
    H = SpatialMatrixFunction.grid(xs, np.array([rotation_hamiltonian(x) for x in xs]))
    return _system("fixtureG", np.eye(2), H, [[1, 0, 0, 0], [0, 1, 0, 0]], _OUTPUT_AT_A, P0=[[0, 1], [-1, 0]])


def unit_row_sum_pair():
    """Fixture H: TV row sums of every power of M U equal one"""
    return _system("fixtureH", np.eye(2), np.diag([2.0, 1.0]), [[1, 0, 0.5, 0.5], [0, 1, -0.5, -0.5]], _OUTPUT_AT_A)


def impedance_passive_pair():
    """Fixture I: impedance passive yet not BIBO"""
    WC = 0.5 * np.array([[-1, -1, -1, -1], [1, -3, 1, -3]])
    return _system("fixtureI", np.eye(2), np.diag([0.5, 1.0]), _SWAPPED_INPUT, WC)


def no_km_string():
    """String-type system whose input matrix admits no (K, M) decomposition"""
    xs = np.linspace(0.0, 1.0, 33)
    H = SpatialMatrixFunction.grid(xs, np.array([np.diag([1 + x, 1.0]) for x in xs]))
    return _system("no_km_string", [[0, 1], [1, 0]], H, [[1, 0, -1, 0], [0, 1, 0, 1]], _OUTPUT_AT_A)


FIXTURES = {
    "fixtureA": transport,
    "fixtureB": feedback_transport,
    "fixtureC": finite_response_pair,
    "fixtureD": unequal_speed_pair,
    "fixtureE": damped_string,
    "fixtureF": commensurate_pair,
    "fixtureG": rotating_hamiltonian,
    "fixtureH": unit_row_sum_pair,
    "fixtureI": impedance_passive_pair,
    "no_km_string": no_km_string,
}


def get_fixture(name):
    try:
        return FIXTURES[name]()
    except KeyError:
        raise ParameterError(f"unknown fixture {name!r}; known: {', '.join(FIXTURES)}")
