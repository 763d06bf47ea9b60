import sys
from pathlib import Path

import pytest

# Add the project directory to Python path
sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from hbcs import fixtures
from hbcs.spectral import decompose_boundary, diagonalize, signature_projections

FIXTURE_DIR = Path(__file__).resolve().parent.parent / "fixtures"


def pipeline(system, grid_size=257):
    """Diagonal form and the decomposition of its input matrix"""
    diag = diagonalize(system, grid_size)
    dec = decompose_boundary(diag.WBD, signature_projections(diag.P1D), diag.P1D)
    return diag, dec


@pytest.fixture
def fixture_dir():
    return FIXTURE_DIR


@pytest.fixture
def system_a():
    return fixtures.transport()


@pytest.fixture
def system_b():
    return fixtures.feedback_transport()


@pytest.fixture
def system_c():
    return fixtures.finite_response_pair()


@pytest.fixture
def system_d():
    return fixtures.unequal_speed_pair()


@pytest.fixture
def system_e():
    return fixtures.damped_string()


@pytest.fixture
def system_f():
    return fixtures.commensurate_pair()


@pytest.fixture(scope="session")
def system_g():
    return fixtures.rotating_hamiltonian()


@pytest.fixture
def system_h():
    return fixtures.unit_row_sum_pair()


@pytest.fixture
def system_i():
    return fixtures.impedance_passive_pair()
