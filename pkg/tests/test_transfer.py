from dataclasses import replace

import numpy as np
import pytest

from conftest import pipeline
from hbcs import fixtures
from hbcs.delta_calculus import laplace_eval
from hbcs.errors import DomainError, ParameterError, ResolventError
from hbcs.system_model import SpatialMatrixFunction
from hbcs.transfer import (
    diagonal_system,
    factorized_transfer,
    fundamental_solution,
    neumann_abscissa,
    neumann_transfer,
    transfer_eval,
    transfer_grid,
    u_operator_norm,
    vu_matrices,
    z_eval,
    z_measure,
)

N_SWAP = 0.5 * np.array([[1.0, 1.0], [-1.0, -1.0]])


class TestFundamentalSolution:
    def test_identity_at_left_endpoint(self, system_e):
        np.testing.assert_array_equal(fundamental_solution(system_e, 2.0, 0.0), np.eye(2))

    def test_constant_coefficients(self, system_f):
        np.testing.assert_allclose(fundamental_solution(system_f, 2.0, 1.0), np.e * np.eye(2), rtol=1e-12)

    def test_string_is_hyperbolic_rotation(self, system_e):
        s = 0.7 + 0.2j
        expected = np.array([[np.cosh(s), np.sinh(s)], [np.sinh(s), np.cosh(s)]])
        np.testing.assert_allclose(fundamental_solution(system_e, s, 1.0), expected, rtol=1e-12)

    def test_outside_interval(self, system_e):
        with pytest.raises(DomainError):
            fundamental_solution(system_e, 1.0, 1.5)

    @pytest.mark.parametrize("s", [2.0, 0.4 - 3.0j])
    def test_constant_coefficient_semigroup(self, system_e, s):
        half = fundamental_solution(system_e, s, 0.5)
        np.testing.assert_allclose(fundamental_solution(system_e, s, 1.0), half @ half, rtol=1e-12, atol=1e-12)

    def test_semigroup_across_midpoint(self, system_g):
        s = 0.8 + 1.5j
        keep = system_g.H.xs >= 0.5
        right_half = replace(system_g, a=0.5,
                             H=SpatialMatrixFunction.grid(system_g.H.xs[keep], system_g.H.values[keep]))
        propagator = fundamental_solution(right_half, s, 1.0)
        np.testing.assert_allclose(fundamental_solution(system_g, s, 1.0),
                                   propagator @ fundamental_solution(system_g, s, 0.5), atol=1e-8)


class TestTransferEval:
    @pytest.mark.parametrize("s", [1.0, 2.0 + 3.0j, 0.1 - 4.0j])
    def test_transport_is_pure_delay(self, system_a, s):
        sample = transfer_eval(system_a, s)
        assert sample.G[0, 0] == pytest.approx(np.exp(-s), abs=1e-12)

    def test_feedback_transport(self, system_b):
        assert transfer_eval(system_b, 1.0).G[0, 0] == pytest.approx(1 / (np.e - 1), abs=1e-12)

    def test_feedback_transport_pole(self, system_b):
        with pytest.raises(ResolventError, match="boundary matrix singular"):
            transfer_eval(system_b, 0.0)

    def test_finite_response_pair(self, system_c):
        s = 0.5 + 1.0j
        expected = -np.exp(-s) * np.eye(2) - np.exp(-2 * s) * N_SWAP
        np.testing.assert_allclose(transfer_eval(system_c, s).G, expected, atol=1e-12)

    def test_damped_string(self, system_e):
        G = transfer_eval(system_e, 1.0).G
        assert G[0, 0] == pytest.approx(1 / (3 + 1 / np.tanh(1.0)), abs=1e-12)

    def test_commensurate_pair(self, system_f):
        e = np.e
        expected = np.array([
            [(1 - 2 * np.sqrt(e)) / (1 - 2 * e), 1 / (1 - 2 * e)],
            [1 / (1 - 2 * e), -(1 + 2 * np.sqrt(e)) / (1 - 2 * e)],
        ])
        np.testing.assert_allclose(transfer_eval(system_f, 1.0).G, expected, atol=1e-12)

    def test_condition_limit(self, system_e):
        with pytest.raises(ResolventError, match="s outside usable resolvent region"):
            transfer_eval(system_e, 1.0, resolvent_condition_limit=1.0)

    def test_grid(self, system_a):
        samples = transfer_grid(system_a, [1.0, 2.0, 3.0j])
        assert [sample.s for sample in samples] == [1.0, 2.0, 3.0j]
        assert all(sample.boundary_condition_number == pytest.approx(1.0) for sample in samples)


class TestFactorization:
    @pytest.mark.parametrize("name", ["fixtureA", "fixtureC", "fixtureD", "fixtureE", "fixtureF", "fixtureH",
                                      "fixtureI"])
    @pytest.mark.parametrize("s", [1.5, 1.5 + 2.0j, 3.0 - 0.5j])
    def test_matches_transfer_function(self, name, s):
        system = fixtures.get_fixture(name)
        diag, dec = pipeline(system)
        np.testing.assert_allclose(factorized_transfer(diag, dec, s), transfer_eval(system, s).G, atol=1e-9)

    @pytest.mark.parametrize("name", ["fixtureA", "fixtureC", "fixtureD", "fixtureE", "fixtureF", "fixtureH",
                                      "fixtureI"])
    def test_matches_at_random_points(self, name):
        system = fixtures.get_fixture(name)
        diag, dec = pipeline(system)
        rng = np.random.default_rng(2024)
        for s in rng.uniform(0.5, 3.0, size=20) + 1j * rng.uniform(-5.0, 5.0, size=20):
            np.testing.assert_allclose(factorized_transfer(diag, dec, s), transfer_eval(system, s).G, atol=1e-9)

    def test_rotating_hamiltonian(self, system_g):
        diag, dec = pipeline(system_g)
        s = 1.5 + 0.5j
        np.testing.assert_allclose(factorized_transfer(diag, dec, s), transfer_eval(system_g, s).G, atol=1e-6)

    def test_neumann_series_converges(self, system_e):
        diag, dec = pipeline(system_e)
        s = 1.0 + 1.0j
        np.testing.assert_allclose(neumann_transfer(diag, dec, s, 60), factorized_transfer(diag, dec, s),
                                   atol=1e-12)

    def test_neumann_order_zero(self, system_e):
        diag, dec = pipeline(system_e)
        np.testing.assert_allclose(neumann_transfer(diag, dec, 2.0, 0), z_eval(diag, 2.0) @ dec.Kinv)
        with pytest.raises(ParameterError):
            neumann_transfer(diag, dec, 2.0, -1)


class TestDelayFactors:
    def test_vu_matrices(self, system_e):
        diag, _ = pipeline(system_e)
        s = 0.5 + 1.0j
        V, V_inv, U = vu_matrices(diag, s)
        np.testing.assert_allclose(np.diag(U), np.exp(-s * np.array(diag.tau)))
        np.testing.assert_allclose(np.diag(V), [np.exp(s), 1.0])
        np.testing.assert_allclose(V @ V_inv, np.eye(2), atol=1e-14)

    @pytest.mark.parametrize("s", [0.3 + 2.0j, 1.0, 4.0 - 1.0j])
    def test_z_measure_transforms_to_z(self, system_e, s):
        diag, _ = pipeline(system_e)
        np.testing.assert_allclose(laplace_eval(z_measure(diag), s), z_eval(diag, s), atol=1e-13)

    def test_z_measure_of_unequal_speeds(self, system_d):
        diag, _ = pipeline(system_d)
        z = z_measure(diag)
        assert z.base_delays == (2.0, 1.0)
        np.testing.assert_allclose(laplace_eval(z, 0.4j), z_eval(diag, 0.4j), atol=1e-13)

    def test_u_operator_norm(self, system_e):
        diag, _ = pipeline(system_e)
        assert u_operator_norm(diag, 2.0 + 5.0j) == pytest.approx(np.exp(-2.0))
        assert u_operator_norm(diag, 2.0, p=1) == pytest.approx(np.exp(-2.0))
        with pytest.raises(ParameterError):
            u_operator_norm(diag, 2.0, p=0.5)

    def test_u_operator_norm_along_real_part(self, system_d):
        diag, _ = pipeline(system_d)
        assert u_operator_norm(diag, 7.0j) == pytest.approx(1.0)
        norms = [u_operator_norm(diag, alpha + 1.0j) for alpha in (0.1, 0.5, 1.0, 3.0)]
        assert all(later < earlier for earlier, later in zip(norms, norms[1:]))
        assert norms[0] == pytest.approx(np.exp(-0.1))

    def test_delay_matrix_on_random_points(self, system_d):
        diag, _ = pipeline(system_d)
        rng = np.random.default_rng(5)
        for omega in rng.uniform(-20.0, 20.0, size=20):
            _, _, U = vu_matrices(diag, 1j * omega)
            np.testing.assert_allclose(U @ U.conj().T, np.eye(2), atol=1e-12)
        for s in rng.uniform(0.0, 4.0, size=20) + 1j * rng.uniform(-20.0, 20.0, size=20):
            assert u_operator_norm(diag, s) == pytest.approx(u_operator_norm(diag, s.real), abs=1e-12)
            assert u_operator_norm(diag, s + 0.1) < u_operator_norm(diag, s)

    def test_neumann_abscissa(self, system_e):
        diag, _ = pipeline(system_e)
        assert neumann_abscissa(2 * np.eye(2), diag) == pytest.approx(np.log(2.0))
        assert neumann_abscissa(0.5 * np.eye(2), diag) == 0.0

    def test_requires_vanishing_P0D(self, system_e):
        diag, _ = pipeline(system_e)
        blocked = replace(diag, P0D_is_zero=False, P0D_residual=0.3)
        with pytest.raises(ParameterError, match="P0"):
            z_measure(blocked)
        with pytest.raises(ParameterError, match="P0"):
            vu_matrices(blocked, 1.0)


class TestDiagonalSystem:
    @pytest.mark.parametrize("name", ["fixtureC", "fixtureE", "fixtureF", "fixtureH"])
    def test_same_transfer_function(self, name):
        system = fixtures.get_fixture(name)
        diag, _ = pipeline(system)
        decoupled = diagonal_system(diag, name=f"{name}-diagonal")
        for s in (1.0, 0.5 + 2.0j):
            np.testing.assert_allclose(transfer_eval(decoupled, s).G, transfer_eval(system, s).G, atol=1e-9)

    def test_decoupled_coefficients(self, system_e):
        diag, _ = pipeline(system_e)
        decoupled = diagonal_system(diag)
        np.testing.assert_array_equal(decoupled.P1, np.diag([1.0, -1.0]))
        np.testing.assert_allclose(decoupled.P0_at(0.5), np.zeros((2, 2)), atol=1e-14)
