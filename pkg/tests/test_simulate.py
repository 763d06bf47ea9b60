import numpy as np
import pytest

from conftest import pipeline
from hbcs import fixtures
from hbcs.certify import gain_upper_bound, impulse_response
from hbcs.errors import ParameterError
from hbcs.simulate import (
    SWITCHING_SHARPNESS,
    InputKind,
    InputSignal,
    cross_check_impulse,
    linf_gain_probe,
    simulate,
)


def _at(trace, t):
    return trace.y[int(round(t / trace.dt))]


def _alternating(n=2, channel=1):
    """u_channel(t) = -cos(pi t), which is (-1)^(t+1) at integer t"""
    return InputSignal.sine_combination(n, [(channel, -1.0, np.pi, 0.0)])


class TestInputSignal:
    def test_constant(self):
        u = InputSignal.constant([1.0, -2.0])
        assert u.kind == InputKind.CONSTANT
        np.testing.assert_array_equal(u(3.0), [1.0, -2.0])

    def test_zero_before_start(self):
        u = InputSignal.constant([1.0])
        np.testing.assert_array_equal(u.evaluate([-0.5, 0.0]), [[0.0], [1.0]])

    def test_sampled_interpolates(self):
        u = InputSignal.sampled([0.0, 1.0, 2.0], [0.0, 2.0, 0.0])
        assert u(0.5)[0] == pytest.approx(1.0)
        assert u(5.0)[0] == 0.0

    def test_sampled_rejects_unordered_times(self):
        with pytest.raises(ParameterError):
            InputSignal.sampled([0.0, 2.0, 1.0], [0.0, 1.0, 2.0])

    def test_sine_combination(self):
        u = InputSignal.sine_combination(2, [(0, 2.0, np.pi, 0.0), (1, 1.0, 0.0, np.pi / 2)])
        np.testing.assert_allclose(u(1.0), [-2.0, 0.0], atol=1e-15)

    def test_sine_channel_out_of_range(self):
        with pytest.raises(ParameterError):
            InputSignal.sine_combination(2, [(2, 1.0, 1.0, 0.0)])

    def test_scaled(self):
        u = InputSignal.constant([2.0]).scaled(0.25)
        assert u(1.0)[0] == pytest.approx(0.5)


class TestSimulate:
    def test_transport_delays_input(self, system_a):
        diag, dec = pipeline(system_a)
        trace = simulate(diag, dec, InputSignal.constant([1.0]), T=3.0, dt=0.01)
        assert _at(trace, 0.5)[0] == 0.0
        assert _at(trace, 1.0)[0] == pytest.approx(1.0)
        assert _at(trace, 2.7)[0] == pytest.approx(1.0)
        assert trace.sup_y[-1] == pytest.approx(1.0)

    def test_feedback_staircase(self, system_b):
        diag, dec = pipeline(system_b)
        trace = simulate(diag, dec, InputSignal.constant([1.0]), T=10.0, dt=0.01)
        rng = np.random.default_rng(7)
        for t in rng.uniform(0.0, 10.0, size=50):
            t = round(t, 2)
            if abs(t - round(t)) < 0.005:
                continue
            assert _at(trace, t)[0] == pytest.approx(np.floor(t), abs=1e-12)

    def test_unequal_speeds_from_rest(self, system_d):
        diag, dec = pipeline(system_d)
        trace = simulate(diag, dec, _alternating(), T=5.0, dt=1e-3)
        # zero initial state; a nonzero initial state gives 2/3 and -7/6 at t = 1, 2 instead
        expected = [1.0, -1.5, 1.75, -2.125, 2.4375]
        for t, value in enumerate(expected, start=1):
            assert _at(trace, t)[1] == pytest.approx(value, abs=1e-6)

    def test_unequal_speeds_grow_linearly(self, system_d):
        diag, dec = pipeline(system_d)
        trace = simulate(diag, dec, _alternating(), T=30.0, dt=0.01)
        for t in range(1, 31):
            closed_form = (-1) ** (t + 1) * (3 * t + 7 - 4 * (-0.5) ** (t + 1)) / 9
            assert _at(trace, t)[1] == pytest.approx(closed_form, abs=1e-6)
            assert abs(_at(trace, t)[1]) >= 0.3 * t - 1

    def test_impedance_passive_pair_is_unbounded(self, system_i):
        diag, dec = pipeline(system_i)
        trace = simulate(diag, dec, _alternating(), T=30.0, dt=0.01)
        assert trace.sup_y[-1] - trace.sup_y[int(round(10.0 / trace.dt))] > 3.0

    def test_constant_input_within_gain_bound(self, system_e):
        diag, dec = pipeline(system_e)
        bound = gain_upper_bound(impulse_response(diag, dec, order=80))
        for signs in ([1.0, 1.0], [1.0, -1.0]):
            trace = simulate(diag, dec, InputSignal.constant(signs), T=20.0, dt=0.01)
            assert trace.sup_y[-1] <= bound + 1e-9

    def test_sup_is_running_maximum(self, system_e):
        diag, dec = pipeline(system_e)
        trace = simulate(diag, dec, _alternating(), T=5.0, dt=0.01)
        assert np.all(np.diff(trace.sup_y) >= 0)
        assert trace.sup_y[-1] == pytest.approx(np.max(np.abs(trace.y)))

    def test_delay_line_state(self, system_a):
        diag, dec = pipeline(system_a)
        trace = simulate(diag, dec, InputSignal.constant([1.0]), T=2.0, dt=0.1)
        assert len(trace.x_final) == 1
        assert len(trace.x_final[0]) == 11
        np.testing.assert_allclose(trace.x_final[0], np.ones(11))

    def test_non_integer_delay_ratio(self, system_f):
        diag, dec = pipeline(system_f)
        # u(0) = 0 keeps the response continuous, so linear resampling stays accurate
        u = InputSignal.sine_combination(2, [(1, 1.0, np.pi, -np.pi / 2)])
        exact = simulate(diag, dec, u, T=4.12, dt=0.01)
        interpolated = simulate(diag, dec, u, T=4.12, dt=0.0103)
        assert interpolated.sup_y[-1] == pytest.approx(exact.sup_y[-1], rel=0.01)

    def test_step_larger_than_delay(self, system_f):
        diag, dec = pipeline(system_f)
        with pytest.raises(ParameterError):
            simulate(diag, dec, _alternating(), T=2.0, dt=0.6)

    def test_channel_count_mismatch(self, system_f):
        diag, dec = pipeline(system_f)
        with pytest.raises(ParameterError):
            simulate(diag, dec, InputSignal.constant([1.0]), T=2.0, dt=0.1)


class TestSimulationProperties:
    @pytest.mark.parametrize("name,dt", [("fixtureD", 0.01), ("fixtureF", 0.0103)])
    def test_linear_in_the_input(self, name, dt):
        diag, dec = pipeline(fixtures.get_fixture(name))
        first = [(0, 1.0, 1.3, 0.2), (1, -0.5, 2.9, 1.0)]
        second = [(1, 0.7, 0.4, -1.1), (0, 0.3, 5.0, 0.0)]
        alpha, beta = 1.5, -0.75
        combined = InputSignal.sine_combination(
            2, [(c, alpha * a, f, p) for c, a, f, p in first] + [(c, beta * a, f, p) for c, a, f, p in second])
        y1 = simulate(diag, dec, InputSignal.sine_combination(2, first), T=8.0, dt=dt).y
        y2 = simulate(diag, dec, InputSignal.sine_combination(2, second), T=8.0, dt=dt).y
        y = simulate(diag, dec, combined, T=8.0, dt=dt).y
        np.testing.assert_allclose(y, alpha * y1 + beta * y2, atol=1e-12)

    @pytest.mark.parametrize("name", ["fixtureD", "fixtureE"])
    def test_causal(self, name):
        diag, dec = pipeline(fixtures.get_fixture(name))
        times = np.linspace(0.0, 10.0, 101)
        rng = np.random.default_rng(3)
        samples = rng.uniform(-1.0, 1.0, size=(101, 2))
        changed = samples.copy()
        changed[41:] = rng.uniform(-1.0, 1.0, size=(60, 2))
        # the inputs agree up to t0 = 4
        first = simulate(diag, dec, InputSignal.sampled(times, samples), T=10.0, dt=0.01)
        second = simulate(diag, dec, InputSignal.sampled(times, changed), T=10.0, dt=0.01)
        agree = first.times <= 4.0 + 1e-9
        np.testing.assert_allclose(first.y[agree], second.y[agree], atol=1e-13)
        assert not np.allclose(first.y[~agree], second.y[~agree])

    def test_unit_row_sums_bounded_inputs(self, system_h):
        diag, dec = pipeline(system_h)
        times = np.arange(0.0, 50.0 + 0.005, 0.01)
        slow, fast = (np.tanh(SWITCHING_SHARPNESS * np.cos(np.pi * times / period)) / np.tanh(SWITCHING_SHARPNESS)
                      for period in (1.0, 0.5))
        inputs = [InputSignal.constant([1.0, 1.0]), InputSignal.constant([1.0, -1.0]),
                  InputSignal.sampled(times, np.outer(slow, [1.0, 1.0])),
                  InputSignal.sampled(times, np.outer(slow, [1.0, -1.0])),
                  InputSignal.sampled(times, np.outer(fast, [1.0, 1.0]))]
        for u in inputs:
            assert simulate(diag, dec, u, T=50.0, dt=0.01).sup_y[-1] < 4.0

    def test_unit_row_sums_resonant_input_grows(self, system_h):
        # exp(-s/2) = -1 is a pole of G on the imaginary axis
        diag, dec = pipeline(system_h)
        u = InputSignal.sine_combination(2, [(0, 1.0, 2 * np.pi, 0.0), (1, -1.0, 2 * np.pi, 0.0)])
        trace = simulate(diag, dec, u, T=50.0, dt=0.01)
        assert trace.sup_y[-1] > 50.0
        assert trace.sup_y[-1] - trace.sup_y[int(round(25.0 / trace.dt))] > 20.0


class TestImpulseCrossCheck:
    @pytest.mark.parametrize("name,order,T", [("fixtureC", 8, 6.0), ("fixtureE", 40, 20.0), ("fixtureF", 40, 10.0)])
    def test_simulation_matches_measure(self, name, order, T):
        diag, dec = pipeline(fixtures.get_fixture(name))
        imp = impulse_response(diag, dec, order=order)
        u = InputSignal.sine_combination(2, [(0, 1.0, 1.3, 0.2), (1, -0.5, 2.9, 1.0)])
        assert cross_check_impulse(diag, dec, imp, u, T=T, dt=0.01) < 1e-8

    @pytest.mark.parametrize("name,order,T", [("fixtureC", 8, 6.0), ("fixtureE", 40, 20.0)])
    @pytest.mark.parametrize("seed", range(5))
    def test_seeded_smooth_inputs(self, name, order, T, seed):
        diag, dec = pipeline(fixtures.get_fixture(name))
        imp = impulse_response(diag, dec, order=order)
        rng = np.random.default_rng(seed)
        terms = [(channel, rng.uniform(-1, 1), rng.uniform(0, 2 * np.pi), rng.uniform(0, 2 * np.pi))
                 for channel in range(2) for _ in range(3)]
        u = InputSignal.sine_combination(2, terms)
        assert cross_check_impulse(diag, dec, imp, u, T=T, dt=0.01) <= 1e-6 + max(imp.tail_tv_bound)

    def test_short_horizon(self, system_e):
        diag, dec = pipeline(system_e)
        imp = impulse_response(diag, dec, order=0)
        with pytest.raises(ParameterError):
            cross_check_impulse(diag, dec, imp, InputSignal.constant([1.0, 0.0]), T=0.5, dt=0.01)


class TestGainLowerBound:
    def test_transport_has_unit_gain(self, system_a):
        diag, dec = pipeline(system_a)
        best, descriptor = linf_gain_probe(diag, dec, T=3.0, dt=0.01, trials=2, seed=1)
        assert best == pytest.approx(1.0)
        assert descriptor is not None

    def test_finite_response_pair(self, system_c):
        diag, dec = pipeline(system_c)
        best, _ = linf_gain_probe(diag, dec, T=5.0, dt=0.01, trials=0)
        assert best == pytest.approx(2.0)

    def test_feedback_transport_grows(self, system_b):
        diag, dec = pipeline(system_b)
        best, descriptor = linf_gain_probe(diag, dec, T=20.0, dt=0.01, trials=0)
        assert best >= 19.0
        assert descriptor.startswith("constant")

    def test_deterministic_for_seed(self, system_e):
        diag, dec = pipeline(system_e)
        first = linf_gain_probe(diag, dec, T=5.0, dt=0.01, trials=3, seed=11)
        second = linf_gain_probe(diag, dec, T=5.0, dt=0.01, trials=3, seed=11)
        assert first == second

    def test_bounded_by_certificate(self, system_e):
        diag, dec = pipeline(system_e)
        best, _ = linf_gain_probe(diag, dec, T=10.0, dt=0.01, trials=4, seed=0)
        assert best <= gain_upper_bound(impulse_response(diag, dec, order=80)) + 1e-9

    def test_negative_trials(self, system_e):
        diag, dec = pipeline(system_e)
        with pytest.raises(ParameterError):
            linf_gain_probe(diag, dec, T=5.0, dt=0.01, trials=-1)
