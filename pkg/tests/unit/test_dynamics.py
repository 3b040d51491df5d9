import math

import numpy as np
import pytest

from core.blocks import solve_off_frequency
from core.dynamics import (
    DEFAULT_TOL, amplification_sequence, calibrate_gate_duration, gate_length_scan, locate_valley,
    nominal_gate_duration, propagate, simulate_cz, static_builder, sweep_coupler_frequency,
    three_level_builder, unitary_step
)
from core.hamiltonian import ThreeLevelH, build_three_level
from core.pulses import ControlSchedule, PulseShape, PulseSpec, flattop_gaussian
from utils.error_handling import IntegrationError, ValidationError


@pytest.mark.unit
class TestPulses:
    """Flat-top Gaussian envelopes"""

    def setup_method(self):
        self.spec = PulseSpec(PulseShape.FLAT_TOP_GAUSSIAN, 6.406, 5.6, 2.0, 7.5, 40.0)

    def test_end_points_and_plateau(self):
        assert self.spec(0.0) == pytest.approx(6.406, abs=1e-12)
        assert self.spec(40.0) == pytest.approx(6.406, abs=1e-12)
        assert self.spec(20.0) == pytest.approx(5.6, abs=1e-12)

    def test_symmetric(self):
        t = np.linspace(0, 40, 81)
        np.testing.assert_allclose(flattop_gaussian(t, self.spec), flattop_gaussian(40 - t, self.spec), atol=1e-12)

    def test_monotone_ramp(self):
        values = flattop_gaussian(np.linspace(0, 20, 201), self.spec)
        assert np.all(np.diff(values) <= 1e-12)

    def test_constant_shape(self):
        spec = PulseSpec(PulseShape.CONSTANT, 6.0, 5.5, 1.0, 0.0, 10.0)
        assert spec(0.0) == 5.5
        assert spec(7.0) == 5.5

    def test_invalid_specs(self):
        with pytest.raises(ValidationError):
            PulseSpec(PulseShape.FLAT_TOP_GAUSSIAN, 6.0, 5.5, 0.0, 7.5, 40.0)
        with pytest.raises(ValidationError):
            PulseSpec(PulseShape.FLAT_TOP_GAUSSIAN, 6.0, 5.5, 2.0, 25.0, 40.0)

    def test_flat_top_schedule(self, bundled_config):
        schedule = ControlSchedule.flat_top(bundled_config, 5.6)
        f_l, f_cs = schedule.controls(0.0)
        assert f_l == pytest.approx(4.260)
        assert f_cs == pytest.approx(5.6)
        f_l, f_cs = schedule.controls(20.0)
        assert f_l == pytest.approx(4.276)
        assert f_cs == pytest.approx(5.6)
        assert schedule.gate_total_ns == 40.0
        assert schedule.f_cs.shape is PulseShape.CONSTANT

    def test_flat_top_schedule_with_coupler_ramp(self, bundled_config):
        schedule = ControlSchedule.flat_top(bundled_config, 5.6, ramp_coupler=True, f_l_plateau=4.28)
        assert schedule.controls(0.0) == pytest.approx((4.260, 6.406))
        assert schedule.controls(20.0) == pytest.approx((4.28, 5.6))
        assert schedule.with_coupler(5.7).controls(40.0)[1] == pytest.approx(6.406)
        assert schedule.with_coupler(5.7).controls(20.0)[1] == pytest.approx(5.7)

    def test_schedule_updates(self, bundled_config):
        schedule = ControlSchedule.flat_top(bundled_config, 5.6)
        assert schedule.with_coupler(5.7).controls(20.0)[1] == pytest.approx(5.7)
        short = schedule.with_duration(10.0)
        assert short.gate_total_ns == 10.0
        assert short.f_l.buffer_ns == 5.0

    def test_mismatched_durations(self):
        with pytest.raises(ValidationError):
            ControlSchedule(PulseSpec(PulseShape.CONSTANT, 4.2, 4.2, 1.0, 0.0, 10.0),
                            PulseSpec(PulseShape.CONSTANT, 5.6, 5.6, 1.0, 0.0, 20.0), 10.0)


@pytest.mark.unit
class TestPropagator:
    """Adaptive unitary integrator"""

    def test_unitary_step(self):
        u = unitary_step(np.array([[0.1, 0.02], [0.02, -0.05]]), 3.0)
        np.testing.assert_allclose(u.conj().T @ u, np.eye(2), atol=1e-14)

    def test_rabi_oscillation(self):
        g = 0.025
        h = np.array([[0.0, g], [g, 0.0]])
        states = propagate(lambda t: h, [1.0, 0.0], [0.0, 5.0, 10.0])
        populations = np.abs(states) ** 2
        assert populations[1, 1] == pytest.approx(0.5, abs=1e-8)
        assert populations[2, 1] == pytest.approx(1.0, abs=1e-8)

    def test_time_dependent_detuning(self):
        # phase ramp: -2 pi * 0.005 t^2, exact under the midpoint rule
        states = propagate(lambda t: np.array([[0.01 * t]]), [1.0], [0.0, 5.0])
        assert np.angle(states[-1, 0]) == pytest.approx(-math.pi / 4, abs=1e-9)

    def test_norm_checked(self):
        with pytest.raises(ValidationError):
            propagate(lambda t: np.eye(2), [1.0, 1.0], [0.0, 1.0])

    def test_decreasing_grid(self):
        with pytest.raises(ValidationError):
            propagate(lambda t: np.eye(2), [1.0, 0.0], [1.0, 0.0])

    def test_step_underflow(self):
        # a generator that changes abruptly at every evaluation never meets the tolerance
        rng = np.random.default_rng(0)
        with pytest.raises(IntegrationError):
            propagate(lambda t: (lambda a: a + a.T)(rng.normal(0, 50, (2, 2))), [1.0, 0.0],
                      [0.0, 1.0], tol=1e-14)


@pytest.mark.unit
class TestIntegratorQuality:
    """Accuracy of the propagator over a full 40 ns pulsed gate"""

    @pytest.fixture
    def pulsed_gate(self, bundled_config):
        builder = three_level_builder(bundled_config, 4.27)
        return builder, ControlSchedule.flat_top(bundled_config, 5.6, ramp_coupler=True)

    def test_norm_drift(self, pulsed_gate):
        builder, schedule = pulsed_gate
        result = simulate_cz(builder, schedule, n_samples=41)
        norms = np.linalg.norm(np.sqrt(result.trajectory.populations), axis=1)
        assert np.max(np.abs(norms - 1.0)) < 1e-9
        assert abs(np.linalg.norm(result.final_state) - 1.0) < 1e-9
        assert result.warnings == []

    def test_halving_tolerance(self, pulsed_gate):
        builder, schedule = pulsed_gate
        coarse = simulate_cz(builder, schedule, tol=DEFAULT_TOL)
        fine = simulate_cz(builder, schedule, tol=DEFAULT_TOL / 2)
        assert abs(fine.total_leakage - coarse.total_leakage) < 1e-8
        np.testing.assert_allclose(np.abs(fine.final_state) ** 2, np.abs(coarse.final_state) ** 2, atol=1e-8)


@pytest.mark.unit
class TestGateDuration:
    """Return time of |11> under the bright block"""

    def test_resonant_block(self):
        h = ThreeLevelH(f11=5.0, f02=5.0, fS=5.1, g_gate=0.025, g1=0.0, g2=0.0)
        assert calibrate_gate_duration(h) == pytest.approx(20.0, abs=1e-6)
        assert nominal_gate_duration(h) == pytest.approx(40.0)

    def test_bundled_device(self, bundled_config):
        f_off = solve_off_frequency(bundled_config, 4.27).f_cs_off
        h = build_three_level(bundled_config, f_off, 4.27)
        tau = calibrate_gate_duration(h)
        assert tau == pytest.approx(18.515, abs=0.05)
        assert nominal_gate_duration(h) == pytest.approx(2 * tau, rel=1e-3)


@pytest.mark.unit
class TestSimulateCZ:
    """Single-gate simulation"""

    def setup_method(self):
        self.h = ThreeLevelH(f11=0.0, f02=0.0, fS=-0.006, g_gate=0.027, g1=0.0005, g2=0.0)

    def test_zero_length_gate(self):
        result = simulate_cz(static_builder(self.h), ControlSchedule.rectangular(4.276, 5.6, 0.0))
        assert result.total_leakage == 0.0
        assert result.p_return_11 == 1.0
        assert result.conditional_phase == 0.0

    def test_trajectory(self):
        result = simulate_cz(static_builder(self.h), ControlSchedule.rectangular(4.276, 5.6, 18.0), n_samples=25)
        rows = result.trajectory.rows()
        assert len(rows) == 25
        assert rows[0][:2] == [0.0, 1.0]
        for t, p11, p02, ps, pd in rows:
            assert p11 + p02 + ps == pytest.approx(1.0, abs=1e-9)
            assert 0.0 <= pd <= 1.0

    def test_leakage_reported_per_spectator(self):
        result = simulate_cz(static_builder(self.h), ControlSchedule.rectangular(4.276, 5.6, 18.0))
        assert len(result.p_leak_S) == 1
        assert result.total_leakage == result.p_leak_S[0]
        assert result.warnings == []

    def test_off_point_suppresses_leakage(self, bundled_config):
        f_off = solve_off_frequency(bundled_config, 4.27).f_cs_off
        tau = calibrate_gate_duration(build_three_level(bundled_config, f_off, 4.27))
        builder = three_level_builder(bundled_config, 4.27)
        at_off = simulate_cz(builder, ControlSchedule.rectangular(4.276, f_off, tau))
        at_idle = simulate_cz(builder, ControlSchedule.rectangular(4.276, 6.406, tau))
        assert at_off.total_leakage < 1e-8
        assert at_off.p_return_11 > 1 - 1e-6
        assert abs(abs(at_off.conditional_phase) - math.pi) < 1e-3
        assert at_idle.total_leakage > 1e-3
        for shift in (-0.03, 0.03):
            detuned = simulate_cz(builder, ControlSchedule.rectangular(4.276, f_off + shift, tau))
            assert detuned.total_leakage > 100 * at_off.total_leakage

    def test_flat_top_gate_runs(self, bundled_config, flat_top_cz):
        f_off = solve_off_frequency(bundled_config, 4.27).f_cs_off
        builder = three_level_builder(bundled_config, 4.27)
        at_off = simulate_cz(builder, flat_top_cz.schedule.with_coupler(f_off))
        at_idle = simulate_cz(builder, flat_top_cz.schedule.with_coupler(6.406))
        assert 0.0 <= at_off.total_leakage < 0.01 * at_idle.total_leakage
        assert at_off.p_return_11 > 0.999


@pytest.mark.unit
class TestFlatTopCalibration:
    """Flat-top CZ tuned for a complete |11> return"""

    def test_complete_return(self, flat_top_cz):
        assert flat_top_cz.p_return_11 > 0.999
        assert flat_top_cz.p_02 < 1e-4
        assert flat_top_cz.warnings == []

    def test_length_beyond_buffers(self, bundled_config, flat_top_cz):
        schedule = flat_top_cz.schedule
        assert 2 * bundled_config.gate_param("buffer_ns") < flat_top_cz.total_ns < 45.0
        assert schedule.f_l.buffer_ns == bundled_config.gate_param("buffer_ns")
        assert schedule.controls(flat_top_cz.total_ns / 2)[0] == pytest.approx(bundled_config.operating_point)

    def test_spectator_parked_at_idle(self, bundled_config, flat_top_cz):
        assert flat_top_cz.f_s_parked == pytest.approx(bundled_config.mode("q_s").f_idle)
        assert flat_top_cz.schedule.controls(0.0)[1] == pytest.approx(6.406)


@pytest.mark.unit
class TestSweeps:
    """Coupler and gate-length sweeps"""

    def test_locate_valley_refines(self):
        grid = np.linspace(-1, 1, 11)
        values = (grid - 0.13) ** 2
        x, y = locate_valley(grid, values, lambda f: (f - 0.13) ** 2)
        assert x == pytest.approx(0.13, abs=1e-6)
        assert y < 1e-10

    def test_valley_at_off_point(self, bundled_config):
        f_off = solve_off_frequency(bundled_config, 4.27).f_cs_off
        tau = calibrate_gate_duration(build_three_level(bundled_config, f_off, 4.27))
        schedule = ControlSchedule.rectangular(4.276, f_off, tau)
        curve = sweep_coupler_frequency(bundled_config, 4.27, np.arange(5.50, 5.705, 0.01), schedule)
        assert abs(curve.f_min - f_off) < 0.005
        assert curve.idle_f_cs == pytest.approx(6.406)
        assert curve.p_min <= curve.p_leak.min()

    def test_empty_grid(self, bundled_config):
        with pytest.raises(ValidationError):
            sweep_coupler_frequency(bundled_config, 4.27, [], ControlSchedule.rectangular(4.276, 5.6, 10.0))

    def test_gate_length_scan(self):
        h = ThreeLevelH(f11=0.0, f02=0.0, fS=-0.006, g_gate=0.027, g1=0.0, g2=0.003)
        rows = gate_length_scan(static_builder(h), ControlSchedule.rectangular(4.276, 5.6, 10.0), [0.0, 5.0, 10.0])
        assert [r[0] for r in rows] == [0.0, 5.0, 10.0]
        assert rows[0][1] == 0.0
        assert rows[2][1] > 0.0

    def test_amplification_sequence(self):
        h = ThreeLevelH(f11=0.0, f02=0.0, fS=-0.006, g_gate=0.027, g1=0.0005, g2=0.0)
        tau = calibrate_gate_duration(h)
        populations = amplification_sequence(h, tau, 10.0, 30)
        assert populations.shape == (31,)
        assert populations[0] == 0.0
        assert np.all((populations >= 0) & (populations <= 1))
        assert populations[1] > 0.0
