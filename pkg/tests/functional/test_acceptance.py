import math

import numpy as np
import pytest

from core.blocks import bright_dark_frame, multi_spectator_g2, solve_off_frequency, sweep_off_frequency
from core.dynamics import (
    calibrate_gate_duration, simulate_cz, sweep_coupler_frequency, three_level_builder
)
from core.hamiltonian import build_multi_level, build_three_level
from core.metrology import (
    additivity_report, calibrate_beta_fitter, calibrate_fitter, error_budget, fit_leakage_population,
    synth_xeb_data
)
from core.pulses import ControlSchedule

DEPTHS = np.arange(0, 501, 10)
SPECTATOR_DETUNINGS = [-0.03, -0.02, -0.01, -0.005, 0.005, 0.01, 0.02, 0.03]


@pytest.mark.functional
class TestLeakageSuppression:
    """Off-point prediction against simulated gates on the bundled device"""

    @pytest.mark.parametrize("detuning", SPECTATOR_DETUNINGS)
    def test_off_point_suppresses_rectangular_gate(self, bundled_config, detuning):
        f_s = bundled_config.operating_point + detuning
        f_off = solve_off_frequency(bundled_config, f_s).f_cs_off
        h = build_three_level(bundled_config, f_off, f_s)
        tau = calibrate_gate_duration(h)
        builder = three_level_builder(bundled_config, f_s)
        f_l = bundled_config.operating_point
        at_off = simulate_cz(builder, ControlSchedule.rectangular(f_l, f_off, tau), n_samples=50)
        at_idle = simulate_cz(builder, ControlSchedule.rectangular(f_l, 6.406, tau))
        assert at_off.total_leakage < 1e-6
        assert max(row[4] for row in at_off.trajectory.rows()) < 1e-8
        assert at_idle.total_leakage > 100 * at_off.total_leakage

    def test_off_point_tracks_spectator_frequency(self, bundled_config):
        solutions, warnings = sweep_off_frequency(bundled_config, [4.25, 4.27, 4.29])
        assert warnings == []
        for s in solutions:
            h = build_three_level(bundled_config, s.f_cs_off, s.f_s)
            assert abs(bright_dark_frame(h).g_BD) < 1e-6
            assert h.g2 == pytest.approx(multi_spectator_g2(h.g_gate, [(h.g1, h.fS)], h.f11, h.f02)[0],
                                         abs=2e-6)

    def test_flat_top_valley_at_off_point(self, bundled_config, flat_top_cz):
        f_off = solve_off_frequency(bundled_config, 4.27).f_cs_off
        schedule = flat_top_cz.schedule
        curve = sweep_coupler_frequency(bundled_config, 4.27, np.arange(5.50, 5.705, 0.01), schedule)
        assert abs(curve.f_min - f_off) < 0.005
        idle = simulate_cz(three_level_builder(bundled_config, 4.27), schedule.with_coupler(6.406))
        assert curve.p_min < 0.01 * idle.total_leakage

    def test_three_spectators_leak_independently(self, multi_config):
        f_s = [4.27, 4.30, 4.24]
        f_cs = [6.406, 6.406, 6.406]
        h = build_multi_level(multi_config, f_cs, f_s)

        def builder(f_l, f_cs_now):
            return build_multi_level(multi_config, [f_cs_now] * 3, f_s, f_l=f_l)

        schedule = ControlSchedule.rectangular(multi_config.operating_point, 6.406, 20.0)
        joint = simulate_cz(builder, schedule)
        singles = [simulate_cz(lambda f_l, f_cs_now, i=i: builder(f_l, f_cs_now).single(i), schedule)
                   for i in range(3)]
        assert h.n_spectators == 3
        for single, joint_value in zip(singles, joint.p_leak_S):
            assert joint_value == pytest.approx(single.total_leakage, rel=0.2, abs=1e-6)
        report = additivity_report([s.total_leakage for s in singles], joint.total_leakage, tolerance=0.1)
        assert report.additive
        assert report.relative_error <= 0.1
        assert report.total == pytest.approx(report.sum_single, rel=0.1)


@pytest.mark.functional
class TestErrorBudget:
    """Budget numbers of the bundled device"""

    def test_seepage_and_floor(self, bundled_config):
        budget = error_budget(bundled_config, 0.01, L1=1.21e-3)
        assert budget.L2_seepage == pytest.approx(4.6586e-3, rel=1e-4)
        assert budget.L1_min_floor == pytest.approx(4.6586e-5, rel=1e-4)
        assert budget.L1_min_exact == pytest.approx(4.7057e-5, rel=1e-4)
        assert budget.eps_leak == pytest.approx(1.5125e-3)

    def test_synthetic_decay_from_budget(self, bundled_config):
        budget = error_budget(bundled_config, 0.01)
        data = synth_xeb_data(1.21e-3, budget.L2_seepage, 0.01, DEPTHS)
        fit = fit_leakage_population(data.depths, data.leak)
        assert fit.L1 == pytest.approx(1.21e-3, rel=1e-4)
        assert fit.L2 == pytest.approx(budget.L2_seepage, rel=1e-4)


@pytest.mark.functional
@pytest.mark.slow
class TestFitterCalibration:
    """Coverage of the leakage fit's error bars on noisy synthetic data"""

    def test_typical_leakage(self):
        report = calibrate_fitter(1.21e-3, 4.66e-3, 0.01, DEPTHS, shots=2000, trials=100, seed=2024)
        assert report.hits >= 95
        estimates = np.array(report.estimates)
        assert np.nanmean(estimates) == pytest.approx(1.21e-3, rel=0.05)

    def test_suppressed_leakage(self):
        report = calibrate_fitter(4e-5, 4.66e-3, 0.0, DEPTHS, shots=20000, trials=100, seed=7)
        assert report.hits >= 80
        assert math.isfinite(float(np.nanmedian(report.estimates)))

    def test_reproducible(self):
        a = calibrate_fitter(1.21e-3, 4.66e-3, 0.01, DEPTHS, shots=2000, trials=5, seed=3)
        b = calibrate_fitter(1.21e-3, 4.66e-3, 0.01, DEPTHS, shots=2000, trials=5, seed=3)
        assert a.estimates == b.estimates

    def test_amplified_leakage_fit(self):
        beta = 0.069626
        report = calibrate_beta_fitter(beta, 0.3, np.arange(41), shots=2000, trials=100, seed=11)
        assert report.hits >= 95
        assert np.nanmean(report.estimates) == pytest.approx(math.sin(beta) ** 2 / 4, rel=0.1)
