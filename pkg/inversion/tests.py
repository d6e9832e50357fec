import math

import numpy as np
from django.test import SimpleTestCase, override_settings
from hypothesis import given, settings as hyp_settings, strategies as st

from forward.services import ricker, synthesize_traces
from forward.traces import SourcePulse, TimeTrace
from medium.exceptions import DegenerateInputError, NoArrivalError, PreconditionError, TerminalLayer
from medium.profile import CONSTANTS, ComplexFrequency, MediumProfile
from medium.services import reference_scenario, wavenumber_squared

from .services import (
    FLAG_TERMINAL,
    FLAG_UNRELIABLE,
    LayerEstimate,
    ReconstructionReport,
    bottom_arrivals,
    detect_impulses,
    estimate_k_top,
    invert_profile,
    mute_before,
    recover_eps_sigma,
    score_report,
    separate_waves,
    strip_layer,
    thickness_from_arrivals,
)

FC = 200e6
PULSE = SourcePulse(central_frequency=FC)
DT = 3e-10
OMEGA1 = 2 * math.pi * FC


def synthesize(profile, n_samples=2 ** 12):
    return synthesize_traces(profile, PULSE, n_samples, DT, nz=16)


class WavenumberEstimateTests(SimpleTestCase):
    def test_outgoing_plane_wave_gives_exact_wavenumber(self):
        k, z = complex(-12.0, 7.5), 0.3
        E = np.exp(1j * k * z)
        self.assertLess(abs(estimate_k_top(E, 1j * k * E) - k), 1e-13 * abs(k))

    def test_zero_field_is_degenerate(self):
        with self.assertRaises(DegenerateInputError):
            estimate_k_top(0.0, 1.0)


class RecoveryFormulaTests(SimpleTestCase):
    def test_round_trip_at_complex_frequency(self):
        omega = ComplexFrequency(OMEGA1, -0.9 * OMEGA1)
        eps, sigma = recover_eps_sigma(wavenumber_squared(4.0, 1e-4, 1.0, omega), omega, 1.0)
        self.assertLess(abs(eps - 4.0) / 4.0, 1e-12)
        self.assertLess(abs(sigma - 1e-4) / 1e-4, 1e-12)

    def test_vacuum_at_real_frequency(self):
        omega = ComplexFrequency(OMEGA1)
        eps, sigma = recover_eps_sigma(OMEGA1 ** 2 / CONSTANTS.c ** 2, omega, 1.0)
        self.assertAlmostEqual(eps, 1.0, places=12)
        self.assertEqual(sigma, 0.0)

    def test_real_frequency_branch(self):
        omega = ComplexFrequency(OMEGA1)
        eps, sigma = recover_eps_sigma(wavenumber_squared(9.0, 3e-3, 2.0, omega), omega, 2.0)
        self.assertAlmostEqual(eps, 9.0, places=10)
        self.assertAlmostEqual(sigma / 3e-3, 1.0, places=10)

    def test_permittivity_identity(self):
        omega = ComplexFrequency(OMEGA1, -0.6 * OMEGA1)
        k2 = wavenumber_squared(7.0, 2e-3, 1.5, omega)
        lhs = k2.real + omega.ratio * k2.imag
        rhs = 1.5 * 7.0 * omega.modulus ** 2 / CONSTANTS.c ** 2
        self.assertLess(abs(lhs - rhs) / rhs, 1e-13)

    @given(st.floats(1.0, 80.0), st.floats(0.0, 10.0), st.floats(1.0, 5.0),
           st.floats(1e6, 1e10), st.floats(-1.0, -1e-3))
    @hyp_settings(max_examples=300, derandomize=True)
    def test_round_trip_property(self, eps, loss_tangent, mu, omega1, ratio):
        omega = ComplexFrequency.from_ratio(omega1, ratio)
        sigma = loss_tangent * CONSTANTS.eps0 * eps * omega1
        eps_hat, sigma_hat = recover_eps_sigma(wavenumber_squared(eps, sigma, mu, omega), omega, mu)
        self.assertLess(abs(eps_hat - eps), 1e-12 * eps)
        # sigma is ill-conditioned when the loss tangent is tiny
        scale = sigma + CONSTANTS.eps0 * eps * omega.modulus / abs(ratio)
        self.assertLess(abs(sigma_hat - sigma), 1e-12 * scale)


class ImpulseDetectionTests(SimpleTestCase):
    def two_pulse_trace(self, a, b, second=-0.4):
        t = np.arange(1024) * DT
        E = (ricker(t, SourcePulse(FC, delay=a)) + second * ricker(t, SourcePulse(FC, delay=b)))
        return TimeTrace(dt=DT, E=E, E_z=np.zeros_like(E), pulse=PULSE)

    def test_two_separated_pulses(self):
        a, b = 5.01e-8, 1.4987e-7
        arrivals = detect_impulses(self.two_pulse_trace(a, b))
        self.assertEqual(len(arrivals), 2)
        self.assertLess(abs(arrivals[0] - a), 2 * DT)
        self.assertLess(abs(arrivals[1] - b), 2 * DT)

    def test_single_pulse(self):
        self.assertEqual(len(detect_impulses(self.two_pulse_trace(5e-8, 1.5e-7, second=0.0))), 1)

    def test_close_maxima_are_merged(self):
        trace = self.two_pulse_trace(5e-8, 5e-8 + 0.6 * PULSE.width, second=0.8)
        self.assertEqual(len(detect_impulses(trace)), 1)

    def test_noise_below_floor(self):
        noise = np.random.default_rng(3).normal(size=1024) * 1e-12
        trace = TimeTrace(dt=DT, E=noise, E_z=noise, pulse=PULSE)
        with self.assertRaises(NoArrivalError):
            detect_impulses(trace, floor=1e-9)

    def test_threshold_range(self):
        with self.assertRaises(PreconditionError):
            detect_impulses(self.two_pulse_trace(5e-8, 1.5e-7), threshold_ratio=1.5)

    def test_thickness_arithmetic(self):
        self.assertAlmostEqual(thickness_from_arrivals([0.0, 2e-6], 1.5e8), 150.0)
        with self.assertRaises(TerminalLayer):
            thickness_from_arrivals([1e-8], 1.5e8)

    def test_reverberation_in_downgoing_wave_is_skipped(self):
        t = np.arange(4096) * DT
        a, multiple, b = 5e-8, 2.1e-7, 4.5e-7

        def pulses(*pairs):
            return sum(amplitude * ricker(t, SourcePulse(FC, delay=at)) for at, amplitude in pairs)

        down = TimeTrace(dt=DT, E=pulses((a, 1.0), (multiple, 0.067)), E_z=np.zeros_like(t), pulse=PULSE)
        up = TimeTrace(dt=DT, E=pulses((a, 0.08), (b, -0.15)), E_z=np.zeros_like(t), pulse=PULSE)
        self.assertLess(abs(detect_impulses(down)[1] - multiple), 2 * DT)

        arrivals = bottom_arrivals(down, up, 0.05, PULSE.width)
        self.assertEqual(len(arrivals), 2)
        self.assertLess(abs(arrivals[0] - a), 2 * DT)
        self.assertLess(abs(arrivals[1] - b), 2 * DT)

    def test_weak_upgoing_wave_leaves_direct_only(self):
        t = np.arange(1024) * DT
        down = TimeTrace(dt=DT, E=ricker(t, SourcePulse(FC, delay=5e-8)), E_z=np.zeros_like(t))
        up = down.scaled(0.01)
        self.assertEqual(len(bottom_arrivals(down, up, 0.05, PULSE.width)), 1)

    def test_mute_before(self):
        trace = self.two_pulse_trace(5e-8, 1.5e-7)
        muted = mute_before(trace, 1e-7)
        early = trace.times < 1e-7
        self.assertTrue(np.all(muted.E[early] == 0.0))
        np.testing.assert_array_equal(muted.E[~early], trace.E[~early])
        self.assertEqual(muted.t0, trace.t0)


class StripLayerTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.single = MediumProfile.piecewise_constant([4.0], [3.0], 9.0)
        cls.single_trace = synthesize(cls.single)

    def test_homogeneous_ground_is_terminal(self):
        trace = synthesize(MediumProfile.half_space(4.0, depth=3.0))
        estimate, following = strip_layer(trace)
        self.assertIsNone(following)
        self.assertIn(FLAG_TERMINAL, estimate.flags)
        self.assertIsNone(estimate.thickness_hat)
        self.assertLess(abs(estimate.eps_hat - 4.0) / 4.0, 1e-2)

    def test_single_interface(self):
        estimate, following = strip_layer(self.single_trace)
        self.assertLess(abs(estimate.eps_hat - 4.0) / 4.0, 2e-2)
        self.assertLess(abs(estimate.thickness_hat - 3.0), 0.1)
        self.assertAlmostEqual(estimate.speed_hat, CONSTANTS.c / math.sqrt(estimate.eps_hat))
        self.assertEqual(following.n_samples, self.single_trace.n_samples)
        self.assertAlmostEqual(following.depth, estimate.thickness_hat)

        substrate, rest = strip_layer(following, index=1)
        self.assertIsNone(rest)
        self.assertIn(FLAG_TERMINAL, substrate.flags)
        self.assertLess(abs(substrate.eps_hat - 9.0) / 9.0, 5e-2)

    def test_estimates_do_not_depend_on_amplitude(self):
        base, _ = strip_layer(self.single_trace)
        scaled, _ = strip_layer(self.single_trace.scaled(1e3))
        self.assertLess(abs(scaled.eps_hat - base.eps_hat), 1e-9 * base.eps_hat)
        self.assertLess(abs(scaled.thickness_hat - base.thickness_hat), 1e-9 * base.thickness_hat)
        self.assertEqual(scaled.omega_used, base.omega_used)

    @override_settings(GPR_DELTA=0.25)
    def test_kappa_bound_is_the_configured_nominal_one(self):
        estimate, _ = strip_layer(self.single_trace)
        self.assertAlmostEqual(estimate.kappa_bound_used, 2 * 0.25 / (1 - 0.25))

    def test_separation_of_a_half_space_trace(self):
        trace = synthesize(MediumProfile.half_space(4.0, depth=3.0))
        down, up = separate_waves(trace, 4.0, 0.0)
        scale = np.abs(trace.E).max()
        self.assertLess(np.abs(up.E).max(), 1e-6 * scale)
        np.testing.assert_allclose(down.E + up.E, trace.E, rtol=0, atol=1e-8 * scale)
        self.assertEqual(down.t0, trace.t0)

    def test_bottom_reflection_is_upgoing(self):
        down, up = separate_waves(self.single_trace, 4.0, 0.0)
        arrivals = bottom_arrivals(down, up, 0.05, PULSE.width)
        two_way = 2 * 3.0 / (CONSTANTS.c / 2.0)
        self.assertAlmostEqual(arrivals[1] - arrivals[0], two_way, delta=4 * DT)


class InvertProfileTests(SimpleTestCase):
    def test_zero_layers_gives_empty_report(self):
        trace = synthesize(MediumProfile.piecewise_constant([4.0], [3.0], 9.0))
        self.assertEqual(len(invert_profile(trace, max_layers=0)), 0)

    def test_single_interface(self):
        profile = MediumProfile.piecewise_constant([4.0], [3.0], 9.0)
        report = invert_profile(synthesize(profile), true_profile=profile)
        self.assertEqual(len(report), 2)
        self.assertAlmostEqual(report.estimates[0].thickness_hat, 3.0, delta=0.1)
        self.assertIn(FLAG_TERMINAL, report.estimates[-1].flags)
        self.assertEqual(report.per_layer_errors[1]['true_layer'], 'substrate')

    def test_three_layers_in_depth_order(self):
        profile = MediumProfile.piecewise_constant([4.0, 6.0, 9.0], [3.0, 4.0, 3.0], 13.5,
                                                   sigma=[1e-8, 1e-8, 1e-8])
        report = invert_profile(synthesize(profile, 2 ** 13), true_profile=profile)
        self.assertGreaterEqual(len(report), 3)
        tops = [e.depth_top for e in report.estimates]
        self.assertEqual(tops, sorted(tops))
        self.assertEqual(len(set(tops)), len(tops))
        errors = report.per_layer_errors
        self.assertLess(errors[0]['eps_rel_error'], 2e-2)
        self.assertLess(errors[1]['eps_rel_error'], 1e-1)
        self.assertAlmostEqual(report.estimates[1].thickness_hat, 4.0, delta=0.5)

    def test_staircase_past_a_strong_reverberation(self):
        # the first-layer multiple reaches the second top at 0.067 of the direct pulse
        eps, thicknesses = [4.0, 9.0, 5.0], [12.0, 20.0, 22.0]
        profile = MediumProfile.piecewise_constant(eps, thicknesses, 12.0, sigma=[1e-8] * 3)
        report = invert_profile(synthesize(profile, 2 ** 15), max_layers=4, true_profile=profile)
        self.assertGreaterEqual(len(report), 3)
        for estimate, eps_true, thickness in zip(report.estimates, eps, thicknesses):
            self.assertTrue(estimate.reliable, estimate.flags)
            self.assertLess(abs(estimate.eps_hat - eps_true) / eps_true, 5e-2)
            self.assertAlmostEqual(estimate.thickness_hat, thickness, delta=1.0)
        tops = [e.depth_top for e in report.estimates]
        self.assertTrue(all(a < b for a, b in zip(tops, tops[1:])))


class BuiltInScenarioTests(SimpleTestCase):
    """Four-layer 84 m medium at the full scaled grid, two conductivity levels."""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.errors = {}
        for sigma in (1e-8, 1e-4):
            profile = reference_scenario(sigma)
            trace = synthesize_traces(profile, PULSE, 2 ** 18, DT)
            report = invert_profile(trace, max_layers=1)
            cls.errors[sigma] = (report.estimates[0], score_report(report, profile))

    def test_first_layer_at_low_conductivity(self):
        estimate, comparison = self.errors[1e-8]
        self.assertLessEqual(comparison.first_layer_eps_error, 0.1)
        pulse_equivalent = CONSTANTS.c * 3 / FC / math.sqrt(estimate.eps_hat)
        self.assertLessEqual(abs(estimate.thickness_hat - 12.0), pulse_equivalent)

    def test_higher_conductivity_is_not_better(self):
        low = self.errors[1e-8][1].first_layer_eps_error
        high = self.errors[1e-4][1].first_layer_eps_error
        self.assertGreaterEqual(high, low)


class ScoreReportTests(SimpleTestCase):
    profile = MediumProfile.piecewise_constant([4.0, 9.0], [3.0, 2.0], 6.0, sigma=[1e-3, 0.0])
    omega = ComplexFrequency(OMEGA1, -0.9 * OMEGA1)

    def estimate(self, index, top, eps, sigma, thickness, flags=()):
        return LayerEstimate(index=index, depth_top=top, eps_hat=eps, sigma_hat=sigma,
                             speed_hat=CONSTANTS.c / math.sqrt(eps), thickness_hat=thickness,
                             omega_used=self.omega, q_top=0j, kappa_bound_used=0.2, flags=flags)

    def test_perfect_reconstruction(self):
        report = ReconstructionReport(estimates=(
            self.estimate(0, 0.0, 4.0, 1e-3, 3.0),
            self.estimate(1, 3.0, 9.0, 0.0, 2.0),
            self.estimate(2, 5.0, 6.0, 0.0, None, flags=(FLAG_TERMINAL,)),
        ))
        comparison = score_report(report, self.profile)
        self.assertEqual(comparison.first_layer_eps_error, 0.0)
        for row in comparison.rows:
            self.assertEqual(row['eps_rel_error'], 0.0)
            self.assertEqual(row['sigma_abs_error'], 0.0)
        self.assertEqual(comparison.rows[1]['thickness_rel_error'], 0.0)
        self.assertIsNone(comparison.rows[1]['sigma_rel_error'])

    def test_rows_rebuild_the_report(self):
        report = ReconstructionReport(estimates=(
            self.estimate(0, 0.0, 4.0, 1e-3, 3.0),
            self.estimate(1, 3.0, 9.0, 0.0, None, flags=(FLAG_TERMINAL,)),
        ))
        self.assertEqual(ReconstructionReport.from_rows(report.to_rows()), report)

    def test_unreliable_layer_is_excluded(self):
        report = ReconstructionReport(estimates=(
            self.estimate(0, 0.0, 4.4, 1e-3, 3.3),
            self.estimate(1, 3.3, 150.0, 0.0, None, flags=(FLAG_UNRELIABLE,)),
        ))
        comparison = score_report(report, self.profile)
        self.assertAlmostEqual(comparison.first_layer_eps_error, 0.1)
        self.assertTrue(comparison.rows[1]['excluded'])

    def test_extra_layers_are_flagged(self):
        report = ReconstructionReport(estimates=(
            self.estimate(0, 0.0, 4.0, 1e-3, 1.0),
            self.estimate(1, 1.0, 4.0, 1e-3, 1.5),
        ))
        rows = score_report(report, self.profile).rows
        self.assertFalse(rows[0]['extra'])
        self.assertTrue(rows[1]['extra'])

    def test_depths_must_increase(self):
        with self.assertRaises(PreconditionError):
            ReconstructionReport(estimates=(
                self.estimate(0, 0.0, 4.0, 0.0, 3.0),
                self.estimate(1, 3.0, 9.0, 0.0, -1.0),
            ))
