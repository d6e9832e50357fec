import math
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase
from hypothesis import given, settings as hyp_settings, strategies as st
from scipy import integrate, signal

from medium.exceptions import PreconditionError, SamplingError, TraceFormatError
from medium.profile import CONSTANTS, ComplexFrequency, Layer, MediumProfile
from medium.services import k_squared, reference_scenario, wavenumber

from .services import (
    aliased_energy_fraction,
    impedance_profile,
    propagate_slab_field,
    propagate_slab_q,
    ricker,
    ricker_transform,
    solve_bvp,
    source_spectrum,
    surface_impedance,
    synthesize_traces,
)
from .traces import SourcePulse, TimeTrace, read_trace, write_trace

FC = 200e6
PULSE = SourcePulse(central_frequency=FC)


def k_of(eps, omega, sigma=0.0, mu=1.0):
    return complex(wavenumber(k_squared(eps, sigma, mu, omega)))


def transfer_matrix_q0(profile, omega):
    """q(0) of piecewise-constant profiles via 2x2 transfer matrices from the bottom."""
    E, E_z = 1.0 + 0j, 1j * k_of(profile.eps_substrate, omega)
    for layer in reversed(profile.layers):
        k = k_of(layer.eps_top, omega, layer.sigma_top)
        d = layer.thickness
        c, s = np.cos(k * d), np.sin(k * d)
        E, E_z = E * c - E_z * s / k, E * k * s + E_z * c
    return E_z / E


def shooting_q0(profile, omega):
    """q(0) from integrating E'' = -k^2(z) E upward from z = L, layer by layer."""
    k_sub = k_of(profile.eps_substrate, omega)
    state = np.array([1.0, 0.0, (1j * k_sub).real, (1j * k_sub).imag])
    for layer in reversed(profile.layers):
        def rhs(z, y, layer=layer):
            k2 = k_squared(layer.eps_at(z), layer.sigma_at(z), profile.mu, omega)
            E = y[0] + 1j * y[1]
            E_zz = -complex(k2) * E
            return [y[2], y[3], E_zz.real, E_zz.imag]
        result = integrate.solve_ivp(rhs, (layer.z_bottom, layer.z_top), state, method='DOP853',
                                     rtol=1e-12, atol=1e-14)
        state = result.y[:, -1]
    return complex(state[2], state[3]) / complex(state[0], state[1])


class RickerTests(SimpleTestCase):
    def test_peak_and_zero_crossings(self):
        self.assertEqual(ricker(PULSE.delay, PULSE), 1.0)
        tau = 1.0 / (math.pi * FC * math.sqrt(2.0))
        self.assertAlmostEqual(float(ricker(PULSE.delay + tau, PULSE)), 0.0, places=12)
        self.assertAlmostEqual(float(ricker(PULSE.delay - tau, PULSE)), 0.0, places=12)

    def test_default_delay_gives_compact_support(self):
        self.assertAlmostEqual(PULSE.delay, 3.0 / FC)
        self.assertLess(abs(float(ricker(0.0, PULSE))), 1e-30)

    def test_invalid_pulse(self):
        with self.assertRaises(PreconditionError):
            SourcePulse(central_frequency=FC, z0=0.1)
        with self.assertRaises(PreconditionError):
            SourcePulse(central_frequency=-1.0)

    def test_transform_matches_quadrature(self):
        for omega in (2 * math.pi * FC, complex(2 * math.pi * FC, -0.9 * 2 * math.pi * FC),
                      complex(2 * math.pi * 0.3 * FC, -0.5 * 2 * math.pi * 0.3 * FC)):
            # integrate in units of 1/fc
            def part(s, fn):
                t = s / FC
                return fn(np.exp(-1j * omega * t) * ricker(t, PULSE) / FC)
            re, _ = integrate.quad(part, 0.0, 6.0, args=(np.real,), limit=400, epsabs=0, epsrel=1e-13)
            im, _ = integrate.quad(part, 0.0, 6.0, args=(np.imag,), limit=400, epsabs=0, epsrel=1e-13)
            expected = complex(re, im)
            got = complex(ricker_transform(PULSE, omega))
            self.assertLess(abs(got - expected) / abs(expected), 1e-8)

    def test_source_spectrum_peaks_at_central_frequency(self):
        omegas = np.linspace(1e6, 4 * math.pi * FC, 20001)
        amplitude = np.abs(ricker_transform(PULSE, omegas))
        peak = omegas[int(np.argmax(amplitude))]
        self.assertLess(abs(peak / (2 * math.pi * FC) - 1.0), 1e-3)

    def test_source_term_vanishes_at_zero_frequency(self):
        small = abs(source_spectrum(PULSE, ComplexFrequency(1e-3)))
        smaller = abs(source_spectrum(PULSE, ComplexFrequency(1e-6)))
        self.assertLess(smaller, small)
        self.assertLess(smaller, 1e-20)


class SlabPropagationTests(SimpleTestCase):
    k = complex(-3.0, 0.7)

    def test_fixed_points(self):
        for q in (1j * self.k, -1j * self.k):
            for dz in (0.01, 0.5, 2.0):
                self.assertLess(abs(propagate_slab_q(q, self.k, dz) - q), 1e-12 * abs(q))

    def test_zero_width_is_identity(self):
        q = complex(0.3, -2.0)
        self.assertLess(abs(propagate_slab_q(q, self.k, 0.0) - q), 1e-15)
        self.assertLess(abs(propagate_slab_q(q, self.k, 1e-9) - q), 1e-7)

    def test_downward_undoes_upward(self):
        q = complex(0.3, -2.0)
        up = propagate_slab_q(q, self.k, 0.4)
        self.assertLess(abs(propagate_slab_q(up, self.k, 0.4, downward=True) - q), 1e-12)

    def test_matches_field_propagation(self):
        E, E_z = 1.0 + 0.5j, complex(0.3, -2.0)
        E_top, E_z_top = propagate_slab_field(E, E_z, self.k, -0.4)
        self.assertLess(abs(propagate_slab_q(E_z / E, self.k, 0.4) - E_z_top / E_top), 1e-12)

    def test_field_identity_and_plane_wave(self):
        self.assertEqual(propagate_slab_field(1.0, 2.0j, self.k, 0.0), (1.0 + 0j, 2.0j))
        E, E_z = propagate_slab_field(1.0, 1j * self.k, self.k, 0.3)
        expected = np.exp(1j * self.k * 0.3)
        self.assertLess(abs(E - expected), 1e-13)
        self.assertLess(abs(E_z - 1j * self.k * expected), 1e-12)

    def test_small_argument_series(self):
        E, _ = propagate_slab_field(0.0, 1.0, 1e-8, 1e-3)
        self.assertAlmostEqual(E.real, 1e-3, places=15)

    @given(st.floats(-2, 2), st.floats(-2, 2), st.floats(-5, 5), st.floats(0, 3), st.floats(0, 1))
    @hyp_settings(max_examples=200, derandomize=True)
    def test_forward_then_back_is_identity(self, e_re, e_im, k_re, k_im, dz):
        k = complex(k_re, k_im)
        E, E_z = complex(e_re, e_im), complex(e_im, -e_re)
        out = propagate_slab_field(E, E_z, k, dz)
        back = propagate_slab_field(*out, k, -dz)
        scale = 1.0 + abs(E) + abs(E_z)
        self.assertLess(abs(back[0] - E), 1e-12 * scale * math.exp(2 * k_im * dz))
        self.assertLess(abs(back[1] - E_z), 1e-12 * scale * (1 + abs(k)) * math.exp(2 * k_im * dz))


class SolveBvpTests(SimpleTestCase):
    omega_real = ComplexFrequency(2 * math.pi * 50e6)
    omega_complex = ComplexFrequency(2 * math.pi * 200e6, -0.9 * 2 * math.pi * 200e6)

    def test_homogeneous_medium_has_no_reflection(self):
        profile = MediumProfile.half_space(4.0, depth=3.0)
        solution = solve_bvp(profile, self.omega_complex, PULSE, nz=8)
        k1 = k_of(4.0, self.omega_complex.value)
        np.testing.assert_allclose(solution.q, 1j * k1, rtol=1e-12)
        k0 = -self.omega_complex.value / CONSTANTS.c
        h = source_spectrum(PULSE, self.omega_complex)
        expected = h * np.exp(-1j * k0 * PULSE.z0) / (1j * k1 + 1j * k0)
        self.assertLess(abs(solution.E[0] - expected) / abs(expected), 1e-12)

    def test_boundary_conditions(self):
        profile = reference_scenario(sigma=1e-4)
        solution = solve_bvp(profile, self.omega_complex, PULSE)
        w = self.omega_complex.value
        k0 = -w / CONSTANTS.c
        surface = solution.E_z[0] + 1j * k0 * solution.E[0]
        target = source_spectrum(PULSE, self.omega_complex) * np.exp(-1j * k0 * PULSE.z0)
        self.assertLess(abs(surface - target) / abs(target), 1e-10)
        k_sub = k_of(profile.eps_substrate, w)
        self.assertLess(abs(solution.q[-1] - 1j * k_sub), 1e-12 * abs(k_sub))

    def test_field_and_impedance_agree(self):
        solution = solve_bvp(reference_scenario(), self.omega_complex, PULSE)
        # deep fields underflow; compare where E is still a normal double
        finite = solution.log_E.real > -600
        ratio = solution.E_z[finite] / solution.E[finite]
        np.testing.assert_allclose(ratio, solution.q[finite], rtol=1e-8)
        self.assertTrue(np.all(np.isfinite(solution.log_E)))

    def test_impedance_stays_in_lower_half_plane(self):
        for sigma in (0.0, 1e-8, 1e-4):
            solution = solve_bvp(reference_scenario(sigma), self.omega_complex, PULSE)
            self.assertTrue(np.all(solution.q.imag <= 1e-9 * np.abs(solution.q)))

    def test_piecewise_constant_matches_transfer_matrix(self):
        profile = MediumProfile.piecewise_constant([4.0, 9.0, 2.5], [1.3, 0.7, 2.1], 6.0,
                                                   sigma=[0.0, 1e-3, 0.0])
        expected = transfer_matrix_q0(profile, self.omega_real.value)
        for nz in (1, 3, 16):
            got = surface_impedance(profile, [self.omega_real.value], nz)[0]
            self.assertLess(abs(got - expected) / abs(expected), 1e-10)

    def test_single_interface_reflection(self):
        d, eps1, eps2 = 2.0, 4.0, 9.0
        profile = MediumProfile.piecewise_constant([eps1], [d], eps2)
        w = self.omega_real.value
        k1, k2 = k_of(eps1, w), k_of(eps2, w)
        # E = e^{ik1 z} + R e^{-ik1 z} with the downgoing wave referenced at z = 0
        R = (k1 - k2) / (k1 + k2) * np.exp(2j * k1 * d)
        q0 = 1j * k1 * (1 - R) / (1 + R)
        got = solve_bvp(profile, self.omega_real, PULSE, nz=4).q[0]
        self.assertLess(abs(got - q0) / abs(q0), 1e-8)

    def test_smooth_profile_matches_ode_shooting(self):
        profile = MediumProfile(
            layers=(Layer(0.0, 3.0, 4.0, eps_slope=0.5), Layer(3.0, 5.0, 9.0, eps_slope=-0.3,
                                                             sigma_top=1e-3)),
            eps_substrate=6.0,
        )
        omega = ComplexFrequency(2 * math.pi * 100e6)
        expected = shooting_q0(profile, omega.value)
        got = solve_bvp(profile, omega, PULSE, nz=4096).q[0]
        self.assertLess(abs(got - expected) / abs(expected), 1e-6)

    def test_second_order_self_convergence(self):
        profile = MediumProfile(layers=(Layer(0.0, 3.0, 4.0, eps_slope=0.5),), eps_substrate=6.0)
        omega = ComplexFrequency(2 * math.pi * 100e6, -0.5 * 2 * math.pi * 100e6)
        q = [solve_bvp(profile, omega, PULSE, nz=nz).q[0] for nz in (32, 64, 128)]
        coarse, fine = abs(q[1] - q[0]), abs(q[2] - q[1])
        self.assertLess(fine, coarse / 2)

    def test_rejects_coarse_grid(self):
        with self.assertRaises(PreconditionError):
            solve_bvp(reference_scenario(), self.omega_real, PULSE, nz=1)


class RandomProfileOracleTests(SimpleTestCase):
    omegas = (ComplexFrequency(2 * math.pi * 50e6),
              ComplexFrequency(2 * math.pi * 200e6, -0.9 * 2 * math.pi * 200e6))

    def test_piecewise_constant_profiles_match_transfer_matrix(self):
        rng = np.random.default_rng(101)
        for trial in range(100):
            n = int(rng.integers(1, 6))
            profile = MediumProfile.piecewise_constant(
                list(rng.uniform(1.0, 16.0, n)), list(rng.uniform(0.5, 3.0, n)),
                float(rng.uniform(1.0, 16.0)), sigma=[float(rng.choice([0.0, 1e-8, 1e-4]))] * n)
            for omega in self.omegas:
                z, q = impedance_profile(profile, omega, nz=4)
                expected = transfer_matrix_q0(profile, omega.value)
                self.assertLess(abs(q[0] - expected) / abs(expected), 1e-8,
                                msg=f"trial {trial}: {profile.to_dict()} at {omega}")
                if omega.omega2 < 0:
                    self.assertGreaterEqual(float(np.min(-q.imag)), -1e-9, msg=f"trial {trial}")

    def test_piecewise_linear_profiles_match_ode_shooting(self):
        rng = np.random.default_rng(202)
        omega = ComplexFrequency(2 * math.pi * 100e6, -0.5 * 2 * math.pi * 100e6)
        for trial in range(20):
            layers, z = [], 0.0
            for _ in range(int(rng.integers(1, 4))):
                d = float(rng.uniform(0.5, 2.0))
                layers.append(Layer(z, z + d, float(rng.uniform(2.0, 12.0)),
                                    eps_slope=float(rng.uniform(-0.5, 0.5)),
                                    sigma_top=float(rng.choice([0.0, 1e-4]))))
                z += d
            profile = MediumProfile(layers=tuple(layers), eps_substrate=float(rng.uniform(1.0, 16.0)))
            solution = solve_bvp(profile, omega, PULSE, nz=4096)
            expected = shooting_q0(profile, omega.value)
            self.assertLess(abs(solution.q[0] - expected) / abs(expected), 1e-6,
                            msg=f"trial {trial}: {profile.to_dict()}")
            self.assertGreaterEqual(float(np.min(-solution.q.imag)), -1e-9, msg=f"trial {trial}")


class SynthesisTests(SimpleTestCase):
    n_samples = 2 ** 12
    dt = 3e-10

    def test_vacuum_trace_is_the_delayed_pulse(self):
        vacuum = MediumProfile(layers=(), eps_substrate=1.0)
        trace = synthesize_traces(vacuum, PULSE, self.n_samples, self.dt, threads=2)
        delay = abs(PULSE.z0) / CONSTANTS.c
        expected = -CONSTANTS.mu0 * CONSTANTS.c * math.sqrt(2 * math.pi) / 2 * ricker(
            trace.times - delay, PULSE)
        peak = np.max(np.abs(expected))
        self.assertLess(np.max(np.abs(trace.E - expected)), 1e-8 * peak)

    def test_trace_is_causal(self):
        profile = MediumProfile.piecewise_constant([4.0], [3.0], 9.0)
        trace = synthesize_traces(profile, PULSE, self.n_samples, self.dt)
        early = trace.times <= abs(PULSE.z0) / CONSTANTS.c + 0.4 * PULSE.delay
        self.assertLess(np.max(np.abs(trace.E[early])), 1e-8 * np.max(np.abs(trace.E)))

    def test_single_interface_two_way_time(self):
        d, eps1 = 3.0, 4.0
        profile = MediumProfile.piecewise_constant([eps1], [d], 9.0)
        trace = synthesize_traces(profile, PULSE, self.n_samples, self.dt)
        envelope = np.abs(signal.hilbert(trace.E))
        peaks, _ = signal.find_peaks(envelope, height=0.05 * envelope.max(),
                                     distance=int(PULSE.width / self.dt))
        self.assertEqual(len(peaks), 2)
        expected = 2 * d * math.sqrt(eps1) / CONSTANTS.c
        self.assertLess(abs((peaks[1] - peaks[0]) * self.dt - expected), 2 * self.dt)

    def test_thread_count_does_not_change_result(self):
        profile = reference_scenario(sigma=1e-4)
        one = synthesize_traces(profile, PULSE, 2 ** 10, self.dt, nz=8, threads=1)
        four = synthesize_traces(profile, PULSE, 2 ** 10, self.dt, nz=8, threads=4)
        np.testing.assert_allclose(one.E, four.E, rtol=0, atol=1e-13 * np.max(np.abs(one.E)))

    def test_aliasing_is_rejected(self):
        self.assertLess(aliased_energy_fraction(PULSE, self.dt), 1e-30)
        with self.assertRaises(SamplingError):
            synthesize_traces(reference_scenario(), PULSE, 2 ** 10, 2e-9)

    def test_length_must_be_power_of_two(self):
        with self.assertRaises(PreconditionError):
            synthesize_traces(reference_scenario(), PULSE, 1000, self.dt)


class TraceFileTests(SimpleTestCase):
    def test_write_then_read_is_lossless(self):
        rng = np.random.default_rng(7)
        trace = TimeTrace(dt=3e-10, E=rng.normal(size=64), E_z=rng.normal(size=64) * 1e7,
                          t0=1.234e-11, depth=12.5, pulse=PULSE)
        with tempfile.TemporaryDirectory() as tmp:
            write_trace(trace, tmp)
            loaded = read_trace(tmp)
        np.testing.assert_array_equal(loaded.E, trace.E)
        np.testing.assert_array_equal(loaded.E_z, trace.E_z)
        self.assertEqual((loaded.dt, loaded.t0, loaded.depth), (trace.dt, trace.t0, trace.depth))
        self.assertEqual(loaded.pulse, PULSE)

    def test_bad_header(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'traceE.csv'
            path.write_text('time,E\n0,1\n', encoding='utf-8')
            Path(tmp, 'traceE.json').write_text('{"dt": 1e-10}', encoding='utf-8')
            with self.assertRaises(TraceFormatError):
                read_trace(tmp)

    def test_missing_files(self):
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(TraceFormatError):
                read_trace(tmp)

    def test_length_must_be_power_of_two(self):
        with self.assertRaises(TraceFormatError):
            TimeTrace(dt=1e-10, E=np.zeros(10), E_z=np.zeros(10))
