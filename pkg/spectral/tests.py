import math

import numpy as np
from django.test import SimpleTestCase

from forward.services import ricker, surface_field, synthesize_traces
from forward.traces import SourcePulse, TimeTrace
from medium.exceptions import (
    ContinuationUnstableError,
    EmptyTraceError,
    NoSignalError,
    PreconditionError,
    TraceFormatError,
)
from medium.profile import ComplexFrequency, MediumProfile
from medium.services import SQRT2

from .services import (
    Spectrum,
    choose_omega2,
    continue_to_complex,
    forward_transform,
    inverse_transform,
    rescale_time,
    select_omega1,
)

FC = 200e6
PULSE = SourcePulse(central_frequency=FC)
DT = 3e-10


def trace_of(E, E_z=None, dt=DT, t0=0.0):
    E = np.asarray(E, dtype=float)
    return TimeTrace(dt=dt, E=E, E_z=E if E_z is None else E_z, t0=t0)


class TransformTests(SimpleTestCase):
    def test_zero_trace(self):
        spectrum, _ = forward_transform(trace_of(np.zeros(256)))
        self.assertFalse(np.any(spectrum.values))

    def test_bin_frequency_sinusoid(self):
        n, j = 1024, 37
        t = np.arange(n) * DT
        spectrum, _ = forward_transform(trace_of(np.cos(2 * math.pi * j * t / (n * DT))))
        amplitude = np.abs(spectrum.values)
        self.assertEqual(int(np.argmax(amplitude)), j)
        others = np.delete(amplitude, j)
        self.assertLess(others.max(), 1e-10 * amplitude[j])

    def test_ricker_spectrum_peaks_near_central_frequency(self):
        t = np.arange(2 ** 12) * DT
        spectrum, _ = forward_transform(trace_of(ricker(t, PULSE)))
        peak = spectrum.omegas[int(np.argmax(np.abs(spectrum.values)))]
        self.assertLess(abs(peak / (2 * math.pi * FC) - 1.0), 0.02)

    def test_linearity(self):
        rng = np.random.default_rng(11)
        x, y = rng.normal(size=512), rng.normal(size=512)
        fx, _ = forward_transform(trace_of(x))
        fy, _ = forward_transform(trace_of(y))
        fxy, _ = forward_transform(trace_of(2.5 * x - 0.75 * y))
        np.testing.assert_allclose(fxy.values, 2.5 * fx.values - 0.75 * fy.values,
                                   rtol=0, atol=1e-12 * np.abs(fxy.values).max())

    def test_round_trip_with_time_offset(self):
        rng = np.random.default_rng(5)
        trace = trace_of(rng.normal(size=1024), rng.normal(size=1024), t0=-7.3e-11)
        back = inverse_transform(*forward_transform(trace), trace.n_samples, trace.dt, t0=trace.t0)
        np.testing.assert_allclose(back.E, trace.E, rtol=0, atol=1e-10 * np.abs(trace.E).max())
        np.testing.assert_allclose(back.E_z, trace.E_z, rtol=0, atol=1e-10 * np.abs(trace.E_z).max())

    def test_single_bin_gives_sinusoid(self):
        n, j = 256, 5
        domega = 2 * math.pi / (n * DT)
        values = np.zeros(n // 2 + 1, dtype=complex)
        values[j] = 1.0
        spectrum = Spectrum(domega=domega, values=values)
        trace = inverse_transform(spectrum, spectrum, n, DT)
        expected = 2 * domega * np.cos(j * domega * trace.times)
        np.testing.assert_allclose(trace.E, expected, rtol=0, atol=1e-12 * expected.max())

    def test_inconsistent_normalization(self):
        spectrum = Spectrum(domega=1.0, values=np.zeros(129))
        with self.assertRaises(TraceFormatError):
            inverse_transform(spectrum, spectrum, 256, DT)
        with self.assertRaises(TraceFormatError):
            inverse_transform(Spectrum(domega=2 * math.pi / (256 * DT), values=np.zeros(10)),
                              spectrum, 256, DT)


class FrequencySelectionTests(SimpleTestCase):
    domega = 1e6

    def spectrum_with(self, peaks, n_bins=4097):
        values = np.full(n_bins, 1e-3, dtype=complex)
        for j, value in peaks.items():
            values[j] = value
        return Spectrum(domega=self.domega, values=values)

    def test_unique_peak(self):
        omega = select_omega1(self.spectrum_with({412: 2.0}))
        self.assertEqual(omega.omega1, 412 * self.domega)
        self.assertEqual(omega.omega2, 0.0)

    def test_tie_goes_to_lower_bin(self):
        omega = select_omega1(self.spectrum_with({900: 3.0, 600: 3.0}))
        self.assertEqual(omega.omega1, 600 * self.domega)

    def test_low_frequency_bins_are_excluded(self):
        omega = select_omega1(self.spectrum_with({10: 100.0, 412: 2.0}))
        self.assertEqual(omega.omega1, 412 * self.domega)

    def test_scale_invariance(self):
        spectrum = self.spectrum_with({412: 2.0, 1000: 1.9})
        scaled = Spectrum(domega=self.domega, values=spectrum.values * 1e-9)
        self.assertEqual(select_omega1(spectrum), select_omega1(scaled))

    def test_empty_spectrum(self):
        with self.assertRaises(NoSignalError):
            select_omega1(Spectrum(domega=self.domega, values=np.zeros(4097)))

    def test_choose_omega2(self):
        self.assertAlmostEqual(choose_omega2(1e9, -0.9).omega2, -0.9e9)
        self.assertAlmostEqual(choose_omega2(1e9, 1 - SQRT2).ratio, 1 - SQRT2)
        self.assertAlmostEqual(choose_omega2(1e9, -1.0).omega2, -1e9)
        with self.assertRaises(PreconditionError):
            choose_omega2(1e9, -0.3)
        with self.assertRaises(PreconditionError):
            choose_omega2(1e9, -1.2)


class ContinuationTests(SimpleTestCase):
    def test_damped_exponential_matches_laplace_form(self):
        a, dt, n = 1e8, 1e-11, 2 ** 15
        t = np.arange(n) * dt
        E = np.exp(-a * t)
        # half weight at the step keeps the sum second-order accurate
        E[0] = 0.5
        omega = ComplexFrequency(2e8, -1e8)
        value, _ = continue_to_complex(trace_of(E, dt=dt), omega)
        expected = 1.0 / (2 * math.pi * (a + 1j * omega.omega1 - omega.omega2))
        self.assertLess(abs(value - expected) / abs(expected), 1e-4)

    def test_zero_trace(self):
        self.assertEqual(continue_to_complex(trace_of(np.zeros(64)), ComplexFrequency(1e9, -0.9e9)),
                         (0j, 0j))

    def test_real_frequency_matches_fft_bin(self):
        rng = np.random.default_rng(2)
        trace = trace_of(rng.normal(size=512), rng.normal(size=512), t0=2.1e-10)
        spectrum_E, spectrum_Ez = forward_transform(trace)
        j = 77
        E, E_z = continue_to_complex(trace, ComplexFrequency(j * spectrum_E.domega))
        scale = np.abs(spectrum_E.values).max()
        self.assertLess(abs(E - spectrum_E.values[j]), 1e-12 * scale)
        self.assertLess(abs(E_z - spectrum_Ez.values[j]), 1e-12 * scale)

    def test_underflowing_weight(self):
        trace = trace_of(np.ones(64), t0=1e-6)
        with self.assertRaises(ContinuationUnstableError):
            continue_to_complex(trace, ComplexFrequency(1e9, -1e9))

    def test_matches_direct_complex_frequency_solve(self):
        profile = MediumProfile.piecewise_constant([4.0], [3.0], 9.0)
        omega = ComplexFrequency(2 * math.pi * FC, -0.9 * 2 * math.pi * FC)
        E_direct, Ez_direct = (v[0] for v in surface_field(profile, PULSE, [omega.value], nz=4))

        errors = []
        for n in (2 ** 11, 2 ** 12, 2 ** 13):
            trace = synthesize_traces(profile, PULSE, n, DT, nz=4, floor=0.0)
            E, E_z = continue_to_complex(trace, omega)
            errors.append(max(abs(E - E_direct) / abs(E_direct), abs(E_z - Ez_direct) / abs(Ez_direct)))

        self.assertLessEqual(errors[0], 0.05)
        # longer records wrap less late-time energy onto t = 0
        self.assertLessEqual(errors[1], max(errors[0], 1e-6))
        self.assertLessEqual(errors[2], max(errors[1], 1e-6))


class RescaleTests(SimpleTestCase):
    def setUp(self):
        self.trace = trace_of(np.arange(1, 65, dtype=float))

    def test_zero_shift(self):
        shifted = rescale_time(self.trace, 0.0)
        np.testing.assert_array_equal(shifted.E, self.trace.E)
        self.assertEqual(shifted.t0, 0.0)

    def test_whole_sample_shift(self):
        shifted = rescale_time(self.trace, 10 * DT)
        np.testing.assert_array_equal(shifted.E[:54], self.trace.E[10:])
        self.assertFalse(np.any(shifted.E[54:]))
        self.assertAlmostEqual(shifted.t0, 0.0, delta=1e-25)

    def test_fractional_remainder_goes_to_t0(self):
        shifted = rescale_time(self.trace, 10.3 * DT)
        np.testing.assert_array_equal(shifted.E[:54], self.trace.E[10:])
        self.assertAlmostEqual(shifted.t0 / DT, -0.3, places=9)

    def test_shift_then_unshift(self):
        back = rescale_time(rescale_time(self.trace, 10 * DT), -10 * DT)
        np.testing.assert_array_equal(back.E[10:], self.trace.E[10:])
        self.assertFalse(np.any(back.E[:10]))

    def test_shift_beyond_trace(self):
        with self.assertRaises(EmptyTraceError):
            rescale_time(self.trace, 64 * DT)
