import json
import math
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase
from hypothesis import given, settings as hyp_settings, strategies as st

from .exceptions import DegenerateInputError, DomainError, PreconditionError, ProfileFormatError
from .profile import CONSTANTS, ComplexFrequency, Layer, MediumProfile
from .services import (
    SQRT2,
    c0_constant,
    check_condition_a,
    check_condition_b,
    dump_profile,
    kappa_bound,
    load_profile,
    omega2_interval,
    reference_scenario,
    phi,
    sample_profile,
    wavenumber,
    wavenumber_squared,
)

OMEGA1 = 2 * math.pi * 200e6


class ConstantsTests(SimpleTestCase):
    def test_light_speed_is_derived(self):
        self.assertLess(abs(CONSTANTS.c ** 2 * CONSTANTS.mu0 * CONSTANTS.eps0 - 1.0), 1e-12)

    def test_c0_matches_trigonometric_form(self):
        angle = 3 * math.pi / 8
        self.assertAlmostEqual(c0_constant(), math.tan(angle) + 1 / math.cos(angle), places=12)

    def test_phi_and_kappa_bound(self):
        self.assertAlmostEqual(phi(0.0), SQRT2, places=15)
        self.assertLess(phi(10.0), phi(1.0))
        self.assertAlmostEqual(kappa_bound(0.1), 0.2 / 0.9, places=15)
        with self.assertRaises(PreconditionError):
            kappa_bound(1.0)

    def test_omega2_interval_for_lossless_media(self):
        low, high = omega2_interval(0.0)
        self.assertAlmostEqual(low, -(1 + SQRT2), places=14)
        self.assertAlmostEqual(high, 1 - SQRT2, places=14)


class ProfileTests(SimpleTestCase):
    def test_layer_rejects_permittivity_below_one(self):
        with self.assertRaises(ProfileFormatError):
            Layer(z_top=0.0, z_bottom=10.0, eps_top=2.0, eps_slope=-0.2)

    def test_layer_rejects_inverted_bounds(self):
        with self.assertRaises(ProfileFormatError):
            Layer(z_top=1.0, z_bottom=1.0, eps_top=2.0)

    def test_profile_rejects_gaps(self):
        with self.assertRaises(ProfileFormatError):
            MediumProfile(layers=(Layer(0.0, 1.0, 2.0), Layer(1.5, 2.0, 3.0)), eps_substrate=4.0)

    def test_reference_scenario_geometry(self):
        profile = reference_scenario()
        self.assertEqual(profile.n_layers, 4)
        self.assertAlmostEqual(profile.L, 84.0)
        self.assertEqual(profile.interfaces, [0.0, 12.0, 32.0, 54.0, 84.0])

    def test_complex_frequency_must_lie_in_lower_half_plane(self):
        with self.assertRaises(PreconditionError):
            ComplexFrequency(OMEGA1, 0.1 * OMEGA1)
        with self.assertRaises(PreconditionError):
            ComplexFrequency(0.0, -1.0)


class WavenumberTests(SimpleTestCase):
    def test_real_positive_square_takes_negative_root(self):
        self.assertEqual(complex(wavenumber(4.0)), -2.0 + 0j)

    def test_lossy_medium_has_positive_imaginary_part(self):
        k2 = wavenumber_squared(4.0, 1e-3, 1.0, ComplexFrequency(OMEGA1))
        k = complex(wavenumber(k2))
        self.assertGreater(k.imag, 0.0)
        self.assertAlmostEqual(abs(k * k - k2) / abs(k2), 0.0, places=14)

    def test_zero_square_is_degenerate(self):
        with self.assertRaises(DegenerateInputError):
            wavenumber(0.0)

    @given(st.floats(-1e6, 1e6), st.floats(-1e6, 1e6))
    @hyp_settings(max_examples=300, derandomize=True)
    def test_branch_choice(self, re, im):
        k2 = complex(re, im)
        if abs(k2) < 1e-9:
            return
        k = complex(wavenumber(k2))
        self.assertLessEqual(abs(k * k - k2), 1e-12 * abs(k2))
        self.assertGreaterEqual(k.imag, 0.0)
        self.assertFalse(k.imag == 0.0 and k.real > 0.0)


class SampleProfileTests(SimpleTestCase):
    def setUp(self):
        self.profile = MediumProfile.piecewise_constant([4.0, 9.0], [2.0, 3.0], 6.0,
                                                        sigma=[0.0, 1e-3])

    def test_right_continuity_at_interfaces(self):
        self.assertEqual(sample_profile(self.profile, 2.0), (9.0, 1e-3, 1))
        self.assertEqual(sample_profile(self.profile, 1.999)[2], 0)

    def test_substrate(self):
        self.assertEqual(sample_profile(self.profile, 5.0), (6.0, 0.0, 2))

    def test_negative_depth(self):
        with self.assertRaises(DomainError):
            sample_profile(self.profile, -0.1)


class ConditionTests(SimpleTestCase):
    def test_lossless_profile_meets_condition_a(self):
        report = check_condition_a(reference_scenario(sigma=0.0), ComplexFrequency(OMEGA1, -0.9 * OMEGA1))
        self.assertTrue(report.holds)
        self.assertEqual(report.C, 0.0)

    def test_condition_a_rejects_weak_damping(self):
        report = check_condition_a(reference_scenario(sigma=0.0), ComplexFrequency(OMEGA1, -0.3 * OMEGA1),
                                   C=1.0)
        self.assertFalse(report.omega_ok)
        self.assertFalse(report.holds)

    def test_condition_a_conductivity_bound(self):
        profile = reference_scenario(sigma=1e-4)
        omega = ComplexFrequency(OMEGA1, -0.9 * OMEGA1)
        self.assertTrue(check_condition_a(profile, omega).sigma_ok)
        self.assertFalse(check_condition_a(profile, omega, C=1e-6).sigma_ok)

    def test_thick_constant_layer_satisfies_condition_b(self):
        profile = MediumProfile.piecewise_constant([4.0], [1.0], 9.0)
        report = check_condition_b(profile, ComplexFrequency(OMEGA1, -0.9 * OMEGA1), 0.1)
        layer = report.per_layer[0]
        self.assertEqual(layer.lambda_j, 0.0)
        expected_C = 4 / CONSTANTS.c * math.sqrt(4.0 * OMEGA1 * 0.9 * OMEGA1 / (SQRT2 + 1))
        self.assertAlmostEqual(layer.C_j / expected_C, 1.0, places=12)
        self.assertTrue(layer.satisfied)
        self.assertTrue(report.holds)

    def test_thin_layer_fails_condition_b(self):
        profile = MediumProfile.piecewise_constant([4.0], [0.1], 9.0)
        report = check_condition_b(profile, ComplexFrequency(OMEGA1, -0.9 * OMEGA1), 0.1)
        self.assertFalse(report.per_layer[0].satisfied)
        self.assertGreater(report.per_layer[0].delta_contribution, 0.1)

    def test_sloped_layer_needs_damping(self):
        profile = MediumProfile(layers=(Layer(0.0, 5.0, 4.0, eps_slope=0.1),), eps_substrate=6.0)
        report = check_condition_b(profile, ComplexFrequency(OMEGA1, 0.0), 0.1)
        self.assertTrue(math.isinf(report.per_layer[0].lambda_j))
        self.assertFalse(report.holds)

    def test_delta_range(self):
        profile = reference_scenario()
        with self.assertRaises(PreconditionError):
            check_condition_b(profile, ComplexFrequency(OMEGA1, -0.9 * OMEGA1), 0.5)


class ProfileFileTests(SimpleTestCase):
    def test_dump_then_load(self):
        profile = reference_scenario(sigma=1e-4)
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'profile.json'
            dump_profile(profile, path)
            self.assertEqual(load_profile(path), profile)

    def test_malformed_json_reports_position(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'profile.json'
            path.write_text('{\n  "eps_substrate": 4,\n  "layers": [\n}', encoding='utf-8')
            with self.assertRaises(ProfileFormatError) as ctx:
                load_profile(path)
            self.assertIsNotNone(ctx.exception.line)
            self.assertIn('line', str(ctx.exception))

    def test_invalid_layer_values(self):
        data = {'eps_substrate': 4.0, 'layers': [{'thickness_m': -1.0, 'eps_top': 4.0}]}
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'profile.json'
            path.write_text(json.dumps(data), encoding='utf-8')
            with self.assertRaises(ProfileFormatError):
                load_profile(path)

    def test_optional_fields_default_to_zero(self):
        data = {'eps_substrate': 4.0, 'layers': [{'thickness_m': 2.0, 'eps_top': 3.0}]}
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'profile.json'
            path.write_text(json.dumps(data), encoding='utf-8')
            profile = load_profile(path)
        self.assertEqual(profile.mu, 1.0)
        self.assertEqual(profile.layers[0].sigma_top, 0.0)
        self.assertTrue(np.isclose(profile.L, 2.0))
