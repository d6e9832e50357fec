import math

import numpy as np
from django.test import SimpleTestCase, override_settings

from forward.services import solve_bvp
from forward.traces import SourcePulse
from medium.exceptions import PoleCrossingError, PreconditionError
from medium.profile import ComplexFrequency, MediumProfile
from medium.services import SQRT2, check_condition_b, k_squared, kappa_bound, wavenumber

from .services import (
    STATUS_NOT_APPLICABLE,
    STATUS_PASSED,
    SWEEP_COLUMNS,
    ImpedanceSweep,
    check_lemma2,
    check_theorem1,
    compute_w,
    gamma_profile,
    lemma2_sweep,
    round_trip_sweep,
    sweep_q,
    theorem1_sweep,
)

OMEGA1 = 2 * math.pi * 200e6
OMEGA = ComplexFrequency(OMEGA1, -0.9 * OMEGA1)
SEED = 20240607


def k_of(eps, omega, sigma=0.0):
    return complex(wavenumber(k_squared(eps, sigma, 1.0, omega.value)))


def slab_q(q_bottom, k, d):
    """q at the top of a constant slab from E = A e^{ikz} + B e^{-ikz}."""
    R = (1j * k - q_bottom) / (1j * k + q_bottom) * np.exp(2j * k * d)
    return 1j * k * (1 - R) / (1 + R)


class SweepQTests(SimpleTestCase):
    def test_homogeneous_medium_is_a_fixed_point(self):
        sweep = sweep_q(MediumProfile.half_space(4.0, depth=3.0), OMEGA, nz=16)
        np.testing.assert_allclose(sweep.q, 1j * k_of(4.0, OMEGA), rtol=1e-12)

    def test_two_layers_match_hand_composition(self):
        profile = MediumProfile.piecewise_constant([4.0, 9.0], [1.5, 0.8], 6.0, sigma=[0.0, 1e-4])
        q = 1j * k_of(6.0, OMEGA)
        q = slab_q(q, k_of(9.0, OMEGA, 1e-4), 0.8)
        q_interface = q
        q = slab_q(q, k_of(4.0, OMEGA), 1.5)
        for nz in (1, 8):
            sweep = sweep_q(profile, OMEGA, nz=nz)
            self.assertLess(abs(sweep.q[0] - q) / abs(q), 1e-12)
            self.assertLess(abs(sweep.q[nz] - q_interface) / abs(q_interface), 1e-12)

    def test_layer_slices_share_interfaces(self):
        profile = MediumProfile.piecewise_constant([4.0, 9.0], [1.5, 0.8], 6.0)
        sweep = sweep_q(profile, OMEGA, nz=8)
        top, _ = sweep.layer(0)
        bottom, _ = sweep.layer(1)
        self.assertEqual(top[-1], bottom[0])
        self.assertEqual((top[0], bottom[-1]), (0.0, profile.L))

    def test_agrees_with_field_solution(self):
        profile = MediumProfile.piecewise_constant([4.0, 9.0], [3.0, 4.0], 6.0)
        solution = solve_bvp(profile, OMEGA, SourcePulse(200e6), nz=16)
        sweep = sweep_q(profile, OMEGA, nz=16)
        finite = solution.log_E.real > -600
        np.testing.assert_allclose(solution.E_z[finite] / solution.E[finite], sweep.q[finite], rtol=1e-8)


class ComputeWTests(SimpleTestCase):
    def test_matched_layer_has_no_reflection(self):
        profile = MediumProfile.half_space(4.0, depth=2.0)
        (layer,) = compute_w(sweep_q(profile, OMEGA, nz=8), profile, OMEGA)
        np.testing.assert_allclose(layer.u, 1.0, rtol=1e-12)
        self.assertLess(np.abs(layer.w).max(), 1e-12)

    def test_top_value_decays_with_thickness(self):
        k = k_of(4.0, OMEGA)
        previous = None
        for d in (0.5, 1.0, 2.0):
            profile = MediumProfile.piecewise_constant([4.0], [d], 9.0)
            (layer,) = compute_w(sweep_q(profile, OMEGA, nz=8), profile, OMEGA)
            interface = abs(layer.w[-1])
            self.assertAlmostEqual(interface, (3.0 - 2.0) / (3.0 + 2.0), places=12)
            self.assertAlmostEqual(abs(layer.w[0]) / interface, math.exp(-2 * k.imag * d), places=12)
            if previous is not None:
                self.assertLess(abs(layer.w[0]), previous)
            previous = abs(layer.w[0])

        report = check_condition_b(MediumProfile.piecewise_constant([4.0], [2.0], 9.0), OMEGA, 0.1)
        # the decay rate of |w|^2 is never below the Condition-B constant
        self.assertLessEqual(report.per_layer[0].C_j, 4 * k.imag)

    def test_kappa_identity(self):
        profile = MediumProfile.piecewise_constant([4.0, 9.0], [0.3, 0.2], 2.0, sigma=[1e-4, 0.0])
        sweep = sweep_q(profile, OMEGA, nz=8)
        for j, (layer, item) in enumerate(zip(profile.layers, compute_w(sweep, profile, OMEGA))):
            w = item.w[0]
            kappa = 2 * w / (1 + w)
            k_top = k_of(layer.eps_top, OMEGA, layer.sigma_top)
            q_top = sweep.layer(j)[1][0]
            self.assertLess(abs(-1j * q_top * (1 - kappa) - k_top) / abs(k_top), 1e-12)

    def test_pole_is_reported(self):
        profile = MediumProfile.half_space(4.0, depth=1.0)
        z = np.linspace(0.0, 1.0, 5)
        q = -1j * np.full(5, k_of(4.0, OMEGA))
        sweep = ImpedanceSweep(z=z, q=q, slices=(slice(0, 5),), omega=OMEGA)
        with self.assertRaises(PoleCrossingError) as ctx:
            compute_w(sweep, profile, OMEGA)
        self.assertEqual(ctx.exception.z, 0.0)


class WavenumberArgumentTests(SimpleTestCase):
    def test_purely_imaginary_square(self):
        omega = ComplexFrequency(OMEGA1, -OMEGA1)
        k2 = complex(k_squared(4.0, 0.0, 1.0, omega.value))
        self.assertAlmostEqual(np.angle(k2), -math.pi / 2, places=12)
        self.assertTrue(check_lemma2(4.0, 0.0, 1.0, omega))

    def test_boundary_ratio(self):
        omega = ComplexFrequency.from_ratio(OMEGA1, 1 - SQRT2)
        k2 = complex(k_squared(4.0, 0.0, 1.0, omega.value))
        self.assertAlmostEqual(np.angle(k2), math.atan2(2 * OMEGA1 * omega.omega2,
                                                        OMEGA1 ** 2 - omega.omega2 ** 2), places=12)
        self.assertTrue(check_lemma2(4.0, 0.0, 1.0, omega))

    def test_weak_damping_fails(self):
        self.assertFalse(check_lemma2(4.0, 0.0, 1.0, ComplexFrequency(OMEGA1, -0.2 * OMEGA1)))

    def test_vectorized(self):
        ok = check_lemma2(np.array([1.0, 4.0, 16.0]), np.array([0.0, 1e-4, 1e-3]), 1.0, OMEGA)
        self.assertEqual(ok.shape, (3,))
        self.assertTrue(np.all(ok))

    def test_per_tuple_frequencies(self):
        omegas = OMEGA1 * np.array([1 - 1j, 1 - 0.2j, 1 + (1 - SQRT2) * 1j])
        ok = check_lemma2(np.full(3, 4.0), np.zeros(3), np.ones(3), omegas)
        np.testing.assert_array_equal(ok, [True, False, True])

    def test_random_admissible_tuples(self):
        result = lemma2_sweep(10 ** 5, seed=SEED)
        self.assertTrue(result.ok, msg=f"first failure: {result.first_failure}")
        self.assertEqual(result.n, 10 ** 5)


class RoundTripSweepTests(SimpleTestCase):
    def test_recovery_round_trip(self):
        result = round_trip_sweep(10 ** 5, seed=SEED)
        self.assertTrue(result.ok, msg=f"first failure: {result.first_failure}")

    def test_plain_relative_round_trip(self):
        result = round_trip_sweep(10 ** 5, seed=SEED, plain_relative=True)
        self.assertTrue(result.ok, msg=f"first failure: {result.first_failure}")
        self.assertEqual(result.name, 'round-trip-relative')


class BoundCheckTests(SimpleTestCase):
    def test_thick_constant_layers_pass(self):
        profile = MediumProfile.piecewise_constant([4.0, 9.0, 6.0], [3.0, 4.0, 3.0], 12.0)
        report = check_theorem1(profile, OMEGA, 0.1, nz=16)
        self.assertEqual(report.status, STATUS_PASSED)
        self.assertEqual(len(report.per_layer), 3)
        for item in report.per_layer:
            self.assertTrue(item.passed)
            self.assertLessEqual(abs(item.w_at_top), 0.1)
            self.assertLessEqual(item.kappa_actual, kappa_bound(0.1))
            self.assertTrue(item.beta_ok and item.interface_ok and item.beta_c0_ok)
            self.assertEqual(item.beta_bound, 1.0)
        self.assertGreaterEqual(report.lemma31_min_margin, -1e-9)
        self.assertTrue(report.lemma2_arg_ok)

    def test_thin_layer_is_not_applicable(self):
        profile = MediumProfile.piecewise_constant([4.0], [0.1], 9.0)
        report = check_theorem1(profile, OMEGA, 0.1, nz=16)
        self.assertEqual(report.status, STATUS_NOT_APPLICABLE)
        self.assertFalse(report.applicable)
        # the numbers are still reported
        self.assertEqual(len(report.per_layer), 1)
        self.assertTrue(report.per_layer[0].interface_ok)

    def test_substrate_only_profile(self):
        report = check_theorem1(MediumProfile(layers=(), eps_substrate=4.0), OMEGA, 0.1)
        self.assertEqual(report.status, STATUS_PASSED)
        self.assertEqual(report.per_layer, ())
        self.assertGreater(report.lemma31_min_margin, 0.0)

    def test_conductive_profiles_keep_wavenumber_witnesses(self):
        rng = np.random.default_rng(SEED)
        for sigma in (0.0, 1e-8, 1e-4):
            profile = MediumProfile.piecewise_constant(list(rng.uniform(1.0, 16.0, 3)), [2.0, 3.0, 4.0],
                                                       9.0, sigma=[sigma] * 3)
            report = check_theorem1(profile, OMEGA, 0.1, nz=16)
            self.assertGreaterEqual(report.lemma31_min_margin, -1e-9)
            self.assertTrue(all(item.beta_c0_ok for item in report.per_layer))
            self.assertTrue(all(item.interface_ok for item in report.per_layer))

    def test_report_serializes(self):
        profile = MediumProfile.piecewise_constant([4.0], [3.0], 9.0)
        data = check_theorem1(profile, OMEGA, 0.1, nz=8).to_dict()
        self.assertEqual(data['status'], STATUS_PASSED)
        self.assertEqual(data['per_layer'][0]['layer'], 0)
        self.assertEqual(len(data['per_layer'][0]['w_at_top']), 2)
        self.assertTrue(data['conditions']['holds'])

    def test_gamma_is_positive_for_gentle_layers(self):
        profile = MediumProfile.piecewise_constant([4.0, 9.0], [3.0, 4.0], 6.0)
        (g1, g2) = gamma_profile(profile, OMEGA, [1.0, 1.0])
        self.assertTrue(np.all(g1 > 0) and np.all(g2 > 0))
        self.assertAlmostEqual(float(g1[0]), 4 * k_of(4.0, OMEGA).imag, places=9)


class BoundSweepTests(SimpleTestCase):
    @override_settings(GPR_THREADS=2)
    def test_random_profiles_have_no_violations(self):
        result = theorem1_sweep(50, seed=SEED, nz=16)
        self.assertTrue(result.ok, msg=f"first failure: {result.first_failure}")
        self.assertGreater(result.n, 0)
        self.assertTrue(result.rows)
        self.assertEqual(set(result.rows[0]), set(SWEEP_COLUMNS))
        self.assertTrue(all(row['passed'] for row in result.rows))

    def test_rejects_delta_out_of_range(self):
        with self.assertRaises(PreconditionError):
            theorem1_sweep(1, seed=SEED, deltas=(0.5,))

    def test_same_seed_same_rows(self):
        first = theorem1_sweep(3, seed=7, nz=8, threads=1)
        second = theorem1_sweep(3, seed=7, nz=8, threads=3)
        self.assertEqual(first.rows, second.rows)
