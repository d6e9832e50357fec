import csv
import json
import math
import tempfile
from io import StringIO
from pathlib import Path
from unittest import mock

from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase

from medium.profile import ComplexFrequency, MediumProfile
from medium.services import dump_profile
from verify.services import STATUS_VIOLATED, BoundCheckReport

from .forms import ScenarioForm
from .services import EXIT_ALIASING, EXIT_BAD_INPUT, EXIT_BOUND_VIOLATED, ScenarioConfig

SAMPLES = 2 ** 12


def run(name, **options):
    out = StringIO()
    call_command(name, stdout=out, **options)
    return out.getvalue()


class ScenarioFormTests(SimpleTestCase):
    def test_defaults(self):
        form = ScenarioForm({})
        self.assertTrue(form.is_valid(), form.errors)
        data = form.cleaned_data
        self.assertEqual(data['samples'], 2 ** 18)
        self.assertEqual(data['dt'], 3e-10)
        self.assertEqual(data['omega2_ratio'], -0.9)
        self.assertEqual(data['mu'], 1.0)
        self.assertEqual(data['delta'], 0.1)

    def test_paper_scale(self):
        form = ScenarioForm({'paper_scale': True})
        self.assertTrue(form.is_valid(), form.errors)
        self.assertEqual(form.cleaned_data['samples'], 2 ** 24)

    def test_rejects_bad_values(self):
        for data in ({'samples': 1000}, {'dt': 0.0}, {'omega2_ratio': -0.2}, {'omega2_ratio': -1.5},
                     {'delta': 0.5}, {'mu': -1.0}, {'profile': 'a.json', 'scenario': 'reference-low'}):
            self.assertFalse(ScenarioForm(data).is_valid(), data)

    def test_config_from_cleaned_data(self):
        form = ScenarioForm({'samples': SAMPLES, 'fc': 100e6, 'out': 'runs/a'})
        self.assertTrue(form.is_valid(), form.errors)
        config = ScenarioConfig.from_cleaned_data(form.cleaned_data)
        self.assertEqual(config.n_samples, SAMPLES)
        self.assertEqual(config.traces_dir, Path('runs/a'))
        self.assertEqual(config.pulse.central_frequency, 100e6)
        self.assertAlmostEqual(config.omega.omega1, 2 * math.pi * 100e6)
        self.assertAlmostEqual(config.omega.ratio, -0.9)


class CommandTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.root = Path(self.tmp.name)
        self.profile_path = self.root / 'profile.json'
        dump_profile(MediumProfile.piecewise_constant([4.0], [3.0], 9.0), self.profile_path)

    def simulate(self, out='run', **options):
        options.setdefault('samples', SAMPLES)
        run('simulate', profile=str(self.profile_path), out=str(self.root / out), nz=16, **options)
        return self.root / out

    def test_simulate_writes_trace_and_sidecar(self):
        out_dir = self.simulate()
        with open(out_dir / 'traceE.csv', encoding='utf-8') as f:
            self.assertEqual(f.readline().strip(), 't,E,E_z')
        meta = json.loads((out_dir / 'traceE.json').read_text(encoding='utf-8'))
        self.assertEqual(meta['n_samples'], SAMPLES)
        self.assertEqual(meta['pulse']['central_frequency_hz'], 200e6)
        self.assertTrue((out_dir / 'profile.json').exists())

    def test_simulate_is_deterministic(self):
        first = self.simulate('a', threads=2)
        second = self.simulate('b', threads=2)
        for name in ('traceE.csv', 'traceE.json'):
            self.assertEqual((first / name).read_bytes(), (second / name).read_bytes())

    def test_malformed_profile(self):
        self.profile_path.write_text('{"layers": [', encoding='utf-8')
        with self.assertRaises(CommandError) as ctx:
            self.simulate()
        self.assertEqual(ctx.exception.returncode, EXIT_BAD_INPUT)
        self.assertIn('line', str(ctx.exception))

    def test_aliasing_is_exit_3(self):
        with self.assertRaises(CommandError) as ctx:
            self.simulate(dt=2e-9)
        self.assertEqual(ctx.exception.returncode, EXIT_ALIASING)

    def test_failures_are_logged(self):
        with self.assertLogs('cli.management.base', level='ERROR') as logs:
            with self.assertRaises(CommandError):
                self.simulate(dt=2e-9)
        self.assertIn('simulate failed', logs.output[0])

    def test_invalid_options_are_exit_2(self):
        with self.assertRaises(CommandError) as ctx:
            self.simulate(samples=1000)
        self.assertEqual(ctx.exception.returncode, EXIT_BAD_INPUT)

    def test_invert_then_compare(self):
        out_dir = self.simulate()
        run('invert', traces=str(out_dir), out=str(out_dir))
        payload = json.loads((out_dir / 'report.json').read_text(encoding='utf-8'))
        self.assertEqual(payload['n_layers'], 2)
        first = payload['layers'][0]
        self.assertLess(abs(first['eps_hat'] - 4.0) / 4.0, 0.02)
        self.assertLess(abs(first['thickness_m'] - 3.0), 0.1)

        with open(out_dir / 'reconstruction.csv', encoding='utf-8') as f:
            rows = list(csv.reader(f))
        self.assertEqual(rows[0], ['z_m', 'eps_hat', 'sigma_hat'])
        self.assertEqual(len(rows), 3)
        self.assertEqual(float(rows[1][0]), 0.0)

        output = run('compare', report=str(out_dir / 'report.json'), profile=str(self.profile_path))
        self.assertIn('First-layer eps error', output)
        with open(out_dir / 'comparison.csv', encoding='utf-8') as f:
            table = list(csv.DictReader(f))
        self.assertEqual(table[0]['true_layer'], '1')
        self.assertLess(float(table[0]['eps_rel_error']), 0.02)
        self.assertEqual(table[1]['true_layer'], 'substrate')

    def test_invert_is_deterministic(self):
        out_dir = self.simulate()
        run('invert', traces=str(out_dir), out=str(self.root / 'a'), threads=1)
        run('invert', traces=str(out_dir), out=str(self.root / 'b'), threads=1)
        self.assertEqual((self.root / 'a' / 'report.json').read_bytes(),
                         (self.root / 'b' / 'report.json').read_bytes())

    def test_invert_with_no_layers(self):
        out_dir = self.simulate()
        run('invert', traces=str(out_dir), out=str(out_dir), max_layers=0)
        payload = json.loads((out_dir / 'report.json').read_text(encoding='utf-8'))
        self.assertEqual(payload['layers'], [])

    def test_invert_missing_traces(self):
        with self.assertRaises(CommandError) as ctx:
            run('invert', traces=str(self.root / 'nothing'), out=str(self.root))
        self.assertEqual(ctx.exception.returncode, EXIT_BAD_INPUT)

    def test_compare_needs_report(self):
        with self.assertRaises(CommandError) as ctx:
            run('compare', profile=str(self.profile_path))
        self.assertEqual(ctx.exception.returncode, EXIT_BAD_INPUT)


class VerifyCommandTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.root = Path(self.tmp.name)

    def verify(self, profile, **options):
        path = self.root / 'profile.json'
        dump_profile(profile, path)
        output = run('verify', profile=str(path), out=str(self.root), nz=16, **options)
        report = json.loads((self.root / 'bound_report.json').read_text(encoding='utf-8'))
        return output, report

    def test_thick_profile_passes(self):
        output, report = self.verify(MediumProfile.piecewise_constant([4.0, 9.0], [3.0, 4.0], 6.0))
        self.assertEqual(report['status'], 'passed')
        self.assertIn('status: passed', output)
        self.assertTrue(report['condition_a']['holds'])

    def test_thin_layer_is_not_applicable(self):
        _, report = self.verify(MediumProfile.piecewise_constant([4.0], [0.1], 9.0))
        self.assertEqual(report['status'], 'not-applicable')

    def test_corrupted_profile(self):
        path = self.root / 'profile.json'
        path.write_text('{"eps_substrate": 4, "layers": [{"thickness_m": -1, "eps_top": 2}]}',
                        encoding='utf-8')
        with self.assertRaises(CommandError) as ctx:
            run('verify', profile=str(path), out=str(self.root))
        self.assertEqual(ctx.exception.returncode, EXIT_BAD_INPUT)

    def test_sweep_writes_csv(self):
        self.verify(MediumProfile.piecewise_constant([4.0], [3.0], 9.0), sweep=5, seed=3)
        with open(self.root / 'sweep.csv', encoding='utf-8') as f:
            header = f.readline().strip()
        self.assertEqual(header, 'n_layers,delta,layer,w_top_abs,beta,kappa_actual,kappa_bound,passed')
        report = json.loads((self.root / 'bound_report.json').read_text(encoding='utf-8'))
        self.assertEqual([s['violations'] for s in report['sweeps']], [0, 0, 0])

    def test_violation_is_exit_4(self):
        violated = BoundCheckReport(status=STATUS_VIOLATED, delta=0.1,
                                    omega=ComplexFrequency(1e9, -0.9e9), per_layer=(),
                                    lemma31_min_margin=0.0, lemma2_arg_ok=True)
        with mock.patch('cli.services.check_theorem1', return_value=violated):
            with self.assertRaises(CommandError) as ctx:
                self.verify(MediumProfile.piecewise_constant([4.0], [3.0], 9.0))
        self.assertEqual(ctx.exception.returncode, EXIT_BOUND_VIOLATED)
