import logging

from django.core.management.base import BaseCommand, CommandError

from medium.exceptions import GprError

from ..forms import ScenarioForm
from ..services import EXIT_BAD_INPUT, ScenarioConfig, exit_code_for

logger = logging.getLogger(__name__)

OPTIONS = {
    'profile': dict(metavar='PATH', help="Profile JSON file."),
    'scenario': dict(choices=['reference-low', 'reference-high'],
                     help="Built-in 84 m scenario at sigma 1e-8 or 1e-4 S/m instead of --profile."),
    'out': dict(metavar='DIR', help="Output directory."),
    'traces': dict(metavar='DIR', help="Directory holding traceE.csv (defaults to --out)."),
    'report': dict(metavar='PATH', help="report.json written by invert."),
    'samples': dict(type=int, metavar='N', help="Number of time samples, a power of two."),
    'dt': dict(type=float, metavar='SEC', help="Time step in seconds."),
    'fc': dict(type=float, metavar='HZ', help="Ricker central frequency; verify evaluates bounds at 2*pi*fc."),
    'omega2-ratio': dict(type=float, metavar='R', help="omega2/omega1 in [-1, 1 - sqrt(2)]."),
    'mu': dict(type=float, metavar='V', help="Relative permeability of the medium."),
    'max-layers': dict(type=int, metavar='N', help="Stop after N layers."),
    'delta': dict(type=float, metavar='D', help="Condition-B delta in (0, sqrt(2) - 1]."),
    'threads': dict(type=int, metavar='N', help="Worker threads for frequency sweeps."),
    'nz': dict(type=int, metavar='N', help="Sub-cells per layer in the forward solver."),
    'seed': dict(type=int, metavar='S', help="Seed of the randomized sweeps."),
    'sweep': dict(type=int, metavar='N', help="Also run randomized witnesses over N draws."),
    'paper-scale': dict(action='store_true', help="Use the full 2**24-sample grid."),
}


class ScenarioCommand(BaseCommand):
    """Validates the shared options through ScenarioForm and maps pipeline errors to exit codes."""
    options_used = ()

    def add_arguments(self, parser):
        for name in self.options_used:
            parser.add_argument(f'--{name}', **OPTIONS[name])

    def handle(self, *args, **options):
        command = self.__module__.rsplit('.', 1)[-1]
        data = {key: value for key, value in options.items() if value is not None}
        form = ScenarioForm(data)
        if not form.is_valid():
            logger.error(f"{command}: invalid options {form.errors.as_text()}")
            raise CommandError(f"Invalid options: {form.errors.as_text()}", returncode=EXIT_BAD_INPUT)
        try:
            config = ScenarioConfig.from_cleaned_data(form.cleaned_data)
            self.run(config)
        except GprError as e:
            logger.error(f"{command} failed: {e}")
            raise CommandError(str(e), returncode=exit_code_for(e)) from e

    def run(self, config: ScenarioConfig):
        raise NotImplementedError
