from django.core.management.base import CommandError

from ..base import ScenarioCommand
from ...services import EXIT_BOUND_VIOLATED, run_verify


class Command(ScenarioCommand):
    help = "Check the layer-top accuracy bounds of a profile at one complex frequency."
    options_used = ('profile', 'scenario', 'out', 'fc', 'omega2-ratio', 'delta', 'nz', 'seed',
                    'sweep', 'threads')

    def run(self, config):
        report, path, violated = run_verify(config)
        for item in report.per_layer:
            self.stdout.write(
                f"layer {item.index + 1}: |w| = {abs(item.w_at_top):.3g}, beta = {item.w_max:.3g}, "
                f"kappa = {item.kappa_actual:.3g} <= {item.kappa_bound:.3g}: "
                f"{'ok' if item.passed else 'FAILED'}"
            )
        self.stdout.write(f"status: {report.status} ({path})")
        if violated:
            raise CommandError("Bound violated while its preconditions held", returncode=EXIT_BOUND_VIOLATED)
