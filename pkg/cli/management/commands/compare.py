from ..base import ScenarioCommand
from ...services import format_comparison, run_compare


class Command(ScenarioCommand):
    help = "Compare a reconstruction report with the true profile, layer by layer."
    options_used = ('report', 'profile', 'scenario', 'out')

    def run(self, config):
        comparison, path = run_compare(config)
        self.stdout.write(format_comparison(comparison))
        self.stdout.write(self.style.SUCCESS(f"Wrote {path}"))
