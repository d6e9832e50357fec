from ..base import ScenarioCommand
from ...services import run_simulate


class Command(ScenarioCommand):
    help = "Synthesize surface traces E(0, t) and E_z(0, t) for a layered profile."
    options_used = ('profile', 'scenario', 'out', 'samples', 'dt', 'fc', 'threads', 'nz', 'paper-scale')

    def run(self, config):
        trace, (csv_path, _) = run_simulate(config)
        self.stdout.write(self.style.SUCCESS(
            f"Wrote {trace.n_samples} samples at dt = {trace.dt:g} s to {csv_path}"
        ))
