from ..base import ScenarioCommand
from ...services import run_invert


class Command(ScenarioCommand):
    help = "Strip layers from surface traces and write report.json and reconstruction.csv."
    options_used = ('traces', 'out', 'profile', 'mu', 'max-layers', 'omega2-ratio', 'threads')

    def run(self, config):
        report, (report_path, csv_path) = run_invert(config)
        for row in report.to_rows():
            thickness = '-' if row['thickness_m'] is None else f"{row['thickness_m']:.3f} m"
            flags = ', '.join(row['flags'])
            self.stdout.write(
                f"layer {row['layer']}: top {row['depth_top_m']:.3f} m, eps {row['eps_hat']:.4g}, "
                f"sigma {row['sigma_hat_S_per_m']:.3g} S/m, thickness {thickness} {flags}".rstrip()
            )
        self.stdout.write(self.style.SUCCESS(f"Wrote {report_path} and {csv_path}"))
