"""
CLI service layer: scenario configuration, the four pipeline runs behind the
management commands, and their report files.

JSON reports are written with sorted keys and CSV numbers at 17 significant
digits, so identical inputs give byte-identical files.
"""

import csv
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from django.conf import settings

from forward.services import synthesize_traces
from forward.traces import SourcePulse, TimeTrace, is_power_of_two, read_trace, write_trace
from inversion.services import Comparison, ReconstructionReport, invert_profile, score_report
from medium.exceptions import (
    GprError,
    PreconditionError,
    ProfileFormatError,
    SamplingError,
    TraceFormatError,
)
from medium.profile import ComplexFrequency, MediumProfile
from medium.services import DELTA_MAX, check_condition_a, dump_profile, load_profile, reference_scenario
from spectral.services import OMEGA2_RATIO_RANGE
from verify.services import (
    STATUS_VIOLATED,
    SWEEP_COLUMNS,
    BoundCheckReport,
    SweepResult,
    check_theorem1,
    lemma2_sweep,
    round_trip_sweep,
    theorem1_sweep,
)

from .forms import SCENARIOS

logger = logging.getLogger(__name__)

EXIT_BAD_INPUT = 2
EXIT_ALIASING = 3
EXIT_BOUND_VIOLATED = 4

RECONSTRUCTION_COLUMNS = ('z_m', 'eps_hat', 'sigma_hat')
COMPARISON_COLUMNS = ('layer', 'true_layer', 'eps_hat', 'eps_true', 'eps_rel_error', 'sigma_hat',
                      'sigma_true', 'sigma_rel_error', 'sigma_abs_error', 'thickness_hat',
                      'thickness_true', 'thickness_rel_error', 'excluded', 'extra')


@dataclass(frozen=True)
class ScenarioConfig:
    profile_path: Optional[Path]
    pulse: SourcePulse
    n_samples: int
    dt: float
    output_dir: Path
    omega2_ratio: float = -0.9
    seed: int = 0
    scenario: Optional[str] = None
    mu: float = 1.0
    max_layers: int = 10
    delta: float = 0.1
    threads: Optional[int] = None
    nz: Optional[int] = None
    traces_dir: Optional[Path] = None
    report_path: Optional[Path] = None
    sweep: int = 0

    def __post_init__(self):
        if not is_power_of_two(self.n_samples):
            raise PreconditionError(f"n_samples must be a power of two, got {self.n_samples}")
        if not self.dt > 0:
            raise PreconditionError(f"dt must be positive, got {self.dt}")
        low, high = OMEGA2_RATIO_RANGE
        if not low - 1e-15 <= self.omega2_ratio <= high + 1e-15:
            raise PreconditionError(f"omega2 ratio {self.omega2_ratio} lies outside [{low}, {high}]")
        if not 0 < self.delta <= DELTA_MAX + 1e-15:
            raise PreconditionError(f"delta must lie in (0, sqrt(2) - 1], got {self.delta}")

    @classmethod
    def from_cleaned_data(cls, data: dict) -> 'ScenarioConfig':
        """Build from ScenarioForm.cleaned_data."""
        def path(name):
            return Path(data[name]) if data.get(name) else None

        output_dir = path('out') or Path('.')
        return cls(
            profile_path=path('profile'),
            pulse=SourcePulse(central_frequency=data['fc'], z0=settings.GPR_SOURCE_HEIGHT),
            n_samples=data['samples'],
            dt=data['dt'],
            output_dir=output_dir,
            omega2_ratio=data['omega2_ratio'],
            seed=data['seed'],
            scenario=data.get('scenario') or None,
            mu=data['mu'],
            max_layers=data['max_layers'],
            delta=data['delta'],
            threads=data.get('threads'),
            nz=data.get('nz'),
            traces_dir=path('traces') or output_dir,
            report_path=path('report'),
            sweep=data.get('sweep') or 0,
        )

    @property
    def omega(self) -> ComplexFrequency:
        return ComplexFrequency.from_ratio(2.0 * math.pi * self.pulse.central_frequency,
                                           self.omega2_ratio)


def exit_code_for(error: GprError) -> int:
    if isinstance(error, SamplingError):
        return EXIT_ALIASING
    if isinstance(error, (ProfileFormatError, TraceFormatError, PreconditionError)):
        return EXIT_BAD_INPUT
    return 1


def resolve_profile(config: ScenarioConfig, required: bool = True) -> Optional[MediumProfile]:
    if config.profile_path is not None:
        try:
            return load_profile(config.profile_path)
        except OSError as e:
            raise ProfileFormatError(f"Cannot read profile {config.profile_path}: {e}") from e
    if config.scenario:
        return reference_scenario(sigma=SCENARIOS[config.scenario])
    if required:
        raise PreconditionError("A profile is required: give --profile or --scenario")
    return None


def grid_diagnostics(n_samples: int, dt: float) -> dict:
    domega = 2.0 * math.pi / (n_samples * dt)
    return {
        'n_samples': n_samples,
        'dt_s': dt,
        'duration_s': n_samples * dt,
        'domega_rad_s': domega,
        'nyquist_rad_s': math.pi / dt,
    }


def _cell(value):
    if value is None:
        return ''
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def write_csv(path, columns, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(columns)
        for row in rows:
            if isinstance(row, dict):
                row = [row.get(name) for name in columns]
            writer.writerow([_cell(value) for value in row])
    return path


def write_json(path, data) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + '\n', encoding='utf-8')
    return path


def run_simulate(config: ScenarioConfig):
    profile = resolve_profile(config)
    grid = grid_diagnostics(config.n_samples, config.dt)
    logger.info(
        f"Grid: {grid['n_samples']} samples, T = {grid['duration_s']:.4g} s, "
        f"domega = {grid['domega_rad_s']:.4g} rad/s, Nyquist = {grid['nyquist_rad_s']:.4g} rad/s"
    )
    trace = synthesize_traces(profile, config.pulse, config.n_samples, config.dt,
                              nz=config.nz, threads=config.threads)
    csv_path, json_path = write_trace(trace, config.output_dir)
    dump_profile(profile, config.output_dir / 'profile.json')
    return trace, (csv_path, json_path)


def report_payload(report: ReconstructionReport, trace: TimeTrace, config: ScenarioConfig) -> dict:
    payload = {
        'n_layers': len(report),
        'mu': config.mu,
        'omega2_ratio': config.omega2_ratio,
        'trace': trace.metadata(),
        'layers': report.to_rows(),
    }
    if report.per_layer_errors is not None:
        payload['comparison'] = list(report.per_layer_errors)
    return payload


def run_invert(config: ScenarioConfig):
    trace = read_trace(config.traces_dir)
    true_profile = resolve_profile(config, required=False)
    report = invert_profile(trace, mu=config.mu, max_layers=config.max_layers,
                            omega2_ratio=config.omega2_ratio, threads=config.threads,
                            true_profile=true_profile)
    report_path = write_json(config.output_dir / 'report.json', report_payload(report, trace, config))
    csv_path = write_csv(config.output_dir / 'reconstruction.csv', RECONSTRUCTION_COLUMNS,
                         report.staircase())
    logger.info(f"Reconstructed {len(report)} layers into {report_path}")
    return report, (report_path, csv_path)


def load_report(path) -> ReconstructionReport:
    try:
        data = json.loads(Path(path).read_text(encoding='utf-8'))
        return ReconstructionReport.from_rows(data['layers'])
    except (OSError, ValueError, KeyError, TypeError) as e:
        raise TraceFormatError(f"Cannot read reconstruction report {path}: {e}") from e


def run_compare(config: ScenarioConfig):
    if config.report_path is None:
        raise PreconditionError("compare needs --report")
    report = load_report(config.report_path)
    profile = resolve_profile(config)
    comparison = score_report(report, profile)
    output_dir = config.output_dir if config.output_dir != Path('.') else config.report_path.parent
    path = write_csv(output_dir / 'comparison.csv', COMPARISON_COLUMNS, comparison.rows)
    return comparison, path


def format_comparison(comparison: Comparison) -> str:
    def percent(value):
        return '-' if value is None else f"{100.0 * value:.2f}%"

    lines = [f"{'layer':>5} {'true':>9} {'eps err':>9} {'sigma err':>10} {'d err':>9}  notes"]
    for row in comparison.rows:
        notes = ', '.join(name for name in ('excluded', 'extra') if row[name])
        lines.append(
            f"{row['layer']:>5} {str(row['true_layer']):>9} {percent(row['eps_rel_error']):>9} "
            f"{percent(row['sigma_rel_error']):>10} {percent(row['thickness_rel_error']):>9}  {notes}"
        )
    lines.append(f"First-layer eps error: {percent(comparison.first_layer_eps_error)}")
    return '\n'.join(lines)


def run_verify(config: ScenarioConfig):
    """Bound check at omega = 2*pi*fc*(1 + i*ratio), plus the randomized sweeps when asked."""
    profile = resolve_profile(config)
    omega = config.omega
    condition_a = check_condition_a(profile, omega)
    report: BoundCheckReport = check_theorem1(profile, omega, config.delta, nz=config.nz)
    payload = report.to_dict()
    payload['condition_a'] = {
        'holds': condition_a.holds,
        'C': condition_a.C,
        'sigma_ok': condition_a.sigma_ok,
        'omega_ok': condition_a.omega_ok,
        'omega2_interval': list(condition_a.omega2_interval),
    }

    sweep: Optional[SweepResult] = None
    violated = report.status == STATUS_VIOLATED
    if config.sweep:
        sweep = theorem1_sweep(config.sweep, seed=config.seed, omega=omega, nz=config.nz,
                               threads=config.threads)
        write_csv(config.output_dir / 'sweep.csv', SWEEP_COLUMNS, sweep.rows)
        witnesses = [sweep, lemma2_sweep(config.sweep, seed=config.seed),
                     round_trip_sweep(config.sweep, seed=config.seed)]
        payload['sweeps'] = [
            {'name': w.name, 'n': w.n, 'seed': w.seed, 'violations': w.violations,
             'first_failure': w.first_failure}
            for w in witnesses
        ]
        violated = violated or any(not w.ok for w in witnesses)

    path = write_json(config.output_dir / 'bound_report.json', payload)
    logger.info(f"Bound check {report.status} at omega = {omega.value}, delta = {config.delta}")
    return report, path, violated
