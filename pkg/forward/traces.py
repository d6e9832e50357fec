"""
Source pulses and time traces, plus the trace CSV/JSON file format.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from medium.exceptions import PreconditionError, TraceFormatError

logger = logging.getLogger(__name__)

TRACE_HEADER = 't,E,E_z'


def is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class SourcePulse:
    """
    Ricker source at height z0 < 0. The delay defaults to 3/f_c, which puts
    the pulse value at t = 0 below 1e-30 of its peak.
    """
    central_frequency: float
    delay: Optional[float] = None
    z0: float = -0.5
    kind: str = 'ricker'

    def __post_init__(self):
        if self.kind != 'ricker':
            raise PreconditionError(f"Unsupported pulse kind: {self.kind}")
        if not self.central_frequency > 0:
            raise PreconditionError(
                f"Central frequency must be positive, got {self.central_frequency}"
            )
        if self.delay is None:
            object.__setattr__(self, 'delay', 3.0 / self.central_frequency)
        if not self.delay > 0:
            raise PreconditionError(f"Pulse delay must be positive, got {self.delay}")
        if not self.z0 < 0:
            raise PreconditionError(f"Source height z0 must be negative, got {self.z0}")

    @property
    def T(self) -> float:
        """Effective support [0, 2*delay]."""
        return 2.0 * self.delay

    @property
    def width(self) -> float:
        """Pulse width used to merge nearby arrivals."""
        return 3.0 / self.central_frequency

    def to_dict(self) -> dict:
        return {
            'kind': self.kind,
            'central_frequency_hz': self.central_frequency,
            'delay_s': self.delay,
            'z0_m': self.z0,
        }

    @classmethod
    def from_dict(cls, data: dict):
        return cls(
            central_frequency=float(data['central_frequency_hz']),
            delay=float(data['delay_s']),
            z0=float(data['z0_m']),
            kind=data.get('kind', 'ricker'),
        )


@dataclass(frozen=True, eq=False)
class TimeTrace:
    """
    Uniformly sampled E(t) and E_z(t) at one depth; sample m sits at
    t0 + m*dt.
    """
    dt: float
    E: np.ndarray
    E_z: np.ndarray
    t0: float = 0.0
    depth: float = 0.0
    pulse: Optional[SourcePulse] = field(default=None, compare=False)

    def __post_init__(self):
        E = np.asarray(self.E, dtype=float)
        E_z = np.asarray(self.E_z, dtype=float)
        object.__setattr__(self, 'E', E)
        object.__setattr__(self, 'E_z', E_z)
        if E.shape != E_z.shape or E.ndim != 1:
            raise TraceFormatError(
                f"E and E_z must be 1-D arrays of equal length, got {E.shape} and {E_z.shape}"
            )
        if not is_power_of_two(E.size):
            raise TraceFormatError(f"Trace length must be a power of two, got {E.size}")
        if not self.dt > 0:
            raise TraceFormatError(f"Sample interval must be positive, got {self.dt}")

    @property
    def n_samples(self) -> int:
        return self.E.size

    @property
    def duration(self) -> float:
        return self.n_samples * self.dt

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.n_samples) * self.dt

    def energy(self) -> float:
        return float(np.sum(self.E ** 2))

    def scaled(self, factor: float) -> 'TimeTrace':
        return TimeTrace(dt=self.dt, E=self.E * factor, E_z=self.E_z * factor, t0=self.t0,
                         depth=self.depth, pulse=self.pulse)

    def metadata(self) -> dict:
        return {
            'dt': self.dt,
            't0': self.t0,
            'depth_m': self.depth,
            'n_samples': self.n_samples,
            'pulse': self.pulse.to_dict() if self.pulse else None,
        }


def write_trace(trace: TimeTrace, out_dir, stem: str = 'traceE'):
    """Write `<stem>.csv` (t,E,E_z at 17 significant digits) and its JSON sidecar."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{stem}.csv"
    json_path = out_dir / f"{stem}.json"

    table = np.column_stack([trace.times, trace.E, trace.E_z])
    np.savetxt(csv_path, table, fmt='%.17g', delimiter=',', header=TRACE_HEADER, comments='')
    json_path.write_text(json.dumps(trace.metadata(), indent=2, sort_keys=True), encoding='utf-8')
    logger.info(f"Wrote {trace.n_samples} samples to {csv_path}")
    return csv_path, json_path


def read_trace(path, stem: str = 'traceE') -> TimeTrace:
    """Read a trace written by write_trace; `path` is the directory or the CSV file."""
    path = Path(path)
    csv_path = path / f"{stem}.csv" if path.is_dir() else path
    json_path = csv_path.with_suffix('.json')
    try:
        with open(csv_path, 'r', encoding='utf-8') as f:
            header = f.readline().strip()
        if header != TRACE_HEADER:
            raise TraceFormatError(f"Unexpected trace header in {csv_path}: {header!r}")
        table = np.loadtxt(csv_path, delimiter=',', skiprows=1, ndmin=2)
        meta = json.loads(json_path.read_text(encoding='utf-8'))
    except (OSError, ValueError) as e:
        if isinstance(e, TraceFormatError):
            raise
        raise TraceFormatError(f"Cannot read trace {csv_path}: {e}") from e

    if table.shape[1] != 3:
        raise TraceFormatError(f"Trace {csv_path} must have 3 columns, got {table.shape[1]}")
    try:
        pulse = SourcePulse.from_dict(meta['pulse']) if meta.get('pulse') else None
        return TimeTrace(
            dt=float(meta['dt']),
            E=table[:, 1],
            E_z=table[:, 2],
            t0=float(meta.get('t0', 0.0)),
            depth=float(meta.get('depth_m', 0.0)),
            pulse=pulse,
        )
    except (KeyError, TypeError, PreconditionError) as e:
        raise TraceFormatError(f"Invalid trace metadata in {json_path}: {e}") from e
