"""
Spectral service layer: transforms between traces and spectra, selection of
the working frequency, continuation to complex frequency and time rescaling.

Transforms follow the continuous convention
    E^(w) = 1/(2*pi) * integral exp(-i*w*t) E(t) dt,
so a trace sampled at t0 + m*dt maps to dt/(2*pi) * rfft(E) * exp(-i*w*t0).
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from django.conf import settings
from scipy import fft

from forward.traces import TimeTrace, is_power_of_two
from medium.exceptions import (
    ContinuationUnstableError,
    EmptyTraceError,
    NoSignalError,
    PreconditionError,
    TraceFormatError,
)
from medium.profile import ComplexFrequency
from medium.services import SQRT2

logger = logging.getLogger(__name__)

# Samples whose damping weight falls below this are left out of the sum
_MIN_WEIGHT = 1e-300
_LOG_MIN_WEIGHT = math.log(_MIN_WEIGHT)
OMEGA2_RATIO_RANGE = (-1.0, 1.0 - SQRT2)


def frequencies(n_bins: int, domega: float) -> np.ndarray:
    return np.arange(n_bins) * domega


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Nonnegative-frequency bins of a real signal; bin j sits at j*domega."""
    domega: float
    values: np.ndarray
    kind: str = 'E'

    def __post_init__(self):
        object.__setattr__(self, 'values', np.asarray(self.values, dtype=complex))
        if self.kind not in ('E', 'E_z'):
            raise PreconditionError(f"Unknown spectrum kind: {self.kind}")
        if not self.domega > 0:
            raise PreconditionError(f"Bin width must be positive, got {self.domega}")

    @property
    def n_bins(self) -> int:
        return self.values.size

    @property
    def omegas(self) -> np.ndarray:
        return frequencies(self.n_bins, self.domega)

    @property
    def nyquist(self) -> float:
        return (self.n_bins - 1) * self.domega


def forward_transform(trace: TimeTrace) -> Tuple[Spectrum, Spectrum]:
    if not is_power_of_two(trace.n_samples):
        raise PreconditionError(f"Trace length must be a power of two, got {trace.n_samples}")
    domega = 2.0 * math.pi / (trace.n_samples * trace.dt)
    omegas = frequencies(trace.n_samples // 2 + 1, domega)
    shift = trace.dt / (2.0 * math.pi) * np.exp(-1j * omegas * trace.t0)
    return (
        Spectrum(domega=domega, values=fft.rfft(trace.E) * shift, kind='E'),
        Spectrum(domega=domega, values=fft.rfft(trace.E_z) * shift, kind='E_z'),
    )


def inverse_transform(spectrum_E: Spectrum, spectrum_Ez: Spectrum, n_samples: int, dt: float,
                      t0: float = 0.0, depth: float = 0.0) -> TimeTrace:
    """Real traces on t0 + m*dt from their nonnegative-frequency spectra."""
    n_bins = n_samples // 2 + 1
    domega = 2.0 * math.pi / (n_samples * dt)
    for spectrum in (spectrum_E, spectrum_Ez):
        if spectrum.n_bins != n_bins:
            raise TraceFormatError(
                f"Spectrum has {spectrum.n_bins} bins, {n_samples} samples need {n_bins}"
            )
        if not math.isclose(spectrum.domega, domega, rel_tol=1e-9):
            raise TraceFormatError(
                f"Bin width {spectrum.domega:g} does not match 2*pi/(n*dt) = {domega:g}"
            )

    shift = 2.0 * math.pi / dt * np.exp(1j * frequencies(n_bins, domega) * t0)
    return TimeTrace(
        dt=dt,
        E=fft.irfft(spectrum_E.values * shift, n_samples),
        E_z=fft.irfft(spectrum_Ez.values * shift, n_samples),
        t0=t0,
        depth=depth,
    )


def select_omega1(spectrum: Spectrum, cutoff: Optional[float] = None) -> ComplexFrequency:
    """
    Bin frequency maximizing |E^| above the low-frequency cutoff (by default a
    fixed fraction of Nyquist). Ties go to the lower bin.
    """
    if cutoff is None:
        cutoff = settings.GPR_LOW_CUTOFF_FRACTION * spectrum.nyquist
    candidates = np.flatnonzero((spectrum.omegas >= cutoff) & (spectrum.omegas > 0))
    amplitude = np.abs(spectrum.values[candidates])
    if candidates.size == 0 or not np.any(amplitude > 0):
        raise NoSignalError(f"No spectral energy above {cutoff:.4g} rad/s")
    best = int(candidates[int(np.argmax(amplitude))])
    omega1 = best * spectrum.domega
    logger.debug(f"Selected bin {best}: omega1 = {omega1:.6g} rad/s")
    return ComplexFrequency(omega1=omega1)


def choose_omega2(omega1: float, ratio: Optional[float] = None) -> ComplexFrequency:
    ratio = settings.GPR_OMEGA2_RATIO if ratio is None else ratio
    low, high = OMEGA2_RATIO_RANGE
    if not low - 1e-15 <= ratio <= high + 1e-15:
        raise PreconditionError(
            f"omega2/omega1 = {ratio} lies outside [{low}, {high:.6f}]"
        )
    return ComplexFrequency.from_ratio(omega1, ratio)


def continue_to_complex(trace: TimeTrace, omega: ComplexFrequency) -> Tuple[complex, complex]:
    """
    Damped sum dt/(2*pi) * sum exp(-i*w1*t) * exp(w2*t) * E(t) at a single
    complex frequency, for both channels.
    """
    t = trace.times
    log_weight = omega.omega2 * t
    keep = log_weight >= _LOG_MIN_WEIGHT
    if not np.any(keep):
        raise ContinuationUnstableError(
            f"Damping exp({omega.omega2:.4g}*t) underflows every sample of the trace"
        )
    if not np.all(keep):
        logger.debug(f"Continuation drops {int(np.sum(~keep))} underflowing samples")

    kernel = np.exp(-1j * omega.omega1 * t[keep] + log_weight[keep]) * (trace.dt / (2.0 * math.pi))
    # np.sum reduces pairwise, so the result does not depend on thread count
    return complex(np.sum(kernel * trace.E[keep])), complex(np.sum(kernel * trace.E_z[keep]))


def rescale_time(trace: TimeTrace, dt_shift: float) -> TimeTrace:
    """
    Move the time origin to dt_shift by an integer sample shift (zero-padded)
    and keep the sub-sample remainder in t0. Negative shifts move it back.
    """
    n = int(round((dt_shift - trace.t0) / trace.dt))
    if abs(n) >= trace.n_samples:
        raise EmptyTraceError(
            f"Shift of {n} samples leaves nothing of a {trace.n_samples}-sample trace"
        )

    def shifted(x):
        out = np.zeros_like(x)
        if n >= 0:
            out[:x.size - n] = x[n:]
        else:
            out[-n:] = x[:x.size + n]
        return out

    return TimeTrace(
        dt=trace.dt,
        E=shifted(trace.E),
        E_z=shifted(trace.E_z),
        t0=trace.t0 + n * trace.dt - dt_shift,
        depth=trace.depth,
        pulse=trace.pulse,
    )
