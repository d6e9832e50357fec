"""
Layer-stripping service layer.

Each strip reads the local wavenumber at the top of the current layer from
the surface impedance at one complex frequency, converts it to (eps, sigma),
measures the layer thickness from the two-way time between the direct
downward impulse and the first upgoing one, then carries the traces through
the layer to the next top.
"""

import dataclasses
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from django.conf import settings
from scipy import signal

from forward.services import propagate_slab_field
from forward.traces import TimeTrace
from medium.exceptions import DegenerateInputError, NoArrivalError, PreconditionError, TerminalLayer
from medium.profile import CONSTANTS, ComplexFrequency, MediumProfile
from medium.services import k_squared, kappa_bound, wavenumber
from spectral.services import (
    Spectrum,
    choose_omega2,
    continue_to_complex,
    forward_transform,
    inverse_transform,
    rescale_time,
    select_omega1,
)

logger = logging.getLogger(__name__)

FIELD_FLOOR = 1e-280
SIGMA_CLIP = 1e-6
EPS_RANGE = (1.0, 100.0)
ENERGY_STOP = 1e-6

FLAG_SIGMA_CLIPPED = 'sigma-clipped'
FLAG_UNRELIABLE = 'unreliable'
FLAG_TERMINAL = 'terminal'
FLAG_NO_SEPARATION = 'no-separation'
FLAG_CAUSAL_HORIZON = 'causal-horizon'


@dataclass(frozen=True)
class LayerEstimate:
    """
    One stripped layer. kappa_bound_used is the nominal bound 2*delta/(1 - delta)
    at the configured GPR_DELTA, not one derived from the layer itself.
    """
    index: int
    depth_top: float
    eps_hat: float
    sigma_hat: float
    speed_hat: float
    thickness_hat: Optional[float]
    omega_used: ComplexFrequency
    q_top: complex
    kappa_bound_used: float
    flags: Tuple[str, ...] = ()
    arrivals: Tuple[float, ...] = ()

    @property
    def reliable(self) -> bool:
        return FLAG_UNRELIABLE not in self.flags

    @property
    def depth_bottom(self) -> Optional[float]:
        if self.thickness_hat is None:
            return None
        return self.depth_top + self.thickness_hat

    def with_flags(self, *flags, **changes) -> 'LayerEstimate':
        merged = self.flags + tuple(f for f in flags if f not in self.flags)
        return dataclasses.replace(self, flags=merged, **changes)

    def to_row(self) -> dict:
        return {
            'layer': self.index + 1,
            'depth_top_m': self.depth_top,
            'eps_hat': self.eps_hat,
            'sigma_hat_S_per_m': self.sigma_hat,
            'speed_m_per_s': self.speed_hat,
            'thickness_m': self.thickness_hat,
            'omega1_rad_s': self.omega_used.omega1,
            'omega2_rad_s': self.omega_used.omega2,
            'kappa_bound': self.kappa_bound_used,
            'q_top': [self.q_top.real, self.q_top.imag],
            'arrivals_s': list(self.arrivals),
            'flags': list(self.flags),
        }

    @classmethod
    def from_row(cls, row: dict) -> 'LayerEstimate':
        q_re, q_im = row.get('q_top') or (0.0, 0.0)
        thickness = row.get('thickness_m')
        return cls(
            index=int(row['layer']) - 1,
            depth_top=float(row['depth_top_m']),
            eps_hat=float(row['eps_hat']),
            sigma_hat=float(row['sigma_hat_S_per_m']),
            speed_hat=float(row['speed_m_per_s']),
            thickness_hat=None if thickness is None else float(thickness),
            omega_used=ComplexFrequency(float(row['omega1_rad_s']), float(row['omega2_rad_s'])),
            q_top=complex(q_re, q_im),
            kappa_bound_used=float(row['kappa_bound']),
            flags=tuple(row.get('flags', ())),
            arrivals=tuple(float(t) for t in row.get('arrivals_s', ())),
        )


@dataclass(frozen=True)
class ReconstructionReport:
    estimates: Tuple[LayerEstimate, ...]
    true_profile: Optional[MediumProfile] = None
    per_layer_errors: Optional[Tuple[dict, ...]] = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, 'estimates', tuple(self.estimates))
        bottoms = [e.depth_bottom for e in self.estimates if e.depth_bottom is not None]
        if any(b <= a for a, b in zip(bottoms, bottoms[1:])):
            raise PreconditionError("Reconstructed layer depths must increase strictly")

    def __len__(self):
        return len(self.estimates)

    def to_rows(self) -> List[dict]:
        return [estimate.to_row() for estimate in self.estimates]

    @classmethod
    def from_rows(cls, rows) -> 'ReconstructionReport':
        return cls(estimates=tuple(LayerEstimate.from_row(row) for row in rows))

    def staircase(self) -> List[Tuple[float, float, float]]:
        """(z_m, eps_hat, sigma_hat) at the top of every reconstructed layer."""
        return [(e.depth_top, e.eps_hat, e.sigma_hat) for e in self.estimates]


def estimate_k_top(E_hat: complex, Ez_hat: complex) -> complex:
    if abs(E_hat) < FIELD_FLOOR:
        raise DegenerateInputError(f"Field value {abs(E_hat):.3g} is too small to divide by")
    return -1j * Ez_hat / E_hat


def recover_eps_sigma(k2, omega: ComplexFrequency, mu: float = 1.0):
    """
    Invert k^2 = mu*eps*w^2/c^2 - i*mu0*mu*sigma*w for (eps, sigma). Works
    elementwise on arrays of k^2 as well.
    """
    k2 = np.asarray(k2, dtype=complex)
    w1, w2 = omega.omega1, omega.omega2
    mod2 = w1 * w1 + w2 * w2
    eps = CONSTANTS.c ** 2 / (mu * mod2) * (k2.real + (w2 / w1) * k2.imag)
    if w2 == 0.0:
        sigma = -k2.imag / (CONSTANTS.mu0 * mu * w1)
    else:
        sigma = w2 / (CONSTANTS.mu0 * mu * mod2) * (2.0 * k2.real + (w2 / w1 - w1 / w2) * k2.imag)
    if eps.ndim == 0:
        return float(eps), float(sigma)
    return eps, sigma


def _refine_peak(envelope: np.ndarray, i: int) -> float:
    """Sub-sample peak position from a parabola through three samples."""
    if i <= 0 or i >= envelope.size - 1:
        return float(i)
    left, mid, right = envelope[i - 1], envelope[i], envelope[i + 1]
    curvature = left - 2.0 * mid + right
    if curvature >= 0.0:
        return float(i)
    return i + 0.5 * (left - right) / curvature


def _peaks(trace: TimeTrace, threshold_ratio: float, min_separation: float, floor: float):
    envelope = np.abs(signal.hilbert(trace.E))
    peak = float(envelope.max())
    height = max(threshold_ratio * peak, floor)
    if peak <= 0.0 or peak < floor:
        return envelope, np.zeros(0, dtype=int), np.zeros(0, dtype=int)
    distance = max(1, int(round(min_separation / trace.dt)))
    merged, _ = signal.find_peaks(envelope, height=height, distance=distance)
    raw, _ = signal.find_peaks(envelope, height=height)
    return envelope, merged, raw


def detect_impulses(trace: TimeTrace, threshold_ratio: Optional[float] = None,
                    min_separation: Optional[float] = None, floor: float = 0.0) -> Tuple[float, ...]:
    """
    Arrival times of the impulses in E: envelope maxima above threshold_ratio
    of the largest one (and above the absolute floor), with maxima closer
    than min_separation merged into the strongest.
    """
    threshold_ratio = settings.GPR_THRESHOLD_RATIO if threshold_ratio is None else threshold_ratio
    if not 0.0 < threshold_ratio < 1.0:
        raise PreconditionError(f"Threshold ratio must lie in (0, 1), got {threshold_ratio}")
    if min_separation is None:
        if trace.pulse is None:
            raise PreconditionError("A pulse width is needed to merge nearby maxima")
        min_separation = trace.pulse.width

    envelope, merged, _ = _peaks(trace, threshold_ratio, min_separation, floor)
    if merged.size == 0:
        raise NoArrivalError("No impulse exceeds the detection threshold")
    return tuple(trace.t0 + _refine_peak(envelope, int(i)) * trace.dt for i in merged)


def thickness_from_arrivals(arrivals, speed: float) -> float:
    """Two-way travel between the direct impulse and the bottom reflection."""
    if not speed > 0:
        raise PreconditionError(f"Wave speed must be positive, got {speed}")
    if len(arrivals) < 2:
        raise TerminalLayer("A single arrival leaves the layer thickness undefined")
    return speed * (arrivals[1] - arrivals[0]) / 2.0


def _active_bins(spectrum: Spectrum, floor: float) -> np.ndarray:
    amplitude = np.abs(spectrum.values)
    active = np.flatnonzero(amplitude >= floor * amplitude.max())
    return active[active > 0]


def separate_waves(trace: TimeTrace, eps: float, sigma: float, mu: float = 1.0,
                   floor: Optional[float] = None, spectra=None) -> Tuple[TimeTrace, TimeTrace]:
    """
    Downgoing and upgoing parts of the traces in a constant medium (eps, sigma),
    each returned as its own (E, E_z) pair. The downgoing wave has E_z = ik*E,
    the upgoing one E_z = -ik*E.
    """
    floor = settings.GPR_SPECTRUM_FLOOR if floor is None else floor
    spectrum_E, spectrum_Ez = spectra if spectra is not None else forward_transform(trace)
    active = _active_bins(spectrum_E, floor)
    ik = 1j * wavenumber(k_squared(eps, sigma, mu, spectrum_E.omegas[active]))
    E, E_z = spectrum_E.values[active], spectrum_Ez.values[active]

    parts = []
    for sign in (1.0, -1.0):
        values = np.zeros_like(spectrum_E.values)
        values_z = np.zeros_like(spectrum_E.values)
        values[active] = 0.5 * (E + sign * E_z / ik)
        values_z[active] = sign * ik * values[active]
        part = inverse_transform(Spectrum(domega=spectrum_E.domega, values=values, kind='E'),
                                 Spectrum(domega=spectrum_E.domega, values=values_z, kind='E_z'),
                                 trace.n_samples, trace.dt, t0=trace.t0, depth=trace.depth)
        parts.append(dataclasses.replace(part, pulse=trace.pulse))
    return parts[0], parts[1]


def bottom_arrivals(down: TimeTrace, up: TimeTrace, threshold_ratio: float,
                    pulse_width: float) -> Tuple[float, ...]:
    """
    The direct impulse of the downgoing wave followed by the upgoing impulses
    after it. Upgoing maxima must reach threshold_ratio of the direct one.
    """
    direct = detect_impulses(down, threshold_ratio, pulse_width)[0]
    floor = threshold_ratio * float(np.abs(signal.hilbert(down.E)).max())
    try:
        upgoing = detect_impulses(up, threshold_ratio, pulse_width, floor=floor)
    except NoArrivalError:
        upgoing = ()
    # upgoing energy at the direct arrival comes from the error in (eps, sigma)
    return (direct,) + tuple(t for t in upgoing if t > direct + 0.5 * pulse_width)


def mute_before(trace: TimeTrace, t_cut: float) -> TimeTrace:
    """Zero both channels at times earlier than t_cut."""
    keep = trace.times >= t_cut
    return dataclasses.replace(trace, E=np.where(keep, trace.E, 0.0),
                               E_z=np.where(keep, trace.E_z, 0.0))


def _propagate_bins(spectrum_E: Spectrum, spectrum_Ez: Spectrum, eps: float, sigma: float,
                    mu: float, thickness: float, floor: float, threads: int):
    """Carry every energetic bin through a constant slab of the recovered medium."""
    active = _active_bins(spectrum_E, floor)
    omegas = spectrum_E.omegas

    def carry(chunk):
        k = wavenumber(k_squared(eps, sigma, mu, omegas[chunk]))
        return propagate_slab_field(spectrum_E.values[chunk], spectrum_Ez.values[chunk], k, thickness)

    chunks = [c for c in np.array_split(active, max(1, min(threads, active.size))) if c.size]
    with ThreadPoolExecutor(max_workers=threads) as executor:
        parts = list(executor.map(carry, chunks))

    values_E = np.zeros_like(spectrum_E.values)
    values_Ez = np.zeros_like(spectrum_Ez.values)
    for chunk, (E, E_z) in zip(chunks, parts):
        values_E[chunk] = E
        values_Ez[chunk] = E_z
    return (Spectrum(domega=spectrum_E.domega, values=values_E, kind='E'),
            Spectrum(domega=spectrum_Ez.domega, values=values_Ez, kind='E_z'))


def strip_layer(trace: TimeTrace, mu: float = 1.0, omega2_ratio: Optional[float] = None,
                index: int = 0, threshold_ratio: Optional[float] = None,
                floor: Optional[float] = None,
                threads: Optional[int] = None) -> Tuple[LayerEstimate, Optional[TimeTrace]]:
    """
    One layer: estimate (eps, sigma, thickness) at the top and return the
    traces at the top of the next layer, or None when stripping ends here.
    """
    floor = settings.GPR_SPECTRUM_FLOOR if floor is None else floor
    threads = int(threads or settings.GPR_THREADS)

    spectrum_E, spectrum_Ez = forward_transform(trace)
    omega1 = select_omega1(spectrum_E).omega1
    omega = choose_omega2(omega1, omega2_ratio)
    E_hat, Ez_hat = continue_to_complex(trace, omega)
    k_top = estimate_k_top(E_hat, Ez_hat)
    eps, sigma = recover_eps_sigma(k_top * k_top, omega, mu)

    flags = []
    if sigma < 0.0:
        if sigma >= -SIGMA_CLIP:
            logger.warning(f"Layer {index + 1}: clipping sigma_hat={sigma:.3g} S/m to 0")
            sigma = 0.0
            flags.append(FLAG_SIGMA_CLIPPED)
        else:
            flags.append(FLAG_UNRELIABLE)
    if not EPS_RANGE[0] <= eps <= EPS_RANGE[1]:
        flags.append(FLAG_UNRELIABLE)
    speed = CONSTANTS.c / math.sqrt(mu * eps) if eps > 0 else math.nan

    estimate = LayerEstimate(
        index=index,
        depth_top=trace.depth,
        eps_hat=eps,
        sigma_hat=sigma,
        speed_hat=speed,
        thickness_hat=None,
        omega_used=omega,
        q_top=complex(Ez_hat / E_hat),
        kappa_bound_used=kappa_bound(settings.GPR_DELTA),
        flags=tuple(flags),
    )
    logger.info(
        f"Layer {index + 1} at {trace.depth:.3f} m: eps={eps:.5g}, sigma={sigma:.4g} S/m "
        f"(omega1={omega1:.5g} rad/s)"
    )
    if not estimate.reliable:
        logger.warning(f"Layer {index + 1}: estimate out of range, stripping stops")
        return estimate, None

    period = 2.0 * math.pi / omega1
    pulse_width = 3.0 * period
    threshold_ratio = settings.GPR_THRESHOLD_RATIO if threshold_ratio is None else threshold_ratio
    down, up = separate_waves(trace, eps, sigma, mu, floor, spectra=(spectrum_E, spectrum_Ez))
    arrivals = bottom_arrivals(down, up, threshold_ratio, pulse_width)
    estimate = dataclasses.replace(estimate, arrivals=arrivals)
    try:
        thickness = thickness_from_arrivals(arrivals, speed)
    except TerminalLayer:
        _, merged, raw = _peaks(trace, threshold_ratio, pulse_width, 0.0)
        extra = (FLAG_NO_SEPARATION,) if raw.size > merged.size else ()
        if extra:
            logger.warning(f"Layer {index + 1}: reflections overlap the direct pulse")
        return estimate.with_flags(FLAG_TERMINAL, *extra), None

    estimate = dataclasses.replace(estimate, thickness_hat=thickness)
    bottom_E, bottom_Ez = _propagate_bins(spectrum_E, spectrum_Ez, eps, sigma, mu, thickness,
                                          floor, threads)
    bottom = inverse_transform(bottom_E, bottom_Ez, trace.n_samples, trace.dt, t0=trace.t0,
                               depth=trace.depth + thickness)
    following = rescale_time(dataclasses.replace(bottom, pulse=trace.pulse), thickness / speed)
    # nothing has reached the next top before the direct pulse
    following = mute_before(following, arrivals[0] - 2.0 * period)
    logger.info(f"Layer {index + 1}: thickness {thickness:.4g} m")
    return estimate, following


def invert_profile(trace: TimeTrace, mu: float = 1.0, max_layers: int = 10,
                   omega2_ratio: Optional[float] = None, threshold_ratio: Optional[float] = None,
                   threads: Optional[int] = None,
                   true_profile: Optional[MediumProfile] = None) -> ReconstructionReport:
    """Strip layers until a terminal layer, max_layers, a spent trace or an unreliable estimate."""
    if max_layers < 0:
        raise PreconditionError(f"max_layers must not be negative, got {max_layers}")
    horizon = CONSTANTS.c * trace.duration / 2.0
    initial_energy = trace.energy()
    estimates: List[LayerEstimate] = []
    current: Optional[TimeTrace] = trace

    while current is not None and len(estimates) < max_layers:
        if current.energy() < ENERGY_STOP * initial_energy:
            logger.info(f"Remaining trace energy is spent after {len(estimates)} layers")
            break
        estimate, current = strip_layer(current, mu, omega2_ratio, index=len(estimates),
                                        threshold_ratio=threshold_ratio, threads=threads)
        bottom = estimate.depth_bottom
        if bottom is not None and bottom > horizon:
            logger.warning(f"Layer {estimate.index + 1} ends beyond the causal horizon {horizon:.4g} m")
            estimate = estimate.with_flags(FLAG_CAUSAL_HORIZON, thickness_hat=None)
            current = None
        estimates.append(estimate)

    report = ReconstructionReport(estimates=tuple(estimates), true_profile=true_profile)
    if true_profile is not None:
        comparison = score_report(report, true_profile)
        report = dataclasses.replace(report, per_layer_errors=tuple(comparison.rows))
    return report


@dataclass(frozen=True)
class Comparison:
    rows: Tuple[dict, ...]
    first_layer_eps_error: Optional[float]


def _relative(estimate: float, truth: float) -> Optional[float]:
    if truth == 0.0:
        return None
    return abs(estimate - truth) / abs(truth)


def _true_interval(profile: MediumProfile, j: int):
    if j == profile.n_layers:
        return profile.L, math.inf
    layer = profile.layers[j]
    return layer.z_top, layer.z_bottom


def _match_layer(profile: MediumProfile, estimate: LayerEstimate) -> int:
    top = estimate.depth_top
    bottom = estimate.depth_bottom
    if bottom is None:
        # open-ended estimate: the true layer whose top is closest
        tops = np.array(profile.interfaces[:profile.n_layers] + [profile.L])
        return int(np.argmin(np.abs(tops - top)))
    overlaps = []
    for j in range(profile.n_layers + 1):
        z_top, z_bottom = _true_interval(profile, j)
        overlaps.append(min(bottom, z_bottom) - max(top, z_top))
    return int(np.argmax(overlaps))


def score_report(report: ReconstructionReport, profile: MediumProfile) -> Comparison:
    """
    Relative errors of every estimate against the true layer it overlaps
    most. True values are taken at the top of the matched layer.
    """
    rows, matched = [], set()
    for estimate in report.estimates:
        j = _match_layer(profile, estimate)
        if j == profile.n_layers:
            eps_true, sigma_true, thickness_true = profile.eps_substrate, 0.0, None
        else:
            layer = profile.layers[j]
            eps_true, sigma_true, thickness_true = layer.eps_top, layer.sigma_top, layer.thickness
        thickness_error = None
        if thickness_true is not None and estimate.thickness_hat is not None:
            thickness_error = _relative(estimate.thickness_hat, thickness_true)
        rows.append({
            'layer': estimate.index + 1,
            'true_layer': j + 1 if j < profile.n_layers else 'substrate',
            'eps_hat': estimate.eps_hat,
            'eps_true': eps_true,
            'eps_rel_error': _relative(estimate.eps_hat, eps_true),
            'sigma_hat': estimate.sigma_hat,
            'sigma_true': sigma_true,
            'sigma_rel_error': _relative(estimate.sigma_hat, sigma_true),
            'sigma_abs_error': abs(estimate.sigma_hat - sigma_true),
            'thickness_hat': estimate.thickness_hat,
            'thickness_true': thickness_true,
            'thickness_rel_error': thickness_error,
            'excluded': not estimate.reliable,
            'extra': j in matched,
        })
        matched.add(j)

    first = next((r for r in rows if r['true_layer'] == 1 and not r['excluded'] and not r['extra']),
                 None)
    return Comparison(rows=tuple(rows), first_layer_eps_error=first['eps_rel_error'] if first else None)
