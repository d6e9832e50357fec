"""
Forward service layer: the frequency-domain field above and inside the layered
medium, and synthetic surface traces.

q(z) = E_z/E is swept upward from the radiation condition at z = L through
constant sub-cells, each propagated exactly. The field is then rebuilt
downward from the surface Robin condition by accumulating log E.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from django.conf import settings
from scipy.special import gammaincc

from medium.exceptions import (
    DegenerateInputError,
    NumericalOverflowError,
    PoleCrossingError,
    PreconditionError,
    ResonanceError,
    SamplingError,
)
from medium.profile import CONSTANTS, ComplexFrequency, MediumProfile
from medium.services import k_squared, wavenumber
from spectral.services import Spectrum, frequencies, inverse_transform

from .traces import SourcePulse, TimeTrace, is_power_of_two

logger = logging.getLogger(__name__)

# Relative size below which a Moebius denominator counts as a pole
_POLE_TOLERANCE = 1e-14
# Below this |k dz| the sinc factor switches to its series
_SINC_SERIES = 1e-4
# Share of pulse energy above Nyquist that is tolerated
_ALIASING_TOLERANCE = 1e-6


@dataclass(frozen=True, eq=False)
class FieldSolution:
    """
    E and E_z = q*E on the cell edges of [0, L]. log_E keeps the field
    representable where E itself underflows.
    """
    z_grid: np.ndarray
    E: np.ndarray
    E_z: np.ndarray
    omega: ComplexFrequency
    q: np.ndarray
    log_E: np.ndarray

    def __post_init__(self):
        n = len(self.z_grid)
        if not len(self.E) == len(self.E_z) == len(self.q) == len(self.log_E) == n:
            raise PreconditionError("Field arrays must match the depth grid")


@dataclass(frozen=True, eq=False)
class CellGrid:
    """Constant sub-cells of the layered part, coefficients sampled at midpoints."""
    z_edges: np.ndarray
    dz: np.ndarray
    eps: np.ndarray
    sigma: np.ndarray
    layer_index: np.ndarray

    @property
    def n_cells(self) -> int:
        return self.dz.size


def ricker(t, pulse: SourcePulse):
    """Standard zero-mean Ricker wavelet with unit peak at t = delay."""
    a = (math.pi * pulse.central_frequency) ** 2
    tau2 = (np.asarray(t, dtype=float) - pulse.delay) ** 2
    return (1.0 - 2.0 * a * tau2) * np.exp(-a * tau2)


def ricker_transform(pulse: SourcePulse, omega):
    """
    Closed-form integral of exp(-i*omega*t)*f(t) over the real line, valid for
    complex omega.
    """
    a = (math.pi * pulse.central_frequency) ** 2
    omega = np.asarray(omega, dtype=complex)
    return (np.exp(-1j * omega * pulse.delay) * omega ** 2 / (2.0 * a)
            * math.sqrt(math.pi / a) * np.exp(-omega ** 2 / (4.0 * a)))


def source_term(pulse: SourcePulse, omega, mu: float = 1.0):
    """Vectorized h(omega) = i*mu0*mu*omega*f~(omega)."""
    omega = np.asarray(omega, dtype=complex)
    f_tilde = ricker_transform(pulse, omega) / math.sqrt(2.0 * math.pi)
    return 1j * CONSTANTS.mu0 * mu * omega * f_tilde


def source_spectrum(pulse: SourcePulse, omega: ComplexFrequency, mu: float = 1.0) -> complex:
    return complex(source_term(pulse, omega.value, mu))


def propagate_slab_q(q_in, k, dz, downward: bool = False):
    """
    Exact Riccati step across a constant slab of width dz. The default carries
    q from the bottom of the slab to its top; `downward` goes the other way.
    Uses exp(2ik*dz), which stays bounded for Im k >= 0.
    """
    q_in = np.asarray(q_in, dtype=complex)
    k = np.asarray(k, dtype=complex)
    dz = np.asarray(dz, dtype=float)
    if np.any(dz < 0):
        raise PreconditionError("Slab width must not be negative")
    if np.any(k == 0):
        raise DegenerateInputError("Zero wavenumber in slab propagation")

    ik = 1j * k
    e = np.exp(2j * k * dz)
    # tanh(-ik*dz) = (1 - e)/(1 + e); reversing the direction flips its sign
    sign = -1.0 if downward else 1.0
    plus, minus = 1.0 + e, sign * (1.0 - e)
    numerator = ik * (q_in * plus + ik * minus)
    denominator = ik * plus + q_in * minus

    scale = np.abs(ik) + np.abs(q_in)
    if np.any(np.abs(denominator) <= _POLE_TOLERANCE * scale):
        raise PoleCrossingError("Riccati step hit the pole of its Moebius map")
    q_out = numerator / denominator
    if not np.all(np.isfinite(q_out)):
        raise NumericalOverflowError("Non-finite impedance in slab propagation")
    return complex(q_out) if q_out.ndim == 0 else q_out


def _sinc(x):
    x = np.asarray(x, dtype=complex)
    small = np.abs(x) < _SINC_SERIES
    safe = np.where(small, 1.0, x)
    return np.where(small, 1.0 - x * x / 6.0, np.sin(safe) / safe)


def propagate_slab_field(E, E_z, k, dz):
    """
    Constant-coefficient propagator of (E, E_z) over dz (either sign):
    E_out = E*cos(k*dz) + E_z*sin(k*dz)/k, E_z_out = -E*k*sin(k*dz) + E_z*cos(k*dz).
    """
    E = np.asarray(E, dtype=complex)
    E_z = np.asarray(E_z, dtype=complex)
    k = np.asarray(k, dtype=complex)
    x = k * dz
    cos = np.cos(x)
    E_out = E * cos + E_z * dz * _sinc(x)
    E_z_out = -E * k * np.sin(x) + E_z * cos
    if E_out.ndim == 0:
        return complex(E_out), complex(E_z_out)
    return E_out, E_z_out


def discretize(profile: MediumProfile, nz: Optional[int] = None) -> CellGrid:
    """nz cells per layer; the edges include every interface exactly once."""
    nz = int(nz or settings.GPR_NZ_PER_LAYER)
    if nz < 1:
        raise PreconditionError(f"At least one cell per layer is required, got {nz}")

    edges, dz, eps, sigma, index = [np.zeros(1)], [], [], [], []
    for j, layer in enumerate(profile.layers):
        z = np.linspace(layer.z_top, layer.z_bottom, nz + 1)
        mid = 0.5 * (z[1:] + z[:-1])
        edges.append(z[1:])
        dz.append(np.diff(z))
        eps.append(layer.eps_at(mid))
        sigma.append(layer.sigma_at(mid))
        index.append(np.full(nz, j))

    def join(parts, dtype=float):
        return np.concatenate(parts).astype(dtype) if parts else np.zeros(0, dtype=dtype)

    return CellGrid(
        z_edges=np.concatenate(edges),
        dz=join(dz),
        eps=join(eps),
        sigma=join(sigma),
        layer_index=join(index, int),
    )


def _sweep(profile: MediumProfile, cells: CellGrid, omegas: np.ndarray, keep: bool):
    """Backward sweep of q for an array of frequencies; optionally keep q at every edge."""
    mu = profile.mu
    k_sub = wavenumber(k_squared(profile.eps_substrate, 0.0, mu, omegas))
    q = 1j * k_sub
    history = [q] if keep else None
    for i in range(cells.n_cells - 1, -1, -1):
        k = wavenumber(k_squared(cells.eps[i], cells.sigma[i], mu, omegas))
        try:
            q = propagate_slab_q(q, k, cells.dz[i])
        except PoleCrossingError as e:
            raise PoleCrossingError(str(e), omega=omegas, z=float(cells.z_edges[i])) from e
        if keep:
            history.append(q)
    if keep:
        return np.array(history[::-1])
    return q


def surface_impedance(profile: MediumProfile, omegas, nz: Optional[int] = None) -> np.ndarray:
    """q(0) for each (possibly complex) frequency."""
    omegas = np.atleast_1d(np.asarray(omegas, dtype=complex))
    return _sweep(profile, discretize(profile, nz), omegas, keep=False)


def impedance_profile(profile: MediumProfile, omega: ComplexFrequency,
                      nz: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Cell-edge depths and q at each of them for one frequency."""
    cells = discretize(profile, nz)
    q = _sweep(profile, cells, np.array([omega.value]), keep=True)[:, 0]
    return cells.z_edges, q


def _surface_values(profile: MediumProfile, pulse: SourcePulse, omegas, q0):
    """E(0) and E_z(0) from the Robin condition at the surface."""
    k0 = -omegas / CONSTANTS.c
    h = source_term(pulse, omegas, profile.mu)
    denominator = q0 + 1j * k0
    if np.any(np.abs(denominator) <= _POLE_TOLERANCE * (np.abs(q0) + np.abs(k0))):
        raise ResonanceError("Surface condition is degenerate: q(0) + ik0 vanishes")
    E0 = h * np.exp(-1j * k0 * pulse.z0) / denominator
    return E0, q0 * E0


def surface_field(profile: MediumProfile, pulse: SourcePulse, omegas,
                  nz: Optional[int] = None):
    """Direct frequency-domain E(0) and E_z(0) at arbitrary (complex) frequencies."""
    omegas = np.atleast_1d(np.asarray(omegas, dtype=complex))
    q0 = surface_impedance(profile, omegas, nz)
    return _surface_values(profile, pulse, omegas, q0)


def _log_growth(q, k, dz):
    """log(E(z+dz)/E(z)) across a constant slab given q at its top."""
    ik = 1j * k
    r = q / ik
    e = np.exp(2j * k * dz)
    return -1j * k * dz + np.log(((1.0 - r) + (1.0 + r) * e) / 2.0)


def solve_bvp(profile: MediumProfile, omega: ComplexFrequency, pulse: SourcePulse,
              nz: Optional[int] = None) -> FieldSolution:
    """Field on the cell edges of [0, L] at one frequency."""
    nz = int(nz or settings.GPR_NZ_PER_LAYER)
    if profile.n_layers and nz < 2:
        raise PreconditionError(f"solve_bvp needs nz >= 2 per layer, got {nz}")

    cells = discretize(profile, nz)
    omegas = np.array([omega.value])
    q = _sweep(profile, cells, omegas, keep=True)[:, 0]
    E0, _ = _surface_values(profile, pulse, omegas, q[:1])

    log_E = np.empty(q.size, dtype=complex)
    log_E[0] = np.log(E0[0])
    for i in range(cells.n_cells):
        k = wavenumber(k_squared(cells.eps[i], cells.sigma[i], profile.mu, omega.value))
        log_E[i + 1] = log_E[i] + _log_growth(q[i], k, cells.dz[i])
    if not np.all(np.isfinite(log_E)):
        raise NumericalOverflowError(f"Non-finite field reconstruction at omega={omega.value}")

    E = np.exp(log_E)
    return FieldSolution(z_grid=cells.z_edges, E=E, E_z=q * E, omega=omega, q=q, log_E=log_E)


def aliased_energy_fraction(pulse: SourcePulse, dt: float) -> float:
    """
    Share of the pulse energy above the Nyquist frequency pi/dt. |F|^2 is
    proportional to w^4*exp(-w^2/(2a)), whose tail is an incomplete gamma.
    """
    a = (math.pi * pulse.central_frequency) ** 2
    x = (math.pi / dt) / math.sqrt(2.0 * a)
    return float(gammaincc(2.5, x * x))


def _chunked(indices: np.ndarray, threads: int):
    n_chunks = max(1, min(threads, indices.size))
    return [chunk for chunk in np.array_split(indices, n_chunks) if chunk.size]


def synthesize_traces(profile: MediumProfile, pulse: SourcePulse, n_samples: int, dt: float,
                      nz: Optional[int] = None, threads: Optional[int] = None,
                      floor: Optional[float] = None) -> TimeTrace:
    """
    Surface traces E(0, t) and E_z(0, t) on t = m*dt. Bins whose source
    amplitude falls below `floor` times its maximum are left at zero.
    """
    if not is_power_of_two(n_samples):
        raise PreconditionError(f"n_samples must be a power of two, got {n_samples}")
    if not dt > 0:
        raise PreconditionError(f"dt must be positive, got {dt}")
    threads = int(threads or settings.GPR_THREADS)
    floor = settings.GPR_SPECTRUM_FLOOR if floor is None else floor

    aliased = aliased_energy_fraction(pulse, dt)
    if aliased > _ALIASING_TOLERANCE:
        raise SamplingError(
            f"{aliased:.3g} of the pulse energy lies above Nyquist for dt={dt:g} s"
        )

    domega = 2.0 * math.pi / (n_samples * dt)
    omegas = frequencies(n_samples // 2 + 1, domega)
    h = np.abs(source_term(pulse, omegas, profile.mu))
    active = np.flatnonzero(h >= floor * h.max())
    active = active[active > 0]
    logger.info(
        f"Synthesizing {n_samples} samples at dt={dt:g} s: {active.size} of "
        f"{omegas.size} bins above the source floor, {threads} threads"
    )

    chunks = _chunked(active, threads)
    with ThreadPoolExecutor(max_workers=threads) as executor:
        parts = list(executor.map(
            lambda chunk: surface_impedance(profile, omegas[chunk].astype(complex), nz), chunks
        ))
    q0 = np.concatenate(parts) if parts else np.zeros(0, dtype=complex)

    values_E = np.zeros(omegas.size, dtype=complex)
    values_Ez = np.zeros(omegas.size, dtype=complex)
    E0, Ez0 = _surface_values(profile, pulse, omegas[active].astype(complex), q0)
    values_E[active] = E0
    values_Ez[active] = Ez0

    trace = inverse_transform(
        Spectrum(domega=domega, values=values_E, kind='E'),
        Spectrum(domega=domega, values=values_Ez, kind='E_z'),
        n_samples, dt,
    )
    return TimeTrace(dt=dt, E=trace.E, E_z=trace.E_z, t0=0.0, depth=0.0, pulse=pulse)
