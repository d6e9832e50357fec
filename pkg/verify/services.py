"""
Verify service layer: numerical witnesses for the accuracy estimates behind
layer stripping.

q(z) is swept through the medium at one complex frequency, mapped to the
per-layer quantities u_j = -iq/k_j and w_j = (u_j - 1)/(u_j + 1), and the
bounds on |w_j| at layer tops, inside layers and at interfaces are compared
with what Conditions A and B promise.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from django.conf import settings

from forward.services import impedance_profile
from inversion.services import recover_eps_sigma
from medium.exceptions import PoleCrossingError, PreconditionError
from medium.profile import CONSTANTS, ComplexFrequency, ConditionReport, Layer, MediumProfile
from medium.services import (
    DELTA_MAX,
    SQRT2,
    c0_constant,
    check_condition_b,
    k_squared,
    kappa_bound,
    wavenumber,
)

logger = logging.getLogger(__name__)

# Solver-consistency floor for the interface and beta inequalities
BOUND_SLACK = 1e-9
ANGLE_SLACK = 1e-12
_POLE_TOLERANCE = 1e-14

STATUS_PASSED = 'passed'
STATUS_VIOLATED = 'violated'
STATUS_NOT_APPLICABLE = 'not-applicable'

SWEEP_DELTAS = (0.05, 0.1, 0.2, DELTA_MAX)
SWEEP_COLUMNS = ('n_layers', 'delta', 'layer', 'w_top_abs', 'beta', 'kappa_actual',
                 'kappa_bound', 'passed')


@dataclass(frozen=True, eq=False)
class ImpedanceSweep:
    """q on the cell edges of [0, L]; layer j owns the edges in slices[j], both ends included."""
    z: np.ndarray
    q: np.ndarray
    slices: Tuple[slice, ...]
    omega: ComplexFrequency

    def layer(self, j: int):
        s = self.slices[j]
        return self.z[s], self.q[s]


@dataclass(frozen=True, eq=False)
class LayerW:
    index: int
    z: np.ndarray
    u: np.ndarray
    w: np.ndarray


@dataclass(frozen=True)
class LayerBound:
    index: int
    w_at_top: complex
    w_max: float
    kappa_actual: float
    kappa_bound: float
    passed: bool
    beta_bound: float
    beta_ok: bool
    interface_limit: float
    interface_ok: bool
    beta_c0_ok: bool

    def to_dict(self) -> dict:
        return {
            'layer': self.index,
            'w_at_top': [self.w_at_top.real, self.w_at_top.imag],
            'w_top_abs': abs(self.w_at_top),
            'w_max': self.w_max,
            'kappa_actual': self.kappa_actual,
            'kappa_bound': self.kappa_bound,
            'passed': self.passed,
            'beta_bound': self.beta_bound,
            'beta_ok': self.beta_ok,
            'interface_limit': self.interface_limit,
            'interface_ok': self.interface_ok,
            'beta_c0_ok': self.beta_c0_ok,
        }


@dataclass(frozen=True)
class BoundCheckReport:
    status: str
    delta: float
    omega: ComplexFrequency
    per_layer: Tuple[LayerBound, ...]
    lemma31_min_margin: float
    lemma2_arg_ok: bool
    condition: Optional[ConditionReport] = field(default=None, compare=False)

    @property
    def applicable(self) -> bool:
        return self.status != STATUS_NOT_APPLICABLE

    def to_dict(self) -> dict:
        return {
            'status': self.status,
            'delta': self.delta,
            'omega1_rad_s': self.omega.omega1,
            'omega2_rad_s': self.omega.omega2,
            'lemma31_min_margin': self.lemma31_min_margin,
            'lemma2_arg_ok': self.lemma2_arg_ok,
            'per_layer': [item.to_dict() for item in self.per_layer],
            'conditions': self.condition.to_dict() if self.condition is not None else None,
        }


@dataclass(frozen=True)
class SweepResult:
    """Outcome of a randomized witness; first_failure holds the tuple to replay."""
    name: str
    n: int
    seed: int
    violations: int
    first_failure: Optional[dict] = None
    rows: List[dict] = field(default_factory=list, compare=False)

    @property
    def ok(self) -> bool:
        return self.violations == 0


def sweep_q(profile: MediumProfile, omega: ComplexFrequency,
            nz: Optional[int] = None) -> ImpedanceSweep:
    nz = int(nz or settings.GPR_NZ_PER_LAYER)
    z, q = impedance_profile(profile, omega, nz)
    slices = tuple(slice(j * nz, (j + 1) * nz + 1) for j in range(profile.n_layers))
    return ImpedanceSweep(z=z, q=q, slices=slices, omega=omega)


def _layer_wavenumber(layer: Layer, mu: float, omega: ComplexFrequency, z):
    return wavenumber(k_squared(layer.eps_at(z), layer.sigma_at(z), mu, omega.value))


def compute_w(sweep: ImpedanceSweep, profile: MediumProfile,
              omega: ComplexFrequency) -> Tuple[LayerW, ...]:
    """
    u_j and w_j on each layer's own grid. k_j comes from the layer's own
    coefficients, so the end points carry the one-sided limits while q is
    shared across the interface.
    """
    result = []
    for j, layer in enumerate(profile.layers):
        z, q = sweep.layer(j)
        k = _layer_wavenumber(layer, profile.mu, omega, z)
        u = -1j * q / k
        near_pole = np.abs(u + 1.0) <= _POLE_TOLERANCE * (np.abs(u) + 1.0)
        if np.any(near_pole):
            at = float(z[np.argmax(near_pole)])
            raise PoleCrossingError(f"u = -1 in layer {j} at z = {at} m", omega=omega.value, z=at)
        result.append(LayerW(index=j, z=z, u=u, w=(u - 1.0) / (u + 1.0)))
    return tuple(result)


def check_lemma2(eps, sigma, mu, omega, C: float = 0.0):
    """
    Argument ranges of k^2 and k and the lower bound on Im k. Vectorized over
    eps, sigma and mu; omega is a ComplexFrequency or an array of complex
    frequencies matching them. C enters only through the caller's Condition-A
    check.
    """
    w = omega.value if isinstance(omega, ComplexFrequency) else np.asarray(omega, dtype=complex)
    k2 = k_squared(eps, sigma, mu, w)
    k = wavenumber(k2)
    arg_k2 = np.angle(k2)
    arg_k = np.angle(k)
    args_ok = ((arg_k2 >= -0.75 * math.pi - ANGLE_SLACK) & (arg_k2 <= -0.25 * math.pi + ANGLE_SLACK)
               & (arg_k >= 0.625 * math.pi - ANGLE_SLACK) & (arg_k <= 0.875 * math.pi + ANGLE_SLACK))

    w1, w2 = np.real(w), np.imag(w)
    lower = np.sqrt((-2.0 * np.asarray(mu) * np.asarray(eps) * w1 * w2 / CONSTANTS.c ** 2
                     + np.asarray(mu) * CONSTANTS.mu0 * np.asarray(sigma) * w1) / (2.0 * (SQRT2 + 1.0)))
    im_ok = k.imag >= lower * (1.0 - ANGLE_SLACK)
    ok = args_ok & im_ok
    if ok.ndim == 0:
        return bool(ok)
    return ok


def gamma_profile(profile: MediumProfile, omega: ComplexFrequency, betas, n_grid: int = 64):
    """4 Im k_m - beta_m |k_m'/k_m| on a grid of each layer."""
    mu = profile.mu
    w = omega.value
    result = []
    for layer, beta in zip(profile.layers, betas):
        z = layer.grid(n_grid)
        k2 = k_squared(layer.eps_at(z), layer.sigma_at(z), mu, w)
        dk2 = mu * (layer.eps_slope * w ** 2 / CONSTANTS.c ** 2
                    - 1j * CONSTANTS.mu0 * layer.sigma_slope * w)
        k = wavenumber(k2)
        result.append(4.0 * k.imag - beta * np.abs(dk2 / (2.0 * k2)))
    return result


def _bound_check(profile: MediumProfile, omega: ComplexFrequency, delta: float,
                 sweep: ImpedanceSweep, condition: ConditionReport) -> BoundCheckReport:
    bound = kappa_bound(delta)
    c0 = c0_constant()
    per_layer = []
    for item, constants in zip(compute_w(sweep, profile, omega), condition.per_layer):
        w_top = complex(item.w[0])
        kappa = abs(2.0 * w_top / (1.0 + w_top))
        beta = float(np.max(np.abs(item.w)))
        if constants.C_j > 0 and math.isfinite(constants.lambda_j):
            beta_bound = 1.0 + constants.lambda_j / constants.C_j
        else:
            beta_bound = math.inf
        interface = float(abs(item.w[-1]))
        per_layer.append(LayerBound(
            index=item.index,
            w_at_top=w_top,
            w_max=beta,
            kappa_actual=kappa,
            kappa_bound=bound,
            passed=abs(w_top) <= delta and kappa <= bound,
            beta_bound=beta_bound,
            beta_ok=beta <= beta_bound + BOUND_SLACK,
            interface_limit=interface,
            interface_ok=interface <= 1.0 + BOUND_SLACK,
            beta_c0_ok=beta <= c0,
        ))

    lemma2_ok = True
    for layer in profile.layers:
        z = layer.grid(settings.GPR_CONDITION_GRID)
        lemma2_ok &= bool(np.all(check_lemma2(layer.eps_at(z), layer.sigma_at(z), profile.mu,
                                              omega, condition.C)))

    margin = float(np.min(-sweep.q.imag))
    if logger.isEnabledFor(logging.DEBUG):
        gammas = gamma_profile(profile, omega, [item.w_max for item in per_layer])
        for j, gamma in enumerate(gammas):
            logger.debug(f"gamma in layer {j}: min {gamma.min():.4g}, max {gamma.max():.4g}")

    if not condition.holds:
        status = STATUS_NOT_APPLICABLE
    elif all(item.passed and item.beta_ok and item.interface_ok for item in per_layer):
        status = STATUS_PASSED
    else:
        status = STATUS_VIOLATED
        logger.warning(f"Bound violated at omega={omega.value} with delta={delta}")

    return BoundCheckReport(
        status=status,
        delta=delta,
        omega=omega,
        per_layer=tuple(per_layer),
        lemma31_min_margin=margin,
        lemma2_arg_ok=lemma2_ok,
        condition=condition,
    )


def check_theorem1(profile: MediumProfile, omega: ComplexFrequency, delta: float,
                   nz: Optional[int] = None) -> BoundCheckReport:
    """
    Actual |w_j| at layer tops, beta_j and kappa_j against delta, 1 + lambda_j/C_j
    and 2*delta/(1 - delta). Profiles outside Conditions A and B are reported
    as not-applicable with the same numbers filled in.
    """
    condition = check_condition_b(profile, omega, delta)
    return _bound_check(profile, omega, delta, sweep_q(profile, omega, nz), condition)


def lemma2_sweep(n: int, seed: Optional[int] = None) -> SweepResult:
    """Random (eps, sigma, mu, omega, C) tuples inside Condition A."""
    seed = settings.GPR_SEED if seed is None else seed
    rng = np.random.default_rng(seed)
    omega1 = 10.0 ** rng.uniform(6.0, 10.0, n)
    C = rng.uniform(0.0, 5.0, n)
    phis = 2.0 / (np.sqrt(2.0 + C * C) + C)
    ratio = rng.uniform(-(1.0 + phis), 1.0 - SQRT2)
    eps = rng.uniform(1.0, 80.0, n)
    mu = rng.uniform(1.0, 5.0, n)
    sigma = rng.uniform(0.0, 1.0, n) * 2.0 * C * omega1 * CONSTANTS.eps0 * eps

    ok = check_lemma2(eps, sigma, mu, omega1 * (1.0 + 1j * ratio), C)

    failures = np.flatnonzero(~ok)
    first = None
    if failures.size:
        i = int(failures[0])
        first = {'eps': eps[i], 'sigma': sigma[i], 'mu': mu[i], 'omega1': omega1[i],
                 'omega2': ratio[i] * omega1[i], 'C': C[i]}
        logger.warning(f"Wavenumber argument bound failed for {first}")
    return SweepResult(name='lemma2', n=n, seed=seed, violations=int(failures.size), first_failure=first)


def round_trip_sweep(n: int, seed: Optional[int] = None, tolerance: float = 1e-12,
                     plain_relative: bool = False) -> SweepResult:
    """
    recover_eps_sigma(k^2(eps, sigma, mu, omega)) against the inputs.

    Over the full draw range (loss tangent in [0, 10], omega2/omega1 in
    [-1, -1e-3]) sigma is recovered from a difference of terms of size
    eps0*eps*|omega|/|omega2/omega1|, so its error is measured on that scale.
    With plain_relative the draws keep loss tangent and |omega2/omega1| at
    0.1 or more, where sigma itself meets the tolerance.
    """
    seed = settings.GPR_SEED if seed is None else seed
    rng = np.random.default_rng(seed)
    low = 0.1 if plain_relative else 0.0
    eps = rng.uniform(1.0, 80.0, n)
    loss_tangent = rng.uniform(low, 10.0, n)
    mu = rng.uniform(1.0, 5.0, n)
    omega1 = 10.0 ** rng.uniform(6.0, 10.0, n)
    ratio = rng.uniform(-1.0, -max(low, 1e-3), n)
    sigma = loss_tangent * CONSTANTS.eps0 * eps * omega1

    violations, first = 0, None
    for i in range(n):
        omega = ComplexFrequency.from_ratio(omega1[i], ratio[i])
        k2 = k_squared(eps[i], sigma[i], mu[i], omega.value)
        eps_hat, sigma_hat = recover_eps_sigma(k2, omega, mu[i])
        if plain_relative:
            scale = sigma[i]
        else:
            scale = sigma[i] + CONSTANTS.eps0 * eps[i] * omega.modulus / abs(ratio[i])
        if abs(eps_hat - eps[i]) > tolerance * eps[i] or abs(sigma_hat - sigma[i]) > tolerance * scale:
            violations += 1
            if first is None:
                first = {'eps': eps[i], 'sigma': sigma[i], 'mu': mu[i], 'omega1': omega1[i],
                         'omega2': omega.omega2, 'eps_hat': eps_hat, 'sigma_hat': sigma_hat}
                logger.warning(f"Recovery round trip failed for {first}")
    name = 'round-trip-relative' if plain_relative else 'round-trip'
    return SweepResult(name=name, n=n, seed=seed, violations=violations, first_failure=first)


def random_profile(rng: np.random.Generator, max_layers: int = 4,
                   sigma_levels=(0.0, 1e-8, 1e-4)) -> MediumProfile:
    """1..max_layers layers, 2-6 m thick, eps in [1, 16] with gentle slopes."""
    n_layers = int(rng.integers(1, max_layers + 1))
    sigma = float(rng.choice(sigma_levels))
    layers, z = [], 0.0
    for _ in range(n_layers):
        d = float(rng.uniform(2.0, 6.0))
        eps_top = float(rng.uniform(1.2, 15.8))
        slope = float(rng.uniform(-0.02, 0.02))
        layers.append(Layer(z_top=z, z_bottom=z + d, eps_top=eps_top, eps_slope=slope,
                            sigma_top=sigma))
        z += d
    return MediumProfile(layers=tuple(layers), eps_substrate=float(rng.uniform(1.0, 16.0)))


def theorem1_sweep(n_profiles: int, seed: Optional[int] = None, deltas=SWEEP_DELTAS,
                   omega: Optional[ComplexFrequency] = None, nz: Optional[int] = None,
                   threads: Optional[int] = None) -> SweepResult:
    """
    check_theorem1 over random profiles and every delta for which Condition B
    holds; one row per (profile, delta, layer).
    """
    seed = settings.GPR_SEED if seed is None else seed
    if omega is None:
        omega1 = 2.0 * math.pi * settings.GPR_CENTRAL_FREQUENCY
        omega = ComplexFrequency.from_ratio(omega1, settings.GPR_OMEGA2_RATIO)
    for delta in deltas:
        if not 0 < delta <= DELTA_MAX + 1e-15:
            raise PreconditionError(f"delta must lie in (0, sqrt(2) - 1], got {delta}")
    rng = np.random.default_rng(seed)
    profiles = [random_profile(rng) for _ in range(n_profiles)]

    def run(profile):
        sweep = sweep_q(profile, omega, nz)
        reports = []
        for delta in deltas:
            condition = check_condition_b(profile, omega, delta)
            if condition.holds:
                reports.append(_bound_check(profile, omega, delta, sweep, condition))
        return reports

    threads = max(1, int(threads or settings.GPR_THREADS))
    with ThreadPoolExecutor(max_workers=threads) as pool:
        outcomes = list(pool.map(run, profiles))

    rows, violations, applicable, first = [], 0, 0, None
    for profile, reports in zip(profiles, outcomes):
        for report in reports:
            applicable += 1
            if report.status == STATUS_VIOLATED:
                violations += 1
                if first is None:
                    first = {'profile': profile.to_dict(), 'delta': report.delta}
                    logger.warning(f"Layer-top bound failed for {first}")
            for item in report.per_layer:
                rows.append({
                    'n_layers': profile.n_layers,
                    'delta': report.delta,
                    'layer': item.index,
                    'w_top_abs': abs(item.w_at_top),
                    'beta': item.w_max,
                    'kappa_actual': item.kappa_actual,
                    'kappa_bound': item.kappa_bound,
                    'passed': item.passed,
                })
    logger.info(f"Bound sweep: {applicable} applicable checks over {n_profiles} profiles, "
                f"{violations} violations")
    return SweepResult(name='theorem1', n=applicable, seed=seed, violations=violations,
                       first_failure=first, rows=rows)
