"""
Medium service layer: wavenumbers, the analytic constants of the method,
Conditions A and B, profile sampling and profile files.
"""

import bisect
import json
import logging
import math
from pathlib import Path
from typing import Optional, Tuple

import numpy as np
from django.conf import settings

from .exceptions import DegenerateInputError, DomainError, PreconditionError, ProfileFormatError
from .profile import (
    CONSTANTS,
    ComplexFrequency,
    ConditionAReport,
    ConditionReport,
    Layer,
    LayerCondition,
    MediumProfile,
)

logger = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)
DELTA_MAX = SQRT2 - 1.0


def k_squared(eps, sigma, mu, omega):
    """
    mu*eps*omega^2/c^2 - i*mu0*mu*sigma*omega for scalar or array arguments
    (omega may be a complex array).
    """
    c = CONSTANTS.c
    omega = np.asarray(omega, dtype=complex)
    return mu * np.asarray(eps) * omega ** 2 / c ** 2 - 1j * CONSTANTS.mu0 * mu * np.asarray(sigma) * omega


def wavenumber_squared(eps: float, sigma: float, mu: float, omega: ComplexFrequency) -> complex:
    """Squared vertical wavenumber at k_x = 0."""
    return complex(k_squared(eps, sigma, mu, omega.value))


def wavenumber(k2):
    """
    Vectorized branch choice: the negative root for real positive k^2,
    otherwise the root with positive imaginary part.
    """
    k2 = np.asarray(k2, dtype=complex)
    if np.any(k2 == 0):
        raise DegenerateInputError("Zero wavenumber: k^2 vanishes")
    k = np.sqrt(k2)
    flip = (k.imag < 0) | ((k.imag == 0) & (k.real > 0))
    return np.where(flip, -k, k)


def branch_root(k_squared_value: complex) -> complex:
    return complex(wavenumber(k_squared_value))


def phi(C: float) -> float:
    if C < 0:
        raise PreconditionError(f"C must be non-negative, got {C}")
    # sqrt(2 + C^2) - C rewritten without cancellation for large C
    return 2.0 / (math.sqrt(2.0 + C * C) + C)


def c0_constant() -> float:
    """tan(3pi/8) + sec(3pi/8) = 1 + sqrt(2) + sqrt(4 + 2*sqrt(2))."""
    return 1.0 + SQRT2 + math.sqrt(4.0 + 2.0 * SQRT2)


def kappa_bound(delta: float) -> float:
    if not 0 < delta < 1:
        raise PreconditionError(f"delta must lie in (0, 1), got {delta}")
    return 2.0 * delta / (1.0 - delta)


def omega2_interval(C: float) -> Tuple[float, float]:
    """Admissible omega2/omega1 ratios under Condition A for the constant C."""
    return -(1.0 + phi(C)), 1.0 - SQRT2


def sample_profile(profile: MediumProfile, z: float):
    """
    Pointwise (eps, sigma, layer_index) with right-continuity at interfaces.
    Layer indices are 0-based; the substrate has index N.
    """
    if z < 0 or not math.isfinite(z):
        raise DomainError(f"Depth {z} m lies outside the medium")
    if z >= profile.L:
        return profile.eps_substrate, 0.0, profile.n_layers
    tops = [layer.z_top for layer in profile.layers]
    j = bisect.bisect_right(tops, z) - 1
    layer = profile.layers[j]
    return float(layer.eps_at(z)), float(layer.sigma_at(z)), j


def _layer_grid(layer: Layer, n_grid: int):
    z = layer.grid(n_grid)
    return z, layer.eps_at(z), layer.sigma_at(z)


def check_condition_a(profile: MediumProfile, omega: ComplexFrequency,
                      C: Optional[float] = None, n_grid: Optional[int] = None) -> ConditionAReport:
    """
    Condition A: sigma/eps <= 2*C*omega1/(mu0*c^2) on [0, L] and
    -(1 + phi(C))*omega1 <= omega2 <= (1 - sqrt(2))*omega1.
    Without C the smallest admissible constant is used, which also gives the
    widest omega2 interval.
    """
    n_grid = n_grid or settings.GPR_CONDITION_GRID
    if C is not None and C <= 0:
        raise PreconditionError(f"Condition A constant must be positive, got {C}")

    worst_ratio, worst_z = 0.0, profile.L
    for layer in profile.layers:
        z, eps, sigma = _layer_grid(layer, n_grid)
        ratio = sigma / eps
        i = int(np.argmax(ratio))
        if ratio[i] > worst_ratio:
            worst_ratio, worst_z = float(ratio[i]), float(z[i])

    unit = 2.0 * omega.omega1 / (CONSTANTS.mu0 * CONSTANTS.c ** 2)
    if C is None:
        C = worst_ratio / unit
    bound = C * unit
    sigma_ok = worst_ratio <= bound * (1.0 + 1e-12)

    lower, upper = omega2_interval(C)
    slack = 1e-12 * omega.omega1
    omega_ok = lower * omega.omega1 - slack <= omega.omega2 <= upper * omega.omega1 + slack

    report = ConditionAReport(
        holds=sigma_ok and omega_ok,
        C=C,
        sigma_ok=sigma_ok,
        omega_ok=omega_ok,
        worst_z=worst_z,
        sigma_margin=bound - worst_ratio,
        omega2_interval=(lower * omega.omega1, upper * omega.omega1),
    )
    logger.debug(f"Condition A: {report}")
    return report


def _layer_constants(layer: Layer, mu: float, omega: ComplexFrequency, delta: float,
                     n_grid: int) -> LayerCondition:
    w1, w2 = omega.omega1, omega.omega2
    mod2 = w1 * w1 + w2 * w2
    _, eps, sigma = _layer_grid(layer, n_grid)

    if layer.eps_slope == 0.0:
        lam_eps = 0.0
    elif w2 == 0.0:
        lam_eps = math.inf
    else:
        lam_eps = float(np.max(abs(layer.eps_slope) / eps)) * mod2 / (4.0 * abs(w1 * w2))

    # sigma identically zero (or constant) makes the log-derivative bound vacuous
    if layer.sigma_slope == 0.0:
        lam_sigma = 0.0
    elif np.min(sigma) <= 0.0:
        lam_sigma = math.inf
    else:
        lam_sigma = float(np.max(abs(layer.sigma_slope) / sigma)) * math.sqrt(mod2) / (2.0 * w1)

    lam = max(lam_eps, lam_sigma)
    if not math.isfinite(lam):
        return LayerCondition(lambda_j=lam, C_j=-math.inf, delta_contribution=math.inf,
                              satisfied=False)

    c = CONSTANTS.c
    decay = 4.0 / c * np.sqrt(mu * eps * w1 * abs(w2) / (SQRT2 + 1.0)) - c0_constant() * lam
    C_j = float(np.min(decay))
    if C_j <= 0.0:
        return LayerCondition(lambda_j=lam, C_j=C_j, delta_contribution=math.inf,
                              satisfied=False)

    ratio = lam / C_j
    value = math.exp(-C_j * layer.thickness) + ratio * (1.0 + ratio)
    return LayerCondition(
        lambda_j=lam,
        C_j=C_j,
        delta_contribution=math.sqrt(value),
        satisfied=value <= delta * delta,
    )


def check_condition_b(profile: MediumProfile, omega: ComplexFrequency, delta: float,
                      n_grid: Optional[int] = None) -> ConditionReport:
    """
    Condition B per layer: the minimal lambda_j admitted by the smoothness
    bounds, the maximal C_j, and the thickness inequality against delta^2.
    """
    if not 0 < delta <= DELTA_MAX + 1e-15:
        raise PreconditionError(f"delta must lie in (0, sqrt(2) - 1], got {delta}")
    n_grid = n_grid or settings.GPR_CONDITION_GRID

    condition_a = check_condition_a(profile, omega, n_grid=n_grid)
    per_layer = tuple(
        _layer_constants(layer, profile.mu, omega, delta, n_grid) for layer in profile.layers
    )
    for j, item in enumerate(per_layer):
        if not item.satisfied:
            logger.info(
                f"Condition B fails in layer {j}: lambda={item.lambda_j:.3g}, "
                f"C={item.C_j:.3g}, needs delta >= {item.delta_contribution:.3g}"
            )
    return ConditionReport(
        condition_a_holds=condition_a.holds,
        C=condition_a.C,
        per_layer=per_layer,
        delta=delta,
        kappa_bound=kappa_bound(delta),
        condition_a=condition_a,
    )


def load_profile(path) -> MediumProfile:
    """Read and validate a profile JSON file."""
    from .forms import ProfileForm

    text = Path(path).read_text(encoding='utf-8')
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ProfileFormatError(f"Invalid profile JSON in {path}: {e.msg}", e.lineno, e.colno)
    return ProfileForm.parse(data)


def dump_profile(profile: MediumProfile, path) -> None:
    Path(path).write_text(json.dumps(profile.to_dict(), indent=2), encoding='utf-8')


def reference_scenario(sigma: float = 1e-8, mu: float = 1.0) -> MediumProfile:
    """
    84 m deep, four piecewise-linear layers over a lossless substrate, at the
    conductivity level sigma (S/m).
    """
    thicknesses = [12.0, 20.0, 22.0, 30.0]
    eps_tops = [4.0, 9.0, 5.0, 12.0]
    eps_slopes = [0.02, -0.03, 0.02, 0.01]
    layers = []
    z = 0.0
    for d, eps_top, eps_slope in zip(thicknesses, eps_tops, eps_slopes):
        layers.append(Layer(z_top=z, z_bottom=z + d, eps_top=eps_top, eps_slope=eps_slope,
                            sigma_top=sigma))
        z += d
    return MediumProfile(layers=tuple(layers), eps_substrate=6.0, mu=mu)
