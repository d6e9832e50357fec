"""
Value types of the layered medium: physical constants, layers, profiles and
complex probing frequencies.
"""

import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .exceptions import PreconditionError, ProfileFormatError

# Slack for the eps >= 1 / sigma >= 0 checks at layer endpoints
_LAW_TOLERANCE = 1e-12


@dataclass(frozen=True)
class PhysicalConstants:
    """Vacuum constants; the light speed is derived, never set on its own."""
    eps0: float = 8.854e-12
    mu0: float = 1.257e-6

    @property
    def c(self) -> float:
        return 1.0 / math.sqrt(self.eps0 * self.mu0)


CONSTANTS = PhysicalConstants()


@dataclass(frozen=True)
class Layer:
    """
    One layer on the semi-closed interval [z_top, z_bottom).
    Permittivity and conductivity vary linearly with depth inside the layer.
    """
    z_top: float
    z_bottom: float
    eps_top: float
    eps_slope: float = 0.0
    sigma_top: float = 0.0
    sigma_slope: float = 0.0

    def __post_init__(self):
        if not self.z_bottom > self.z_top:
            raise ProfileFormatError(
                f"Layer bottom {self.z_bottom} must lie below its top {self.z_top}"
            )
        eps_ends = (self.eps_top, self.eps_at(self.z_bottom))
        sigma_ends = (self.sigma_top, self.sigma_at(self.z_bottom))
        if min(eps_ends) < 1.0 - _LAW_TOLERANCE:
            raise ProfileFormatError(
                f"Relative permittivity drops below 1 in layer [{self.z_top}, {self.z_bottom})"
            )
        if min(sigma_ends) < -_LAW_TOLERANCE:
            raise ProfileFormatError(
                f"Conductivity turns negative in layer [{self.z_top}, {self.z_bottom})"
            )

    @property
    def thickness(self) -> float:
        return self.z_bottom - self.z_top

    @property
    def eps_bottom(self) -> float:
        """One-sided limit of the permittivity at the layer bottom."""
        return self.eps_at(self.z_bottom)

    @property
    def sigma_bottom(self) -> float:
        return self.sigma_at(self.z_bottom)

    @property
    def is_constant(self) -> bool:
        return self.eps_slope == 0.0 and self.sigma_slope == 0.0

    def eps_at(self, z):
        return self.eps_top + self.eps_slope * (np.asarray(z, dtype=float) - self.z_top)

    def sigma_at(self, z):
        return self.sigma_top + self.sigma_slope * (np.asarray(z, dtype=float) - self.z_top)

    def grid(self, n: int) -> np.ndarray:
        """n equally spaced depths covering the closed layer, both ends included."""
        return np.linspace(self.z_top, self.z_bottom, max(int(n), 2))


@dataclass(frozen=True)
class MediumProfile:
    """
    Ordered contiguous layers over [0, L] on top of a lossless half-space
    with relative permittivity eps_substrate.
    """
    layers: Tuple[Layer, ...]
    eps_substrate: float
    mu: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, 'layers', tuple(self.layers))
        if self.mu <= 0:
            raise ProfileFormatError(f"Relative permeability must be positive, got {self.mu}")
        if self.eps_substrate < 1.0:
            raise ProfileFormatError(
                f"Substrate permittivity must be at least 1, got {self.eps_substrate}"
            )
        if self.layers and self.layers[0].z_top != 0.0:
            raise ProfileFormatError("The first layer must start at z = 0")
        for upper, lower in zip(self.layers, self.layers[1:]):
            if upper.z_bottom != lower.z_top:
                raise ProfileFormatError(
                    f"Layers are not contiguous at z = {upper.z_bottom} / {lower.z_top}"
                )

    @property
    def L(self) -> float:
        return self.layers[-1].z_bottom if self.layers else 0.0

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    @property
    def interfaces(self) -> List[float]:
        """Depths z_0 = 0 < z_1 < ... < z_N = L."""
        if not self.layers:
            return [0.0]
        return [self.layers[0].z_top] + [layer.z_bottom for layer in self.layers]

    @classmethod
    def piecewise_constant(cls, eps, thicknesses, eps_substrate,
                           sigma: Optional[list] = None, mu: float = 1.0):
        """Build a profile of constant layers from per-layer values."""
        sigma = sigma if sigma is not None else [0.0] * len(eps)
        if not len(eps) == len(thicknesses) == len(sigma):
            raise ProfileFormatError("eps, sigma and thicknesses must have the same length")
        layers = []
        z = 0.0
        for eps_j, sigma_j, d in zip(eps, sigma, thicknesses):
            layers.append(Layer(z_top=z, z_bottom=z + d, eps_top=eps_j, sigma_top=sigma_j))
            z += d
        return cls(layers=tuple(layers), eps_substrate=eps_substrate, mu=mu)

    @classmethod
    def half_space(cls, eps: float, depth: float = 1.0, mu: float = 1.0):
        """A single layer identical to its substrate: no interface below the surface."""
        return cls.piecewise_constant([eps], [depth], eps, mu=mu)

    @classmethod
    def from_dict(cls, data: dict):
        """Parse the profile JSON layout; depths are cumulative thicknesses from z = 0."""
        layers = []
        z = 0.0
        for item in data['layers']:
            d = float(item['thickness_m'])
            layers.append(Layer(
                z_top=z,
                z_bottom=z + d,
                eps_top=float(item['eps_top']),
                eps_slope=float(item.get('eps_slope_per_m', 0.0)),
                sigma_top=float(item.get('sigma_top_S_per_m', 0.0)),
                sigma_slope=float(item.get('sigma_slope_per_m', 0.0)),
            ))
            z += d
        return cls(layers=tuple(layers), eps_substrate=float(data['eps_substrate']),
                   mu=float(data.get('mu', 1.0)))

    def to_dict(self) -> dict:
        return {
            'mu': self.mu,
            'eps_substrate': self.eps_substrate,
            'layers': [
                {
                    'thickness_m': layer.thickness,
                    'eps_top': layer.eps_top,
                    'eps_slope_per_m': layer.eps_slope,
                    'sigma_top_S_per_m': layer.sigma_top,
                    'sigma_slope_per_m': layer.sigma_slope,
                }
                for layer in self.layers
            ],
        }


@dataclass(frozen=True)
class ComplexFrequency:
    """omega = omega1 + i*omega2 in the closed lower half-plane (omega1 > 0)."""
    omega1: float
    omega2: float = 0.0

    def __post_init__(self):
        if not self.omega1 > 0:
            raise PreconditionError(f"omega1 must be positive, got {self.omega1}")
        if self.omega2 > 0:
            raise PreconditionError(f"omega2 must not be positive, got {self.omega2}")

    @property
    def value(self) -> complex:
        return complex(self.omega1, self.omega2)

    @property
    def modulus(self) -> float:
        return math.hypot(self.omega1, self.omega2)

    @property
    def ratio(self) -> float:
        return self.omega2 / self.omega1

    @classmethod
    def from_ratio(cls, omega1: float, ratio: float):
        return cls(omega1=omega1, omega2=ratio * omega1)


@dataclass(frozen=True)
class LayerCondition:
    """Condition-B constants of one layer."""
    lambda_j: float
    C_j: float
    delta_contribution: float
    satisfied: bool


@dataclass(frozen=True)
class ConditionAReport:
    holds: bool
    C: float
    sigma_ok: bool
    omega_ok: bool
    worst_z: float
    sigma_margin: float
    omega2_interval: Tuple[float, float]


@dataclass(frozen=True)
class ConditionReport:
    condition_a_holds: bool
    C: float
    per_layer: Tuple[LayerCondition, ...]
    delta: float
    kappa_bound: float
    condition_a: Optional[ConditionAReport] = field(default=None, compare=False)

    @property
    def holds(self) -> bool:
        return self.condition_a_holds and all(item.satisfied for item in self.per_layer)

    def to_dict(self) -> dict:
        return {
            'condition_a_holds': self.condition_a_holds,
            'C': self.C,
            'delta': self.delta,
            'kappa_bound': self.kappa_bound,
            'holds': self.holds,
            'per_layer': [
                {
                    'lambda_j': item.lambda_j,
                    'C_j': item.C_j,
                    'delta_contribution': item.delta_contribution,
                    'satisfied': item.satisfied,
                }
                for item in self.per_layer
            ],
        }
