# -*- coding: utf-8 -*-

DESCRIPTION = """dipole-dipole interaction in Fourier space: multiplier, interaction bounds, B(u), E1/E2 split"""

import sys, os, time
from dataclasses import dataclass, asdict
from enum import Enum
from typing import List, NamedTuple, Optional, Tuple

import logging

root_logger = logging.getLogger()
logger = root_logger.getChild(__name__)

import numpy as np

from spectral_grid import (
    Grid3D,
    WaveField,
    fft3,
    ifft3,
    spectral_integral,
    gradient_norm_sq,
    norm_lp,
)


FOUR_PI_THIRDS = 4 * np.pi / 3
EIGHT_PI_THIRDS = 8 * np.pi / 3


class ParameterError(ValueError):
    """Invalid model coefficients. `issues` is a list of (code, message) pairs."""

    def __init__(self, issues: List[Tuple[str, str]]):
        self.issues = list(issues)
        super().__init__("; ".join(f"{code}: {msg}" for code, msg in self.issues))

    @property
    def codes(self) -> List[str]:
        return [code for code, _ in self.issues]


class RegimeLabel(str, Enum):
    A1 = "A1"  # lambda2 >= 0, lambda1 - 4pi/3 lambda2 >= 0
    A2 = "A2"  # lambda2 < 0, lambda1 + 8pi/3 lambda2 >= 0
    A3 = "A3"  # lambda2 >= 0, lambda1 - 4pi/3 lambda2 < 0
    A4 = "A4"  # lambda2 < 0, lambda1 + 8pi/3 lambda2 < 0

    @property
    def b_can_be_negative(self) -> bool:
        return self in (RegimeLabel.A3, RegimeLabel.A4)


@dataclass(frozen=True)
class HarmonicTrap:
    """V(x) = ratio1 x1^2 + ratio2 x2^2 + x3^2, ratios are omega_i^2 / omega_3^2"""

    ratio1: float = 1.0
    ratio2: float = 1.0

    def potential(self, grid: Grid3D) -> np.ndarray:
        x1, x2, x3 = grid.meshes
        return np.broadcast_to(self.ratio1 * x1**2 + self.ratio2 * x2**2 + x3**2, grid.n)


def param_issues(lambda1, lambda2, lambda3, p, trap=None) -> List[Tuple[str, str]]:
    """Every violated coefficient constraint, not just the first"""
    issues = []
    if not lambda3 > 0:
        issues.append(("lambda3_nonpositive", f"lambda3 must be > 0, got {lambda3}"))
    if not (4 < p <= 6):
        issues.append(("p_out_of_range", f"p out of (4,6], got {p}"))
    if lambda1 == 0 and lambda2 == 0:
        issues.append(("nondegeneracy", "lambda1 and lambda2 must not vanish simultaneously"))
    if trap is not None and not (trap.ratio1 > 0 and trap.ratio2 > 0):
        issues.append(("trap_invalid", f"trap frequency ratios must be > 0, got {trap}"))
    return issues


@dataclass(frozen=True)
class ModelParams:
    lambda1: float
    lambda2: float
    lambda3: float
    p: float
    trap: Optional[HarmonicTrap] = None

    def __post_init__(self):
        issues = param_issues(self.lambda1, self.lambda2, self.lambda3, self.p, self.trap)
        if issues:
            raise ParameterError(issues)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParams":
        trap = d.get("trap")
        if trap is not None and not isinstance(trap, HarmonicTrap):
            trap = HarmonicTrap(**trap)
        return cls(
            lambda1=float(d["lambda1"]),
            lambda2=float(d["lambda2"]),
            lambda3=float(d["lambda3"]),
            p=float(d["p"]),
            trap=trap,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    def with_trap(self, trap: Optional[HarmonicTrap]) -> "ModelParams":
        return ModelParams(self.lambda1, self.lambda2, self.lambda3, self.p, trap)

    @property
    def regime(self) -> RegimeLabel:
        return classify_regime(self)

    @property
    def xi(self) -> float:
        return xi_bound(self)


def khat(xi) -> np.ndarray:
    """K^(xi) = (4pi/3)(2 xi3^2 - xi1^2 - xi2^2)/|xi|^2, with K^(0) = 0.

    `xi` has a trailing axis of length 3. Returns a float for a single vector.
    """
    xi = np.asarray(xi, dtype=float)
    if xi.shape[-1] != 3:
        raise ValueError(f"wavevectors need a trailing axis of length 3, got shape {xi.shape}")
    num = 2 * xi[..., 2] ** 2 - xi[..., 0] ** 2 - xi[..., 1] ** 2
    den = np.sum(xi**2, axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(den > 0, FOUR_PI_THIRDS * num / np.where(den > 0, den, 1.0), 0.0)
    if out.ndim == 0:
        return float(out)
    return out


def khat_table(grid: Grid3D) -> np.ndarray:
    k1, k2, k3 = grid.kmeshes
    k2sum = grid.k_squared
    safe = np.where(k2sum > 0, k2sum, 1.0)
    return np.where(k2sum > 0, FOUR_PI_THIRDS * (2 * k3**2 - k1**2 - k2**2) / safe, 0.0)


def axial_weight_table(grid: Grid3D) -> np.ndarray:
    """xi3^2/|xi|^2, with its spherical mean 1/3 at the origin"""
    k3 = grid.kmeshes[2]
    k2sum = grid.k_squared
    safe = np.where(k2sum > 0, k2sum, 1.0)
    return np.where(k2sum > 0, np.broadcast_to(k3**2, grid.n) / safe, 1.0 / 3.0)


def interaction_symbol(grid: Grid3D, params: ModelParams) -> np.ndarray:
    return params.lambda1 + params.lambda2 * khat_table(grid)


def multiplier_bound(params: ModelParams) -> float:
    """sup over xi of |lambda1 + lambda2 K^(xi)|, the sharp constant in |B(u)| <= const * ||u||_4^4"""
    return max(
        abs(params.lambda1 - FOUR_PI_THIRDS * params.lambda2),
        abs(params.lambda1 + EIGHT_PI_THIRDS * params.lambda2),
    )


def xi_bound(params: ModelParams) -> float:
    """(2pi)^-3 max{|lambda1 - 4pi/3 lambda2|, |lambda1 + 8pi/3 lambda2|}"""
    if params.lambda1 == 0 and params.lambda2 == 0:
        raise ParameterError([("nondegeneracy", "lambda1 and lambda2 must not vanish simultaneously")])
    return multiplier_bound(params) / (2 * np.pi) ** 3


def density_transform(u: WaveField) -> np.ndarray:
    return fft3(np.abs(u.values) ** 2, u.grid)


def b_functional(u: WaveField, params: ModelParams) -> float:
    """B(u) = (2pi)^-3 integral (lambda1 + lambda2 K^) |F(|u|^2)|^2"""
    rho_hat = density_transform(u)
    return spectral_integral(interaction_symbol(u.grid, params) * np.abs(rho_hat) ** 2, u.grid)


def convolution_term(u: WaveField) -> WaveField:
    """K * |u|^2 as a real field"""
    rho_hat = density_transform(u)
    conv = ifft3(khat_table(u.grid) * rho_hat, u.grid)
    return WaveField(u.grid, np.real(conv))


def interaction_potential(u: WaveField, params: ModelParams) -> np.ndarray:
    """lambda1 |u|^2 + lambda2 K*|u|^2 with a single transform pair"""
    rho_hat = density_transform(u)
    return np.real(ifft3(interaction_symbol(u.grid, params) * rho_hat, u.grid))


class EnergySplit(NamedTuple):
    E1: float
    E2: float


def energy_split(u: WaveField, params: ModelParams, strict_printed: bool = False) -> EnergySplit:
    """E = E1 + E2 with K^ = -4pi/3 + 4pi xi3^2/|xi|^2.

    E1 holds the local terms, E2 = 2pi lambda2 (2pi)^-3 integral xi3^2/|xi|^2 |F(|u|^2)|^2.
    strict_printed drops lambda3 from the L^p term of E1, which breaks the identity.
    """
    grid = u.grid
    rho_hat = density_transform(u)
    l4 = spectral_integral(np.abs(rho_hat) ** 2, grid)
    lp = norm_lp(u, params.p) ** params.p
    c3 = 1.0 if strict_printed else params.lambda3
    E1 = (
        0.5 * gradient_norm_sq(u)
        + 0.5 * (params.lambda1 - FOUR_PI_THIRDS * params.lambda2) * l4
        + (2.0 / params.p) * c3 * lp
    )
    if params.trap is not None:
        E1 += grid.cell_volume * float(np.sum(params.trap.potential(grid) * np.abs(u.values) ** 2))
    E2 = 2 * np.pi * params.lambda2 * spectral_integral(axial_weight_table(grid) * np.abs(rho_hat) ** 2, grid)
    return EnergySplit(float(E1), float(E2))


def classify_regime(params: ModelParams) -> RegimeLabel:
    if params.lambda1 == 0 and params.lambda2 == 0:
        raise ParameterError([("nondegeneracy", "lambda1 and lambda2 must not vanish simultaneously")])
    if params.lambda2 >= 0:
        if params.lambda1 - FOUR_PI_THIRDS * params.lambda2 >= 0:
            return RegimeLabel.A1
        return RegimeLabel.A3
    if params.lambda1 + EIGHT_PI_THIRDS * params.lambda2 >= 0:
        return RegimeLabel.A2
    return RegimeLabel.A4
