# -*- coding: utf-8 -*-

DESCRIPTION = """energy, virial, chemical potential and the three rescalings of a wave field"""

import sys, os, time
from dataclasses import dataclass, asdict
from typing import Optional, Sequence

import logging

root_logger = logging.getLogger()
logger = root_logger.getChild(__name__)

import numpy as np

from spectral_grid import WaveField, fft3, ifft3, spectral_integral, norm_lp, sample_axis
from dipolar_kernel import (
    ModelParams,
    FOUR_PI_THIRDS,
    interaction_symbol,
    axial_weight_table,
)


# fraction of mass (or spectral power) a rescaling may drop before we complain
RESCALE_LOSS_TOL = 1e-8


@dataclass(frozen=True)
class EnergyBreakdown:
    A: float
    B: float
    C: float
    Vterm: float
    E: float
    Q: float
    mass: float
    E1: float = 0.0
    E2: float = 0.0

    def to_dict(self) -> dict:
        return {
            "A": self.A,
            "B": self.B,
            "C": self.C,
            "V": self.Vterm,
            "E": self.E,
            "Q": self.Q,
            "mass": self.mass,
        }


@dataclass(frozen=True)
class ChemicalPotentialReport:
    beta_pohozaev: float
    beta_rayleigh: float
    residual_norm: float
    residual_relative: float

    @property
    def discrepancy(self) -> float:
        return abs(self.beta_pohozaev - self.beta_rayleigh) / max(1.0, abs(self.beta_rayleigh))

    def to_dict(self) -> dict:
        return asdict(self)


def total_energy(A: float, B: float, C: float, Vterm: float, p: float) -> float:
    return 0.5 * A + Vterm + 0.5 * B + (2.0 / p) * C


def virial_from_parts(A: float, B: float, C: float, Vterm: float, p: float) -> float:
    """d/dt E(u^t) at t = 1; the trap term scales like t^-2"""
    return A - 2 * Vterm + 1.5 * B + ((3 * p - 6) / p) * C


def trap_term(u: WaveField, params: ModelParams) -> float:
    if params.trap is None:
        return 0.0
    return u.grid.cell_volume * float(np.sum(params.trap.potential(u.grid) * np.abs(u.values) ** 2))


def energy(u: WaveField, params: ModelParams) -> EnergyBreakdown:
    grid = u.grid
    psi_hat = fft3(u.values, grid)
    density = np.abs(u.values) ** 2
    rho_hat = fft3(density, grid)
    rho_power = np.abs(rho_hat) ** 2

    A = spectral_integral(grid.k_squared * np.abs(psi_hat) ** 2, grid)
    B = spectral_integral(interaction_symbol(grid, params) * rho_power, grid)
    C = params.lambda3 * norm_lp(u, params.p) ** params.p
    Vterm = trap_term(u, params)
    m = grid.cell_volume * float(density.sum())
    E = total_energy(A, B, C, Vterm, params.p)
    Q = virial_from_parts(A, B, C, Vterm, params.p)

    l4 = spectral_integral(rho_power, grid)
    E1 = 0.5 * A + Vterm + 0.5 * (params.lambda1 - FOUR_PI_THIRDS * params.lambda2) * l4 + (2.0 / params.p) * C
    E2 = 2 * np.pi * params.lambda2 * spectral_integral(axial_weight_table(grid) * rho_power, grid)
    return EnergyBreakdown(A=A, B=B, C=C, Vterm=Vterm, E=E, Q=Q, mass=m, E1=E1, E2=E2)


def virial(u: WaveField, params: ModelParams) -> float:
    return energy(u, params).Q


def local_potential(u: WaveField, params: ModelParams) -> np.ndarray:
    """W = V + lambda1 |u|^2 + lambda2 K*|u|^2 + lambda3 |u|^(p-2), a real field depending on |u| only"""
    grid = u.grid
    absu = np.abs(u.values)
    rho_hat = fft3(absu**2, grid)
    W = np.real(ifft3(interaction_symbol(grid, params) * rho_hat, grid))
    W = W + params.lambda3 * absu ** (params.p - 2)
    if params.trap is not None:
        W = W + params.trap.potential(grid)
    return W


def hamiltonian_action(u: WaveField, params: ModelParams) -> np.ndarray:
    """-1/2 Lap u + V u + lambda1 |u|^2 u + lambda2 (K*|u|^2) u + lambda3 |u|^(p-2) u"""
    grid = u.grid
    kinetic = ifft3(0.5 * grid.k_squared * fft3(u.values, grid), grid)
    return kinetic + local_potential(u, params) * u.values


def chemical_potential(u: WaveField, params: ModelParams) -> ChemicalPotentialReport:
    parts = energy(u, params)
    if parts.mass <= 0:
        raise ValueError("chemical potential is undefined for the zero field")
    m = parts.mass
    beta_rayleigh = -(0.5 * parts.A + parts.Vterm + parts.B + parts.C) / m
    beta_pohozaev = (
        -2 * parts.Vterm - 0.25 * parts.B + ((params.p - 6) / (2 * params.p)) * parts.C
    ) / m
    residual = hamiltonian_action(u, params) + beta_rayleigh * u.values
    residual_norm = float(np.sqrt(u.grid.cell_volume * np.sum(np.abs(residual) ** 2)))
    scale = max(abs(beta_rayleigh), 1e-300) * np.sqrt(m)
    return ChemicalPotentialReport(
        beta_pohozaev=float(beta_pohozaev),
        beta_rayleigh=float(beta_rayleigh),
        residual_norm=residual_norm,
        residual_relative=residual_norm / scale,
    )


def energy_report(parts: EnergyBreakdown, chem: Optional[ChemicalPotentialReport] = None) -> dict:
    report = parts.to_dict()
    report["beta_pohozaev"] = chem.beta_pohozaev if chem else None
    report["beta_rayleigh"] = chem.beta_rayleigh if chem else None
    report["residual"] = chem.residual_norm if chem else None
    return report


def _check_resolution(u: WaveField, factors: Sequence[float]) -> None:
    """Log a warning when u(a1 x1, a2 x2, a3 x3) will not fit the grid"""
    grid = u.grid
    density = np.abs(u.values) ** 2
    total = density.sum()
    if total == 0:
        return
    inside = np.ones(grid.n, dtype=bool)
    for axis, (a, m, L) in enumerate(zip(factors, grid.meshes, grid.length)):
        if a < 1:
            inside = inside & (np.abs(m) < a * L / 2)
    lost = float(density[~inside].sum() / total)
    if lost > RESCALE_LOSS_TOL:
        logger.warning(f"rescaling by {tuple(factors)} pushes {lost:.2e} of the mass outside the box")

    power = np.abs(fft3(u.values, grid)) ** 2
    keep = np.ones(grid.n, dtype=bool)
    for a, k, nyq in zip(factors, grid.kmeshes, grid.nyquist):
        if a > 1:
            keep = keep & (np.abs(k) < nyq / a)
    lost = float(power[~keep].sum() / power.sum())
    if lost > RESCALE_LOSS_TOL:
        logger.warning(
            f"rescaling by {tuple(factors)} moves {lost:.2e} of the spectral power beyond the grid's resolvable scales"
        )


def resample(u: WaveField, factors: Sequence[float], amplitude: float = 1.0) -> WaveField:
    """amplitude * u(a1 x1, a2 x2, a3 x3) by trigonometric interpolation"""
    if any(a <= 0 for a in factors):
        raise ValueError(f"scale factors must be positive, got {tuple(factors)}")
    _check_resolution(u, factors)
    values = u.values
    for axis, a in enumerate(factors):
        if a == 1:
            continue
        values = sample_axis(values, u.grid, axis, a * u.grid.axes[axis])
    return WaveField(u.grid, amplitude * values)


def rescale_mass_preserving(u: WaveField, t: float) -> WaveField:
    """u^t(x) = t^(3/2) u(t x)"""
    if t <= 0:
        raise ValueError(f"t must be positive, got {t}")
    return resample(u, (t, t, t), t**1.5)


def rescale_c_changing(u: WaveField, t: float, p: float) -> WaveField:
    """t_u(x) = t^(-3/p) u(x / t); keeps C, scales the mass by t^(3 - 6/p)"""
    if t <= 0:
        raise ValueError(f"t must be positive, got {t}")
    return resample(u, (1 / t, 1 / t, 1 / t), t ** (-3.0 / p))


def rescale_anisotropic(u: WaveField, t: float) -> WaveField:
    """u_t(x) = t^(5/4) u(t x1, t x2, sqrt(t) x3)"""
    if t <= 0:
        raise ValueError(f"t must be positive, got {t}")
    return resample(u, (t, t, np.sqrt(t)), t**1.25)


def scaled_energy(parts: EnergyBreakdown, t: float, kind: str, p: float) -> EnergyBreakdown:
    """Closed-form breakdown of a rescaled field from the breakdown of the original.

    kind is "mass_preserving" (u^t) or "c_changing" (t_u); a harmonic trap term
    is homogeneous of degree 2 and scales accordingly.
    """
    if kind == "mass_preserving":
        A = t**2 * parts.A
        B = t**3 * parts.B
        C = t ** (1.5 * p - 3) * parts.C
        V = t**-2 * parts.Vterm
        m = parts.mass
    elif kind == "c_changing":
        A = t ** (1 - 6 / p) * parts.A
        B = t ** (3 - 12 / p) * parts.B
        C = parts.C
        V = t ** (5 - 6 / p) * parts.Vterm
        m = t ** (3 - 6 / p) * parts.mass
    else:
        raise ValueError(f"unknown scaling kind {kind!r}")
    return EnergyBreakdown(
        A=A, B=B, C=C, Vterm=V, E=total_energy(A, B, C, V, p), Q=virial_from_parts(A, B, C, V, p), mass=m
    )
