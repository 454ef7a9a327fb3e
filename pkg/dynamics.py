# -*- coding: utf-8 -*-

DESCRIPTION = """Strang split-step propagation, conservation monitoring, a-priori bounds and the small-data scattering diagnostic"""

import sys, os, time
from dataclasses import dataclass, field
from timeit import default_timer as timer
from typing import Callable, List, Optional, Tuple

try:
    from humanfriendly import format_timespan
except ImportError:

    def format_timespan(seconds):
        return "{:.2f} seconds".format(seconds)


import logging

root_logger = logging.getLogger()
logger = root_logger.getChild(__name__)

import numpy as np
import pandas as pd
from scipy.optimize import brentq
from scipy.stats import linregress

from spectral_grid import (
    WaveField,
    fft3,
    ifft3,
    mass as field_mass,
    norm_lp,
    h1_norm,
    boundary_mass_fraction,
)
from dipolar_kernel import ModelParams, multiplier_bound
from functionals import energy, local_potential


class UnderResolvedError(RuntimeError):
    """Mass or energy drift beyond tolerance; the time step or grid is too coarse"""

    def __init__(self, message: str, trace: "ConservationTrace"):
        super().__init__(message)
        self.trace = trace


class NumericalOverflowError(FloatingPointError):
    def __init__(self, message: str, trace: Optional["ConservationTrace"] = None):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class PropagationConfig:
    dt: float = 1e-3
    t_end: float = 1.0
    snapshot_stride: int = 100
    conserve_tol_mass: float = 1e-10
    conserve_tol_energy: float = 1e-6
    experimental: bool = False

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if int(self.snapshot_stride) <= 0:
            raise ValueError(f"snapshot_stride must be a positive integer, got {self.snapshot_stride}")
        if not (self.conserve_tol_mass > 0 and self.conserve_tol_energy > 0):
            raise ValueError("conservation tolerances must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "PropagationConfig":
        return cls(**d)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class ConservationTrace:
    times: List[float] = field(default_factory=list)
    mass: List[float] = field(default_factory=list)
    energy: List[float] = field(default_factory=list)
    h1norm: List[float] = field(default_factory=list)
    l4norm: List[float] = field(default_factory=list)

    def record(self, t: float, psi: WaveField, params: ModelParams) -> None:
        self.times.append(float(t))
        self.mass.append(field_mass(psi))
        self.energy.append(energy(psi, params).E)
        self.h1norm.append(h1_norm(psi))
        self.l4norm.append(norm_lp(psi, 4))

    def __len__(self) -> int:
        return len(self.times)

    @property
    def mass_drift(self) -> float:
        """max |m(t) - m(0)| / m(0)"""
        m = np.asarray(self.mass)
        if len(m) == 0 or m[0] == 0:
            return 0.0
        return float(np.max(np.abs(m - m[0])) / m[0])

    @property
    def energy_drift(self) -> float:
        e = np.asarray(self.energy)
        if len(e) == 0:
            return 0.0
        scale = max(abs(e[0]), np.finfo(float).tiny)
        return float(np.max(np.abs(e - e[0])) / scale)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {"t": self.times, "mass": self.mass, "energy": self.energy, "h1norm": self.h1norm, "l4norm": self.l4norm}
        )


def _check_exponent(params: ModelParams, experimental: bool) -> None:
    if params.p == 6 and not experimental:
        raise ValueError("p = 6 propagation has no global existence theory; set experimental=True to run it")


def free_propagator(f: WaveField, t: float) -> WaveField:
    """U(t) f = exp(i t Lap / 2) f, exact on the grid"""
    grid = f.grid
    return WaveField(grid, ifft3(np.exp(-0.5j * t * grid.k_squared) * fft3(f.values, grid), grid))


def _nonlinear_phase(values: np.ndarray, psi: WaveField, dt: float, params: ModelParams) -> np.ndarray:
    W = local_potential(psi, params)
    return values * np.exp(-0.5j * dt * W)


def strang_step(psi: WaveField, dt: float, params: ModelParams) -> WaveField:
    """Half potential rotation, full kinetic step, half potential rotation. dt may be negative."""
    grid = psi.grid
    half = _nonlinear_phase(psi.values, psi, dt, params)
    kinetic = ifft3(np.exp(-0.5j * dt * grid.k_squared) * fft3(half, grid), grid)
    if not np.all(np.isfinite(kinetic)):
        raise NumericalOverflowError(f"non-finite values after a kinetic step of size {dt}")
    mid = WaveField(grid, kinetic)
    out = _nonlinear_phase(kinetic, mid, dt, params)
    if not np.all(np.isfinite(out)):
        raise NumericalOverflowError(f"non-finite values after a potential step of size {dt}")
    return WaveField(grid, out)


def _step_plan(span: float, dt: float) -> Tuple[int, float]:
    """Number of steps and signed step size covering span with steps no larger than dt"""
    if span == 0:
        return 0, 0.0
    steps = max(1, int(np.ceil(abs(span) / dt - 1e-9)))
    return steps, span / steps


def propagate(
    psi0: WaveField,
    params: ModelParams,
    config: Optional[PropagationConfig] = None,
    on_snapshot: Optional[Callable[[float, WaveField], None]] = None,
    keep_snapshots: bool = True,
):
    """Integrate to config.t_end (negative runs backward). Returns (final field, trace, snapshots).

    The trace and snapshots are taken every snapshot_stride steps and at the end.
    """
    config = config or PropagationConfig()
    _check_exponent(params, config.experimental)
    steps, dt = _step_plan(config.t_end, config.dt)
    start = timer()

    trace = ConservationTrace()
    snapshots: List[Tuple[float, WaveField]] = []

    def take(t, psi):
        trace.record(t, psi, params)
        if keep_snapshots:
            snapshots.append((t, psi))
        if on_snapshot is not None:
            on_snapshot(t, psi)
        if trace.mass_drift > config.conserve_tol_mass:
            raise UnderResolvedError(
                f"mass drift {trace.mass_drift:.2e} at t={t:.6g} exceeds {config.conserve_tol_mass:.0e}", trace
            )
        if trace.energy_drift > config.conserve_tol_energy:
            raise UnderResolvedError(
                f"energy drift {trace.energy_drift:.2e} at t={t:.6g} exceeds {config.conserve_tol_energy:.0e}", trace
            )

    psi = psi0
    take(0.0, psi)
    for k in range(1, steps + 1):
        try:
            psi = strang_step(psi, dt, params)
        except NumericalOverflowError as e:
            e.trace = trace
            raise
        if k % config.snapshot_stride == 0 or k == steps:
            take(k * dt, psi)
    logger.info(
        f"propagated {steps} steps to t={steps * dt:.6g}: mass drift {trace.mass_drift:.2e}, "
        f"energy drift {trace.energy_drift:.2e} ({format_timespan(timer() - start)})"
    )
    return psi, trace, snapshots


def advance(psi: WaveField, params: ModelParams, span: float, dt: float) -> WaveField:
    """Plain stepping over span, without monitoring"""
    steps, h = _step_plan(span, dt)
    for _ in range(steps):
        psi = strang_step(psi, h, params)
    return psi


@dataclass(frozen=True)
class AprioriBounds:
    l4_bound: float
    gradient_sq_bound: float
    energy0: float
    mass0: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _energy_envelope(y, params: ModelParams, C1: float, M: float, xi: float):
    """Lower bound of E over the mass-M sphere in terms of y = ||u||_4"""
    p = params.p
    return (
        y ** (8 / 3) / (2 * C1 ** (8 / 3) * M ** (1 / 3))
        - 0.5 * xi * y**4
        + (2 * params.lambda3 / p) * y ** (2 * (p - 2)) / M ** ((p - 4) / 2)
    )


def apriori_bounds(psi0: WaveField, params: ModelParams, C1: float) -> AprioriBounds:
    """Uniform-in-time bounds on ||psi(t)||_4 and ||grad psi(t)||_2^2 from mass and energy conservation"""
    M = field_mass(psi0)
    E0 = energy(psi0, params).E
    if M == 0:
        return AprioriBounds(0.0, 0.0, E0, M)
    xi = multiplier_bound(params)
    f = lambda y: _energy_envelope(y, params, C1, M, xi) - E0

    y_hi = max(norm_lp(psi0, 4), 1.0)
    while f(y_hi) <= 0 or f(2 * y_hi) <= f(y_hi):
        y_hi *= 2
    ys = np.logspace(np.log10(y_hi) - 12, np.log10(y_hi), 2000)
    below = np.nonzero(f(ys) <= 0)[0]
    if below.size == 0:
        y_star = ys[0]
    else:
        j = below[-1]
        y_star = brentq(f, ys[j], ys[j + 1], xtol=1e-14 * ys[j + 1])
    return AprioriBounds(
        l4_bound=float(y_star),
        gradient_sq_bound=float(2 * E0 + xi * y_star**4),
        energy0=E0,
        mass0=M,
    )


def standing_wave_error(
    u: WaveField,
    beta: float,
    params: ModelParams,
    config: Optional[PropagationConfig] = None,
) -> pd.DataFrame:
    """||psi(t) - e^{i beta t} u||_2 / ||u||_2 along a propagation from u.

    beta is the multiplier in G(u) + beta u = 0, so the exact solution is e^{i beta t} u.
    """
    config = config or PropagationConfig()
    norm = np.sqrt(field_mass(u))
    rows = []

    def compare(t, psi):
        diff = psi.values - np.exp(1j * beta * t) * u.values
        rows.append({"t": t, "error": float(np.sqrt(u.grid.cell_volume * np.sum(np.abs(diff) ** 2)) / norm)})

    propagate(u, params, config, on_snapshot=compare, keep_snapshots=False)
    return pd.DataFrame(rows)


@dataclass(frozen=True)
class ScatteringConfig:
    t_min: float = 1.0
    t_max: float = 100.0
    points: int = 12
    tail_pairs: int = 5
    boundary_tol: float = 1e-6
    small_data_h1: Optional[float] = None
    tail_fraction: float = 0.1

    def __post_init__(self):
        if not 0 < self.t_min < self.t_max:
            raise ValueError(f"need 0 < t_min < t_max, got {self.t_min}, {self.t_max}")
        if self.points < self.tail_pairs + 1:
            raise ValueError("need more time points than tail pairs")
        if not 0 < self.tail_fraction <= 1:
            raise ValueError(f"tail_fraction must lie in (0, 1], got {self.tail_fraction}")

    @classmethod
    def from_dict(cls, d: dict) -> "ScatteringConfig":
        return cls(**d)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class ScatteringReport:
    times: np.ndarray
    successive: np.ndarray
    pairwise: np.ndarray
    boundary_fraction: float
    cauchy_consistent: bool
    shrink_per_decade: float
    message: str
    psi_plus: WaveField = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "times": self.times.tolist(),
            "successive_h1_differences": self.successive.tolist(),
            "pairwise_h1_differences": self.pairwise.tolist(),
            "boundary_fraction": self.boundary_fraction,
            "cauchy_consistent": self.cauchy_consistent,
            "shrink_per_decade": self.shrink_per_decade,
            "message": self.message,
        }


def scattering_diagnostic(
    psi0: WaveField,
    params: ModelParams,
    config: Optional[PropagationConfig] = None,
    scattering: Optional[ScatteringConfig] = None,
) -> ScatteringReport:
    """Cauchy behaviour of v(t) = U(-t) psi(t) in H^1 on a log-spaced time grid.

    A finite horizon gives evidence for a scattering state, never a proof.
    """
    if params.trap is not None:
        raise ValueError("scattering is only defined without a trap")
    config = config or PropagationConfig()
    scattering = scattering or ScatteringConfig()
    _check_exponent(params, config.experimental)
    h1_0 = h1_norm(psi0)
    if scattering.small_data_h1 is not None and h1_0 > scattering.small_data_h1:
        raise ValueError(f"H^1 norm {h1_0:.3g} exceeds the small data threshold {scattering.small_data_h1:.3g}")

    start = timer()
    times = np.logspace(np.log10(scattering.t_min), np.log10(scattering.t_max), scattering.points)
    psi = psi0
    t_now = 0.0
    profiles = []
    boundary = 0.0
    for t in times:
        psi = advance(psi, params, t - t_now, config.dt)
        t_now = t
        boundary = max(boundary, boundary_mass_fraction(psi))
        profiles.append(free_propagator(psi, -t))
        logger.debug(f"scattering: reached t={t:.4g}, boundary fraction {boundary:.2e}")

    k = len(times)
    pairwise = np.zeros((k, k))
    for i in range(k):
        for j in range(i + 1, k):
            pairwise[i, j] = pairwise[j, i] = h1_norm(profiles[i] - profiles[j])
    successive = np.array([pairwise[i, i + 1] for i in range(k - 1)])

    tail = successive[-scattering.tail_pairs :]
    negligible = tail.max() <= 1e-14 * max(1.0, h1_0)
    shrinking = bool(np.all(np.diff(tail) < 0)) or negligible
    # a bound state keeps O(||psi0||) differences even when the tail happens to decrease
    small_tail = tail.max() <= scattering.tail_fraction * h1_0
    positive = successive > 0
    if negligible or positive.sum() < 2:
        shrink = float("inf")
    else:
        fit = linregress(np.log10(times[1:][positive]), np.log10(successive[positive]))
        shrink = float(10 ** (-fit.slope))

    if boundary > scattering.boundary_tol:
        consistent = False
        message = f"boundary mass fraction {boundary:.2e} above {scattering.boundary_tol:.0e}; enlarge the box"
    elif shrinking and small_tail:
        consistent = True
        message = "differences shrink over the horizon: consistent with a scattering state (finite-time evidence)"
    else:
        consistent = False
        message = "differences do not shrink: no evidence of scattering on this horizon"
        if shrinking:
            message = f"tail differences stay above {scattering.tail_fraction:g} of the initial H^1 norm: no evidence of scattering on this horizon"
    logger.info(f"scattering diagnostic: {message} ({format_timespan(timer() - start)})")
    return ScatteringReport(
        times=times,
        successive=successive,
        pairwise=pairwise,
        boundary_fraction=boundary,
        cauchy_consistent=consistent,
        shrink_per_decade=shrink,
        message=message,
        psi_plus=profiles[-1],
    )
