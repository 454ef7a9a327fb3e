# -*- coding: utf-8 -*-

DESCRIPTION = """closed-form energy of anisotropic Gaussians, negative-energy mass windows and the analytic lower mass bound"""

import sys, os, time
from dataclasses import dataclass
from typing import Iterable, List, NamedTuple, Optional, Tuple

import logging

root_logger = logging.getLogger()
logger = root_logger.getChild(__name__)

import numpy as np
import pandas as pd
from scipy.optimize import brentq

from spectral_grid import Grid3D, WaveField
from dipolar_kernel import ModelParams, RegimeLabel, multiplier_bound, xi_bound


# below this |q| the closed-form B~ branches lose digits and we switch to the series
DIAGONAL_SERIES_RADIUS = 1e-3
DIAGONAL_SERIES_TERMS = 8


class GaussianCoefficients(NamedTuple):
    Atilde: float
    Btilde: float
    Ctilde: float


@dataclass(frozen=True)
class GaussianAnsatz:
    """u(x) = sqrt(8c / (pi^(3/2) sigma^2 tau)) exp(-2((x1^2 + x2^2)/sigma^2 + x3^2/tau^2)), mass c"""

    sigma: float
    tau: float
    c: float = 1.0

    def __post_init__(self):
        if not (self.sigma > 0 and self.tau > 0 and self.c > 0):
            raise ValueError(f"sigma, tau and c must be positive, got {self}")

    @property
    def amplitude(self) -> float:
        return float(np.sqrt(8 * self.c / (np.pi**1.5 * self.sigma**2 * self.tau)))

    def with_mass(self, c: float) -> "GaussianAnsatz":
        return GaussianAnsatz(self.sigma, self.tau, c)

    def field(self, grid: Grid3D) -> WaveField:
        s2, t2 = self.sigma**2, self.tau**2
        amp = self.amplitude
        return WaveField.from_function(
            grid, lambda x1, x2, x3: amp * np.exp(-2 * ((x1**2 + x2**2) / s2 + x3**2 / t2))
        )

    def coefficients(self, params: ModelParams) -> GaussianCoefficients:
        return gaussian_energy_coeffs(self.sigma, self.tau, params)

    def energy(self, params: ModelParams) -> float:
        return gaussian_energy(self.sigma, self.tau, self.c, params)


@dataclass(frozen=True)
class MassWindow:
    lower: float
    upper: float
    exists: bool
    roots: Tuple[float, ...] = ()

    def __post_init__(self):
        if self.exists and not (0 < self.lower < self.upper):
            raise ValueError(f"inconsistent window ({self.lower}, {self.upper})")

    @classmethod
    def empty(cls) -> "MassWindow":
        return cls(float("nan"), float("nan"), False)

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lower + self.upper)

    def to_dict(self) -> dict:
        return {"lower": self.lower, "upper": self.upper, "exists": self.exists}


def _h(q):
    """arctan(sqrt q)/sqrt q for q > 0, artanh(sqrt -q)/sqrt -q for -1 < q < 0"""
    q = np.asarray(q, dtype=float)
    pos = np.sqrt(np.where(q > 0, q, 1.0))
    neg = np.sqrt(np.where(q < 0, -q, 0.25))
    return np.where(q > 0, np.arctan(pos) / pos, np.arctanh(neg) / neg)


def _dipolar_shape_factor(sigma, tau):
    """D with B~ = sqrt(2)/pi^(3/2) (lambda1/(sigma^2 tau) + lambda2 D); zero on the diagonal.

    With q = (sigma^2 - tau^2)/tau^2:
      tau^3 D = 4pi(1 - h(q))/q - 4pi/(3(1 + q))
    which is the coth^-1 branch for tau > sigma and the cot^-1 branch for tau < sigma.
    """
    sigma = np.asarray(sigma, dtype=float)
    tau = np.asarray(tau, dtype=float)
    q = (sigma**2 - tau**2) / tau**2
    small = np.abs(q) < DIAGONAL_SERIES_RADIUS
    qs = np.where(small, 1.0, q)
    # 1 + q computed as sigma^2/tau^2 to keep digits near q = -1
    closed = 4 * np.pi * (1 - _h(qs)) / qs - 4 * np.pi * tau**2 / (3 * sigma**2)
    q_near = np.where(small, q, 0.0)
    series = np.zeros_like(q)
    for m in range(1, DIAGONAL_SERIES_TERMS + 1):
        series = series + (-1) ** (m + 1) * 8 * np.pi * m / (3 * (2 * m + 3)) * q_near**m
    return np.where(small, series, closed) / tau**3


def gaussian_energy_coeffs(sigma, tau, params: ModelParams) -> GaussianCoefficients:
    """A~, B~, C~ with E(u_{sigma,tau,c}) = A~ c + B~ c^2 + C~ c^(p/2) (no trap). Vectorized."""
    sigma = np.asarray(sigma, dtype=float)
    tau = np.asarray(tau, dtype=float)
    p = params.p
    Atilde = 2 / sigma**2 + 1 / tau**2
    Btilde = np.sqrt(2) / np.pi**1.5 * (
        params.lambda1 / (sigma**2 * tau) + params.lambda2 * _dipolar_shape_factor(sigma, tau)
    )
    Ctilde = (
        params.lambda3
        * 2 ** (1 + 3 * (p - 1) / 2)
        / (np.pi ** (3 * (p - 2) / 4) * p**2.5 * sigma ** (p - 2) * tau ** ((p - 2) / 2))
    )
    if Atilde.ndim == 0:
        return GaussianCoefficients(float(Atilde), float(Btilde), float(Ctilde))
    return GaussianCoefficients(Atilde, Btilde, Ctilde)


def trap_coefficient(sigma, tau, params: ModelParams):
    """integral V |u|^2 = (coefficient) * c for the harmonic trap"""
    if params.trap is None:
        return 0.0
    return (params.trap.ratio1 + params.trap.ratio2) * sigma**2 / 8 + tau**2 / 8


def gaussian_energy(sigma, tau, c, params: ModelParams):
    a1, a2, a3 = gaussian_energy_coeffs(sigma, tau, params)
    c = np.asarray(c, dtype=float)
    E = (a1 + trap_coefficient(sigma, tau, params)) * c + a2 * c**2 + a3 * c ** (params.p / 2)
    if np.ndim(E) == 0:
        return float(E)
    return E


def _energy_per_mass(coeffs: GaussianCoefficients, p: float, c: float) -> float:
    a1, a2, a3 = coeffs
    return a1 + a2 * c + a3 * c ** ((p - 2) / 2)


def _cubic_real_roots(b: float, c: float, d: float) -> List[float]:
    """Real roots of s^3 + b s^2 + c s + d, trigonometric form when all three are real"""
    shift = b / 3
    p = c - b**2 / 3
    q = 2 * b**3 / 27 - b * c / 3 + d
    disc = (q / 2) ** 2 + (p / 3) ** 3
    if p < 0 and disc < 0:
        r = 2 * np.sqrt(-p / 3)
        arg = np.clip(3 * q / (p * r), -1.0, 1.0)
        phi = np.arccos(arg) / 3
        ys = [r * np.cos(phi - 2 * np.pi * k / 3) for k in range(3)]
    else:
        sq = np.sqrt(max(disc, 0.0))
        ys = [np.cbrt(-q / 2 + sq) + np.cbrt(-q / 2 - sq)]
    roots = []
    for y in ys:
        s = y - shift
        # Newton polish
        for _ in range(4):
            f = ((s + b) * s + c) * s + d
            df = (3 * s + 2 * b) * s + c
            if df == 0:
                break
            s -= f / df
        roots.append(float(s))
    return sorted(roots)


def _window_p5(coeffs: GaussianCoefficients) -> MassWindow:
    a1, a2, a3 = coeffs
    if a2 >= 0:
        return MassWindow.empty()
    # E/c < 0  <=>  s^3 + (a2/a3) s^2 + a1/a3 < 0 with s = sqrt(c)
    beta, gamma = a2 / a3, a1 / a3
    depth = 4 * beta**3 / 27 + gamma
    if depth >= -1e-12 * abs(gamma):
        return MassWindow.empty()
    roots = _cubic_real_roots(beta, 0.0, gamma)
    positive = [s for s in roots if s > 0]
    if len(positive) != 2:
        return MassWindow.empty()
    s_lo, s_hi = positive
    # squaring a1 + a2 c = -a3 c^(3/2) gives P(c) = a3^2 c^3 - a2^2 c^2 - 2 a1 a2 c - a1^2;
    # its third root comes from the negative s and solves a1 + a2 c = +a3 c^(3/2)
    P_roots = tuple(sorted(s * s for s in roots))
    return MassWindow(s_lo**2, s_hi**2, True, P_roots)


def _window_p6(coeffs: GaussianCoefficients) -> MassWindow:
    a1, a2, a3 = coeffs
    if a2 >= 0:
        return MassWindow.empty()
    disc = a2 * a2 - 4 * a1 * a3
    if disc <= 1e-12 * a2 * a2:
        return MassWindow.empty()
    big = 0.5 * (-a2 + np.sqrt(disc))
    return MassWindow(a1 / big, big / a3, True, (a1 / big, big / a3))


def _window_general(coeffs: GaussianCoefficients, p: float) -> MassWindow:
    a1, a2, a3 = coeffs
    if a2 >= 0:
        return MassWindow.empty()
    r = (p - 2) / 2
    c_star = (-a2 / (r * a3)) ** (1 / (r - 1))
    if _energy_per_mass(coeffs, p, c_star) >= -1e-12 * a1:
        return MassWindow.empty()
    g = lambda c: _energy_per_mass(coeffs, p, c)
    lower = brentq(g, 0.0, c_star, xtol=1e-14 * c_star, rtol=1e-14)
    hi = 2 * c_star
    while g(hi) < 0:
        hi *= 2
    upper = brentq(g, c_star, hi, xtol=1e-14 * c_star, rtol=1e-14)
    return MassWindow(lower, upper, True, (lower, upper))


def negative_energy_window_p5(sigma: float, tau: float, params: ModelParams) -> MassWindow:
    if params.p != 5:
        raise ValueError(f"the cubic window needs p = 5, got {params.p}")
    return _window_p5(gaussian_energy_coeffs(sigma, tau, params))


def negative_energy_window_p6(sigma: float, tau: float, params: ModelParams) -> MassWindow:
    if params.p != 6:
        raise ValueError(f"the quadratic window needs p = 6, got {params.p}")
    return _window_p6(gaussian_energy_coeffs(sigma, tau, params))


def negative_energy_window(sigma: float, tau: float, params: ModelParams) -> MassWindow:
    """Masses c for which E(u_{sigma,tau,c}) < 0, for any p in (4, 6]"""
    coeffs = gaussian_energy_coeffs(sigma, tau, params)
    if params.p == 5:
        return _window_p5(coeffs)
    if params.p == 6:
        return _window_p6(coeffs)
    return _window_general(coeffs, params.p)


def witness_mass(sigma: float, tau: float, params: ModelParams) -> Optional[float]:
    """Infimum of the masses with negative energy at this shape, None if there are none"""
    window = negative_energy_window(sigma, tau, params)
    return window.lower if window.exists else None


def cubic_threshold(sigma, tau, params: ModelParams):
    """-4 B~^3 / (27 C~^2): the cubic window exists iff A~ is below this"""
    _, a2, a3 = gaussian_energy_coeffs(sigma, tau, params)
    return -4 * a2**3 / (27 * a3**2)


def printed_limit_a3(params: ModelParams) -> float:
    """Large-tau limit of -B~^3/C~^2 along sigma = sqrt(tau), p = 5"""
    return -3125 * (3 * params.lambda1 - 4 * np.pi * params.lambda2) ** 3 / (
        110592 * np.sqrt(2) * params.lambda3**2
    )


def printed_limit_a4(params: ModelParams) -> float:
    """Large-sigma limit of -B~^3/C~^2 along tau = sqrt(sigma), p = 5"""
    return -3125 * (3 * params.lambda1 + 8 * np.pi * params.lambda2) ** 3 / (
        110592 * np.sqrt(2) * params.lambda3**2
    )


def printed_p6_diagonal_limit(tau, params: ModelParams):
    """2 lambda1^2/(pi^3 tau^6) - 1536 lambda3/(25 sqrt5 pi^(9/4) tau^(13/2))

    Equals B~^2 - 4 A~ C~ on the diagonal when C~ carries the p = 5 exponents.
    """
    return 2 * params.lambda1**2 / (np.pi**3 * tau**6) - 1536 * params.lambda3 / (
        25 * np.sqrt(5) * np.pi**2.25 * tau**6.5
    )


def diagonal_discriminant_p6(tau, params: ModelParams):
    """B~^2 - 4 A~ C~ at sigma = tau with the p = 6 coefficients"""
    return 2 * params.lambda1**2 / (np.pi**3 * tau**6) - 12 * 2**8.5 * params.lambda3 / (
        np.pi**3 * 6**2.5 * tau**8
    )


def mass_lower_bound_ca(params: ModelParams, C1: float, printed_xi: bool = False) -> float:
    """c_a = min{(16 lambda3^2/(p^2 Xi^2))^(1/(p-4)), Xi^-3 C1^-8}; infinite when B >= 0 always.

    By default Xi is the sharp multiplier bound; printed_xi uses the (2pi)^-3 scaled constant.
    """
    if params.regime in (RegimeLabel.A1, RegimeLabel.A2):
        return float("inf")
    xi = xi_bound(params) if printed_xi else multiplier_bound(params)
    p = params.p
    first = (16 * params.lambda3**2 / (p**2 * xi**2)) ** (1 / (p - 4))
    second = xi**-3 * C1**-8
    return float(min(first, second))


def log_shapes(kind: str, start: float, stop: float, num: int) -> List[Tuple[float, float]]:
    """(sigma, tau) pairs on a logarithmic grid.

    kind: "sqrt_tau" gives (sqrt(tau), tau), "sqrt_sigma" gives (sigma, sqrt(sigma)),
    "diagonal" gives (tau, tau) and "full" every pair from the same axis.
    """
    values = np.logspace(np.log10(start), np.log10(stop), num)
    if kind == "sqrt_tau":
        return [(float(np.sqrt(t)), float(t)) for t in values]
    if kind == "sqrt_sigma":
        return [(float(s), float(np.sqrt(s))) for s in values]
    if kind == "diagonal":
        return [(float(t), float(t)) for t in values]
    if kind == "full":
        return [(float(s), float(t)) for s in values for t in values]
    raise ValueError(f"unknown shape family {kind!r}")


def default_shapes() -> List[Tuple[float, float]]:
    return (
        log_shapes("sqrt_tau", 1.0, 1e4, 41)
        + log_shapes("sqrt_sigma", 1.0, 1e4, 41)
        + log_shapes("full", 0.25, 16.0, 13)
    )


@dataclass
class GaussianScanResult:
    frame: pd.DataFrame
    best: dict
    witness: Optional[dict]
    refined_witness: Optional[dict]
    window: Optional[dict] = None

    @property
    def witness_mass(self) -> Optional[float]:
        """c_c: the smallest scanned mass admitting negative energy"""
        return None if self.witness is None else self.witness["c"]

    def summary(self) -> dict:
        return {
            "best": self.best,
            "witness": self.witness,
            "refined_witness": self.refined_witness,
            "window": self.window,
            "message": "negative-energy witness found"
            if self.witness is not None
            else "no negative-energy witness",
        }


def gaussian_scan(
    params: ModelParams,
    shapes: Iterable[Tuple[float, float]],
    masses: Iterable[float],
) -> GaussianScanResult:
    shapes = [(float(s), float(t)) for s, t in shapes]
    masses = np.asarray(sorted(float(c) for c in masses), dtype=float)
    if not shapes or masses.size == 0:
        raise ValueError("gaussian scan needs at least one shape and one mass")
    if np.any(masses <= 0) or any(s <= 0 or t <= 0 for s, t in shapes):
        raise ValueError("scan shapes and masses must be positive")

    sig = np.repeat([s for s, _ in shapes], masses.size)
    tau = np.repeat([t for _, t in shapes], masses.size)
    cs = np.tile(masses, len(shapes))
    a1, a2, a3 = gaussian_energy_coeffs(sig, tau, params)
    E = gaussian_energy(sig, tau, cs, params)
    frame = pd.DataFrame(
        {"sigma": sig, "tau": tau, "c": cs, "Atilde": a1, "Btilde": a2, "Ctilde": a3, "E": E}
    )

    best = frame.loc[frame["E"].idxmin()].to_dict()
    negative = frame[frame["E"] < 0]
    witness = None
    if len(negative):
        witness = negative.sort_values(["c", "E"]).iloc[0].to_dict()

    refined = None
    for s, t in shapes:
        c_w = witness_mass(s, t, params) if params.trap is None else None
        if c_w is not None and (refined is None or c_w < refined["c"]):
            refined = {"sigma": s, "tau": t, "c": c_w}
    window = None
    if refined is not None:
        w = negative_energy_window(refined["sigma"], refined["tau"], params)
        window = {"sigma": refined["sigma"], "tau": refined["tau"], "lower": w.lower, "upper": w.upper}
    logger.info(
        f"gaussian scan: {len(frame)} rows, min E {best['E']:.6g}, "
        f"witness mass {None if witness is None else witness['c']}"
    )
    return GaussianScanResult(frame=frame, best=best, witness=witness, refined_witness=refined, window=window)
