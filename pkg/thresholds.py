# -*- coding: utf-8 -*-

DESCRIPTION = """optimal Gagliardo-Nirenberg constant and the c_a / c_b / c_c mass threshold report"""

import sys, os, time
from dataclasses import dataclass
from timeit import default_timer as timer
from typing import Iterable, Optional, Sequence, Tuple

try:
    from humanfriendly import format_timespan
except ImportError:

    def format_timespan(seconds):
        return "{:.2f} seconds".format(seconds)


import logging

root_logger = logging.getLogger()
logger = root_logger.getChild(__name__)

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import minimize
from tabulate import tabulate

from spectral_grid import Grid3D, WaveField, fft3, ifft3, gradient_norm_sq, mass, norm_lp
from dipolar_kernel import ModelParams, RegimeLabel
from gaussian_ansatz import default_shapes, gaussian_scan, mass_lower_bound_ca
from ground_state import SolverConfig, CriticalMassEstimate, InvalidBracketError, estimate_cb


GN_GRID = Grid3D.cubic(64, 24.0)
PETVIASHVILI_TOL = 1e-12
PETVIASHVILI_MAX_ITERS = 2000
SHOOTING_R0 = 1e-4


class GNConstantError(RuntimeError):
    pass


@dataclass(frozen=True)
class GNConstant:
    """C_sigma in ||u||_{2s+2}^{2s+2} <= C_sigma^{2s+2} ||grad u||_2^{3s} ||u||_2^{2-s}"""

    sigma: float
    value: float
    method: str = "direct_maximization"
    residual: float = 0.0
    cross_check: Optional[float] = None

    def __post_init__(self):
        if not self.value > 0:
            raise ValueError(f"GN constant must be positive, got {self.value}")

    @property
    def relative_gap(self) -> Optional[float]:
        if self.cross_check is None:
            return None
        return abs(self.value - self.cross_check) / self.value

    @property
    def power(self) -> float:
        """C_sigma^(2 sigma + 2), the supremum of the Weinstein quotient"""
        return self.value ** (2 * self.sigma + 2)

    def to_dict(self) -> dict:
        return {
            "sigma": self.sigma,
            "value": self.value,
            "method": self.method,
            "residual": self.residual,
            "cross_check": self.cross_check,
            "relative_gap": self.relative_gap,
        }


def weinstein_quotient(f: WaveField, sigma: float = 1.0) -> float:
    """||f||_{2s+2}^{2s+2} / (||grad f||_2^{3s} ||f||_2^{2-s}); invariant under f -> a f(b x)"""
    A = gradient_norm_sq(f)
    m = mass(f)
    if A <= 0 or m <= 0:
        raise ValueError("Weinstein quotient needs a nonconstant, nonzero field")
    q = 2 * sigma + 2
    return norm_lp(f, q) ** q / (A ** (1.5 * sigma) * m ** ((2 - sigma) / 2))


def _check_sigma(sigma: float) -> None:
    if not 0 < sigma < 2:
        raise ValueError(f"sigma must lie in (0, 2), got {sigma}")


def _trial(grid: Grid3D, q: float, w: float) -> WaveField:
    return WaveField(grid, np.exp(-(grid.radius**q) / w))


def _maximize_trial_family(grid: Grid3D, sigma: float) -> Tuple[float, float]:
    """Nelder-Mead over the generalized Gaussians exp(-r^q / w)"""
    q0 = 2.0
    w0 = (min(grid.length) / 8) ** q0

    def objective(x):
        q, logw = x
        if not 0.5 < q < 4:
            return np.inf
        try:
            return -weinstein_quotient(_trial(grid, q, np.exp(logw)), sigma)
        except ValueError:
            return np.inf

    res = minimize(objective, [q0, np.log(w0)], method="Nelder-Mead", options={"xatol": 1e-6, "fatol": 1e-12})
    if not np.isfinite(res.fun):
        raise GNConstantError(f"trial-family maximization stalled: {res.message}")
    q, logw = res.x
    logger.debug(f"trial family optimum q={q:.4f} w={np.exp(logw):.4g} quotient={-res.fun:.8g}")
    return float(q), float(np.exp(logw))


def _pohozaev_seed(grid: Grid3D, q: float, w: float, sigma: float) -> np.ndarray:
    """Trial a exp(-(b r)^q / w) with A = 3 sigma m / (2 - sigma) and ||u||^{2s+2} = A + m"""
    trial = _trial(grid, q, w)
    b = np.sqrt(3 * sigma / (2 - sigma) * mass(trial) / gradient_norm_sq(trial))
    scaled = WaveField(grid, np.exp(-((b * grid.radius) ** q) / w))
    A, m = gradient_norm_sq(scaled), mass(scaled)
    power = 2 * sigma + 2
    a = ((A + m) / norm_lp(scaled, power) ** power) ** (1 / (2 * sigma))
    return a * np.real(scaled.values)


def petviashvili(u0: np.ndarray, grid: Grid3D, sigma: float, tol: float = PETVIASHVILI_TOL, max_iters: int = PETVIASHVILI_MAX_ITERS):
    """Fixed point of -Lap u + u = |u|^{2 sigma} u; returns (u, residual, iterations)"""
    symbol = grid.k_squared + 1.0
    gamma = (2 * sigma + 1) / (2 * sigma)
    u = np.real(u0)
    it = 0
    change = np.inf
    while it < max_iters:
        u_hat = fft3(u, grid)
        n_hat = fft3(np.abs(u) ** (2 * sigma) * u, grid)
        denominator = np.sum(np.real(np.conj(u_hat) * n_hat))
        if not denominator > 0:
            raise GNConstantError("Petviashvili iteration collapsed to zero")
        M = np.sum(symbol * np.abs(u_hat) ** 2) / denominator
        new = np.real(ifft3(M**gamma * n_hat / symbol, grid))
        change = np.linalg.norm(new - u) / np.linalg.norm(new)
        u = new
        it += 1
        if change < tol:
            break
    residual_field = np.real(ifft3(symbol * fft3(u, grid), grid)) - np.abs(u) ** (2 * sigma) * u
    residual = float(np.linalg.norm(residual_field) / np.linalg.norm(u))
    logger.debug(f"petviashvili: {it} iterations, last change {change:.2e}, residual {residual:.2e}")
    return u, residual, it


def gn_constant_direct(sigma: float = 1.0, grid: Optional[Grid3D] = None, residual_tol: float = 1e-6) -> GNConstant:
    _check_sigma(sigma)
    grid = grid or GN_GRID
    q, w = _maximize_trial_family(grid, sigma)
    u, residual, _ = petviashvili(_pohozaev_seed(grid, q, w, sigma), grid, sigma)
    if residual > residual_tol:
        raise GNConstantError(f"ground state residual {residual:.2e} above {residual_tol:.0e} on {grid.n}")
    quotient = weinstein_quotient(WaveField(grid, u), sigma)
    return GNConstant(sigma=sigma, value=quotient ** (1 / (2 * sigma + 2)), method="direct_maximization", residual=residual)


def _shoot(a: float, sigma: float, r_max: float):
    """Integrate psi'' = -2 psi'/r + kappa (alpha psi - psi^{2s+1}) from psi(0) = a; mass carried as a third state"""
    kappa = 2 / (3 * sigma)
    alpha = 1 - sigma / 2
    power = 2 * sigma + 1

    def rhs(r, y):
        psi, dpsi, _ = y
        return [dpsi, -2 * dpsi / r + kappa * (alpha * psi - np.sign(psi) * np.abs(psi) ** power), 4 * np.pi * r**2 * psi**2]

    def crossed(r, y):
        return y[0]

    crossed.terminal = True
    crossed.direction = -1

    def turned(r, y):
        return y[1]

    turned.terminal = True
    turned.direction = 1

    r0 = SHOOTING_R0
    curvature = kappa * (alpha * a - a**power) / 3
    y0 = [a + 0.5 * curvature * r0**2, curvature * r0, 4 * np.pi * a**2 * r0**3 / 3]
    sol = solve_ivp(rhs, (r0, r_max), y0, method="DOP853", rtol=1e-12, atol=1e-14, events=(crossed, turned))
    if sol.t_events[0].size:
        return "overshoot", sol
    if sol.t_events[1].size:
        return "undershoot", sol
    return ("overshoot" if sol.y[0, -1] < 0 else "undershoot"), sol


def gn_constant_shooting(sigma: float = 1.0, max_bisections: int = 200) -> GNConstant:
    """Radial ground state of -(3s/2) Lap psi + (1 - s/2) psi - psi^{2s+1} = 0, then C^{2s+2} = (s+1)/||psi||_2^{2s}"""
    _check_sigma(sigma)
    alpha = 1 - sigma / 2
    kappa = 2 / (3 * sigma)
    r_max = 60 / np.sqrt(kappa * alpha)
    lo = alpha ** (1 / (2 * sigma)) * (1 + 1e-6)
    if _shoot(lo, sigma, r_max)[0] != "undershoot":
        raise GNConstantError(f"shooting from psi(0) = {lo:.6g} does not undershoot")
    hi = 2 * lo
    for _ in range(60):
        if _shoot(hi, sigma, r_max)[0] == "overshoot":
            break
        lo, hi = hi, 2 * hi
    else:
        raise GNConstantError("could not bracket the ground state initial value")

    k = 0
    while hi - lo > 4 * np.finfo(float).eps * hi and k < max_bisections:
        mid = 0.5 * (lo + hi)
        if _shoot(mid, sigma, r_max)[0] == "overshoot":
            hi = mid
        else:
            lo = mid
        k += 1
    _, sol = _shoot(lo, sigma, r_max)
    # the undershooting profile is accurate up to its turning point; past it the tail is negligible
    psi_mass = float(sol.y[2, -1])
    value = ((sigma + 1) / psi_mass**sigma) ** (1 / (2 * sigma + 2))
    logger.debug(f"shooting: psi(0)={lo:.15g} after {k} bisections, ||psi||^2={psi_mass:.10g}, r_end={sol.t[-1]:.3g}")
    return GNConstant(sigma=sigma, value=value, method="ode_ground_state", residual=(hi - lo) / hi)


def gn_constant(sigma: float = 1.0, grid: Optional[Grid3D] = None, cross_check: bool = True) -> GNConstant:
    """Direct maximization on the grid, cross-checked by ODE shooting"""
    start = timer()
    direct = gn_constant_direct(sigma, grid)
    if not cross_check:
        return direct
    try:
        ode = gn_constant_shooting(sigma)
    except GNConstantError as e:
        logger.warning(f"shooting cross-check failed: {e}")
        return direct
    result = GNConstant(
        sigma=sigma, value=direct.value, method=direct.method, residual=direct.residual, cross_check=ode.value
    )
    logger.info(
        f"GN constant sigma={sigma:g}: {result.value:.10g} (shooting {ode.value:.10g}, "
        f"gap {result.relative_gap:.2e}, {format_timespan(timer() - start)})"
    )
    if result.relative_gap > 1e-4:
        logger.warning(f"direct and shooting GN constants disagree by {result.relative_gap:.2e}")
    return result


def resolvable_shapes(shapes: Iterable[Tuple[float, float]], grid: Grid3D, points_per_width: float = 4.0):
    """Shapes whose Gaussian fits the box and is sampled by the grid"""
    h = min(grid.spacing)
    half = 0.5 * min(grid.length)
    return [(s, t) for s, t in shapes if max(s, t) <= half / 1.5 and min(s, t) >= points_per_width * h]


@dataclass
class ThresholdReport:
    regime: RegimeLabel
    c_a: float
    c_c: Optional[float]
    c_c_all_shapes: Optional[float]
    c_b: Optional[CriticalMassEstimate]
    C1: Optional[float]
    ordering_ok: bool
    message: str = ""

    def to_dict(self) -> dict:
        return {
            "regime": self.regime.value,
            "c_a": self.c_a,
            "c_c": self.c_c,
            "c_c_all_shapes": self.c_c_all_shapes,
            "c_b_estimate": None if self.c_b is None else self.c_b.value,
            "c_b_bracket_width": None if self.c_b is None else self.c_b.width,
            "C1": self.C1,
            "ordering_ok": self.ordering_ok,
            "message": self.message,
        }

    def table(self) -> str:
        rows = [(k, v) for k, v in self.to_dict().items()]
        return tabulate(rows, headers=["quantity", "value"])


def threshold_report(
    params: ModelParams,
    grid: Optional[Grid3D] = None,
    solver_config: Optional[SolverConfig] = None,
    C1: Optional[float] = None,
    shapes: Optional[Sequence[Tuple[float, float]]] = None,
    masses: Optional[Sequence[float]] = None,
    upper_factor: float = 1.05,
) -> ThresholdReport:
    regime = params.regime
    if not regime.b_can_be_negative:
        report = ThresholdReport(
            regime=regime, c_a=float("inf"), c_c=None, c_c_all_shapes=None, c_b=None, C1=C1, ordering_ok=True,
            message="B(u) >= 0 for every u, so E > 0 on every sphere and c_a is infinite",
        )
        logger.info(f"threshold report\n{report.table()}")
        return report
    if params.trap is not None:
        raise ValueError("threshold report is defined for the untrapped model")

    grid = grid or Grid3D.cubic()
    if C1 is None:
        C1 = gn_constant(1.0).value
    c_a = mass_lower_bound_ca(params, C1)
    shapes = list(shapes) if shapes is not None else default_shapes()
    masses = list(masses) if masses is not None else list(np.logspace(-1, 4, 51))

    c_c_all = gaussian_scan(params, shapes, masses).refined_witness
    fitting = resolvable_shapes(shapes, grid)
    c_c = gaussian_scan(params, fitting, masses).refined_witness if fitting else None
    c_c_all = None if c_c_all is None else c_c_all["c"]
    c_c = None if c_c is None else c_c["c"]

    c_b = None
    message = ""
    if c_c is None:
        message = "no resolvable Gaussian witness; c_b not bracketed"
    else:
        lower = c_a if 0 < c_a < c_c else c_c / 20
        try:
            c_b = estimate_cb(params, solver_config, (lower, upper_factor * c_c), grid)
        except InvalidBracketError as e:
            message = f"c_b bracket rejected: {e}"
            logger.warning(message)

    ordering_ok = False
    if c_b is not None:
        # c_b may sit above c_c only by the bisection resolution
        ordering_ok = c_a <= c_b.value and c_b.lo <= c_c
        if not message:
            message = "c_a <= c_b <= c_c" if ordering_ok else "threshold ordering violated"
    report = ThresholdReport(
        regime=regime, c_a=c_a, c_c=c_c, c_c_all_shapes=c_c_all, c_b=c_b, C1=C1, ordering_ok=ordering_ok, message=message
    )
    logger.info(f"threshold report\n{report.table()}")
    return report
