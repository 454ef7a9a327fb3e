# -*- coding: utf-8 -*-

DESCRIPTION = """constrained ground states on mass spheres, gamma(c) curves, critical mass bisection, reflections and shape diagnostics"""

import sys, os, time
from dataclasses import dataclass, field
from timeit import default_timer as timer
from typing import List, Optional, Sequence, Tuple

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
    Grid3D,
    WaveField,
    fft3,
    ifft3,
    spectral_integral,
    mass as field_mass,
    sample_axis,
    translate,
    center_of_mass,
    boundary_mass_fraction,
    rotate_in_plane,
    quarter_turn,
    reflect_index,
)
from dipolar_kernel import ModelParams, RegimeLabel, interaction_symbol
from functionals import (
    EnergyBreakdown,
    ChemicalPotentialReport,
    energy,
    chemical_potential,
    hamiltonian_action,
    total_energy,
    virial_from_parts,
    rescale_c_changing,
    scaled_energy,
)
from gaussian_ansatz import GaussianAnsatz
from util import parallel_map


STATUS_CONVERGED = "converged"
STATUS_NOT_CONVERGED = "not_converged"
STATUS_SPREADING = "spreading"
NO_MINIMIZER = "no-minimizer-evidence"


class InvalidBracketError(ValueError):
    pass


def default_restarts() -> Tuple[GaussianAnsatz, ...]:
    # isotropic, sigma = sqrt(tau) and tau = sqrt(sigma) shapes
    return (
        GaussianAnsatz(1.5, 1.5),
        GaussianAnsatz(2.0, 4.0),
        GaussianAnsatz(4.0, 2.0),
    )


@dataclass(frozen=True)
class SolverConfig:
    dt: float = 0.05
    max_iters: int = 4000
    energy_tol: float = 1e-12
    residual_tol: float = 1e-4
    restarts: Tuple[GaussianAnsatz, ...] = field(default_factory=default_restarts)
    workers: int = 1
    check_every: int = 10
    log_every: int = 200
    min_dt: float = 1e-6
    stall_iters: int = 200
    spreading_ratio: float = 1e-3
    boundary_tol: float = 1e-3

    def __post_init__(self):
        object.__setattr__(self, "restarts", tuple(self.restarts))
        for name in ("dt", "energy_tol", "residual_tol", "min_dt", "spreading_ratio", "boundary_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("max_iters", "workers", "check_every", "log_every", "stall_iters"):
            if int(getattr(self, name)) <= 0:
                raise ValueError(f"{name} must be a positive integer, got {getattr(self, name)}")
        if not self.restarts:
            raise ValueError("at least one restart seed is required")

    @classmethod
    def from_dict(cls, d: dict) -> "SolverConfig":
        d = dict(d)
        if "restarts" in d:
            d["restarts"] = tuple(
                GaussianAnsatz(float(s["sigma"]), float(s["tau"])) for s in d["restarts"]
            )
        return cls(**d)

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "restarts"}
        d["restarts"] = [{"sigma": s.sigma, "tau": s.tau} for s in self.restarts]
        return d


@dataclass
class GroundStateResult:
    field: WaveField
    energy: EnergyBreakdown
    chemical: ChemicalPotentialReport
    converged: bool
    status: str
    iterations: int
    dt: float
    seed: str
    energy_history: np.ndarray
    monotone: bool
    boundary_fraction: float
    alternatives: List["GroundStateResult"] = field(default_factory=list)

    def as_tuple(self):
        return self.field, self.energy, self.chemical, self.converged

    @property
    def gamma(self) -> float:
        """Upper estimate of gamma(c); never positive"""
        return min(self.energy.E, 0.0)

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "converged": self.converged,
            "iterations": self.iterations,
            "dt": self.dt,
            "seed": self.seed,
            "monotone": self.monotone,
            "boundary_fraction": self.boundary_fraction,
            "beta_positive": self.chemical.beta_pohozaev > 0,
            "energy": self.energy.to_dict(),
            "chemical_potential": self.chemical.to_dict(),
            "alternatives": [
                {"seed": alt.seed, "E": alt.energy.E, "status": alt.status} for alt in self.alternatives
            ],
        }


def energy_gradient(u: WaveField, params: ModelParams) -> WaveField:
    """G(u) with dE(u)[v] = 2 Re <G(u), v>"""
    return WaveField(u.grid, hamiltonian_action(u, params))


class _FlowState:
    """Everything one iteration needs, from two forward and one inverse transform"""

    def __init__(self, values: np.ndarray, grid: Grid3D, params: ModelParams, symbol: np.ndarray, trap):
        self.values = values
        self.psi_hat = fft3(values, grid)
        absu = np.abs(values)
        density = absu**2
        rho_hat = fft3(density, grid)
        conv = np.real(ifft3(symbol * rho_hat, grid))
        dV = grid.cell_volume
        self.A = spectral_integral(grid.k_squared * np.abs(self.psi_hat) ** 2, grid)
        self.B = spectral_integral(symbol * np.abs(rho_hat) ** 2, grid)
        lp_density = absu ** (params.p - 2)
        self.C = params.lambda3 * dV * float(np.sum(lp_density * density))
        self.W = conv + params.lambda3 * lp_density
        self.Vterm = 0.0
        if trap is not None:
            self.W = self.W + trap
            self.Vterm = dV * float(np.sum(trap * density))
        self.E = total_energy(self.A, self.B, self.C, self.Vterm, params.p)
        self.Q = virial_from_parts(self.A, self.B, self.C, self.Vterm, params.p)


def _normalize(values: np.ndarray, c: float, grid: Grid3D) -> np.ndarray:
    m = grid.cell_volume * float(np.sum(np.abs(values) ** 2))
    if m <= 0:
        raise ValueError("cannot normalize the zero field")
    return values * np.sqrt(c / m)


def _flow(u0: WaveField, c: float, params: ModelParams, config: SolverConfig, label: str) -> GroundStateResult:
    """Semi-implicit normalized gradient flow with energy-decrease step control"""
    grid = u0.grid
    symbol = interaction_symbol(grid, params)
    trap = params.trap.potential(grid) if params.trap is not None else None
    half_k2 = 0.5 * grid.k_squared

    state = _FlowState(_normalize(u0.values, c, grid), grid, params, symbol, trap)
    A0 = state.A
    dt = config.dt
    history = [state.E]
    monotone = True
    status = STATUS_NOT_CONVERGED
    stall = 0
    chem = None
    it = 0
    while it < config.max_iters:
        alpha = max(0.0, 0.5 * (float(state.W.max()) + float(state.W.min())))
        rhs = state.psi_hat + dt * fft3((alpha - state.W) * state.values, grid)
        trial = ifft3(rhs / (1.0 + dt * (half_k2 + alpha)), grid)
        new = _FlowState(_normalize(trial, c, grid), grid, params, symbol, trap)
        if new.E > state.E + 1e-12 * max(1.0, abs(state.E)):
            dt *= 0.5
            logger.debug(f"[{label}] energy rose at iteration {it}, dt -> {dt:.3g}")
            if dt < config.min_dt:
                monotone = False
                logger.warning(f"[{label}] step size fell below {config.min_dt}, stopping")
                break
            continue
        it += 1
        change = state.E - new.E
        state = new
        history.append(state.E)
        stall = stall + 1 if change <= config.energy_tol * max(1.0, abs(state.E)) else 0

        if it % config.log_every == 0:
            logger.debug(f"[{label}] it {it}: E={state.E:.12g} A={state.A:.6g} Q={state.Q:.3g} dt={dt:.3g}")

        if it % config.check_every == 0 or stall >= config.stall_iters:
            if trap is None and state.E > 0:
                bfrac = boundary_mass_fraction(WaveField(grid, state.values))
                if state.A < config.spreading_ratio * A0 or bfrac > config.boundary_tol:
                    status = STATUS_SPREADING
                    logger.info(f"[{label}] mass spreading detected at iteration {it} (A={state.A:.3g}, boundary fraction {bfrac:.2e})")
                    break
            chem = chemical_potential(WaveField(grid, state.values), params)
            q_ok = abs(state.Q) <= config.residual_tol * max(1.0, state.A)
            if chem.residual_relative <= config.residual_tol and q_ok:
                status = STATUS_CONVERGED
                break
            if stall >= config.stall_iters:
                logger.info(f"[{label}] energy stalled at iteration {it} with relative residual {chem.residual_relative:.3g}")
                break

    u = WaveField(grid, state.values)
    parts = energy(u, params)
    chem = chemical_potential(u, params)
    return GroundStateResult(
        field=u,
        energy=parts,
        chemical=chem,
        converged=status == STATUS_CONVERGED,
        status=status,
        iterations=it,
        dt=dt,
        seed=label,
        energy_history=np.asarray(history),
        monotone=monotone,
        boundary_fraction=boundary_mass_fraction(u),
    )


def _pick_best(results: List[GroundStateResult]) -> GroundStateResult:
    """Lowest energy wins; ties within 1e-10 go to the lowest residual"""
    ordered = sorted(results, key=lambda r: r.energy.E)
    best = ordered[0]
    for r in ordered[1:]:
        if abs(r.energy.E - best.energy.E) <= 1e-10 * max(1.0, abs(best.energy.E)):
            if r.chemical.residual_norm < best.chemical.residual_norm:
                best = r
    best.alternatives = [
        r
        for r in ordered
        if r is not best and r.converged and abs(r.energy.E - best.energy.E) <= 1e-6 * max(1.0, abs(best.energy.E))
    ]
    return best


def minimize_on_sphere(
    c: float,
    params: ModelParams,
    config: Optional[SolverConfig] = None,
    grid: Optional[Grid3D] = None,
    initial_fields: Sequence[WaveField] = (),
) -> GroundStateResult:
    """Best of the seeded flows on S(c); extra seeds (e.g. rescaled neighbours) go in initial_fields"""
    if not c > 0:
        raise ValueError(f"mass must be positive, got {c}")
    config = config or SolverConfig()
    grid = grid or (initial_fields[0].grid if initial_fields else Grid3D.cubic())
    start = timer()
    seeds = [(f"gauss(sigma={s.sigma:g},tau={s.tau:g})", s.with_mass(c).field(grid)) for s in config.restarts]
    seeds += [(f"initial[{i}]", f) for i, f in enumerate(initial_fields)]
    results = parallel_map(lambda item: _flow(item[1], c, params, config, item[0]), seeds, config.workers)
    best = _pick_best(results)
    logger.info(
        f"c={c:g}: best seed {best.seed}, status {best.status}, E={best.energy.E:.10g}, "
        f"Q={best.energy.Q:.3g}, beta={best.chemical.beta_rayleigh:.6g} "
        f"({len(results)} runs, {format_timespan(timer() - start)})"
    )
    return best


@dataclass
class GammaCurve:
    masses: List[float]
    gammas: List[float]
    energies: List[float]
    statuses: List[str]
    witnesses: List[str]
    fields: List[Optional[WaveField]] = field(default_factory=list, repr=False)

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.masses, self.masses[1:])):
            raise ValueError("gamma curve masses must be strictly ascending")

    @property
    def valid(self) -> np.ndarray:
        return np.isfinite(np.asarray(self.gammas, dtype=float))

    def _valid_points(self) -> Tuple[np.ndarray, np.ndarray]:
        c = np.asarray(self.masses, dtype=float)
        g = np.asarray(self.gammas, dtype=float)
        return c[self.valid], g[self.valid]

    def is_nonpositive(self, slack: float = 1e-6) -> bool:
        _, g = self._valid_points()
        return bool(np.all(g <= slack))

    def is_nonincreasing(self, slack: float = 1e-6) -> bool:
        _, g = self._valid_points()
        return bool(np.all(np.diff(g) <= slack))

    def is_concave(self, slack: float = 1e-6) -> bool:
        """Slopes between consecutive valid points never increase (beyond slack)"""
        c, g = self._valid_points()
        if len(c) < 3:
            return True
        slopes = np.diff(g) / np.diff(c)
        second = np.diff(slopes) * (c[2:] - c[:-2]) / 2
        return bool(np.all(second <= slack))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "c": self.masses,
                "gamma": self.gammas,
                "E_best": self.energies,
                "status": self.statuses,
                "witness": self.witnesses,
            }
        )


def gamma_curve(
    c_list: Sequence[float],
    params: ModelParams,
    config: Optional[SolverConfig] = None,
    grid: Optional[Grid3D] = None,
) -> GammaCurve:
    """gamma(c) estimates on ascending masses.

    Each point also tries the mass-changing rescaling t_u of the previous
    minimizer (mass t^(3-6/p) c_prev) as a seed.
    """
    c_list = [float(c) for c in c_list]
    if not c_list or any(c <= 0 for c in c_list):
        raise ValueError("gamma curve needs positive masses")
    if any(b <= a for a, b in zip(c_list, c_list[1:])):
        raise ValueError("gamma curve masses must be strictly ascending")
    config = config or SolverConfig()
    grid = grid or Grid3D.cubic()
    p = params.p

    gammas, energies, statuses, witnesses, fields = [], [], [], [], []
    previous: Optional[GroundStateResult] = None
    for c in c_list:
        extra = []
        rescaled_bound = np.inf
        if previous is not None and previous.energy.E < 0:
            t = (c / previous.energy.mass) ** (1 / (3 - 6 / p))
            rescaled_bound = scaled_energy(previous.energy, t, "c_changing", p).E
            try:
                extra.append(rescale_c_changing(previous.field, t, p))
            except ValueError as e:
                logger.warning(f"could not rescale the minimizer at c={previous.energy.mass:g}: {e}")
        try:
            result = minimize_on_sphere(c, params, config, grid, initial_fields=extra)
        except Exception as e:
            logger.error(f"gamma curve point c={c:g} failed: {e}")
            gammas.append(np.nan)
            energies.append(np.nan)
            statuses.append("invalid")
            witnesses.append("invalid")
            fields.append(None)
            continue
        E_best = min(result.energy.E, rescaled_bound)
        gammas.append(min(E_best, 0.0))
        energies.append(E_best)
        statuses.append(result.status)
        negative = result.energy.E < 0 and result.status != STATUS_SPREADING
        witnesses.append("in-memory" if negative else NO_MINIMIZER)
        fields.append(result.field if negative else None)
        if negative:
            previous = result
    return GammaCurve(c_list, gammas, energies, statuses, witnesses, fields)


@dataclass(frozen=True)
class CriticalMassEstimate:
    value: float
    width: float
    lo: float
    hi: float
    bisections: int
    gamma_hi: float

    def to_dict(self) -> dict:
        return {
            "c_b": self.value,
            "width": self.width,
            "lo": self.lo,
            "hi": self.hi,
            "bisections": self.bisections,
            "gamma_hi": self.gamma_hi,
        }


def estimate_cb(
    params: ModelParams,
    config: Optional[SolverConfig] = None,
    bracket: Tuple[float, float] = (1.0, 100.0),
    grid: Optional[Grid3D] = None,
    eps_gamma: Optional[float] = None,
    rel_width: float = 0.05,
    max_bisections: int = 30,
) -> CriticalMassEstimate:
    """Bisection on the predicate gamma(c) < -eps_gamma inside bracket = (c_lo, c_hi)"""
    c_lo, c_hi = map(float, bracket)
    if not 0 < c_lo < c_hi:
        raise InvalidBracketError(f"need 0 < c_lo < c_hi, got {bracket}")
    if params.regime in (RegimeLabel.A1, RegimeLabel.A2):
        raise InvalidBracketError(f"regime {params.regime.value}: B >= 0, so gamma(c) is never negative")
    config = config or SolverConfig()
    grid = grid or Grid3D.cubic()

    gamma_hi = minimize_on_sphere(c_hi, params, config, grid).gamma
    if eps_gamma is None:
        eps_gamma = 1e-4 * abs(gamma_hi)
    if not gamma_hi < -eps_gamma or gamma_hi == 0:
        raise InvalidBracketError(f"gamma({c_hi:g}) = {gamma_hi:g} is not negative")
    gamma_lo = minimize_on_sphere(c_lo, params, config, grid).gamma
    if gamma_lo < -eps_gamma:
        raise InvalidBracketError(f"gamma({c_lo:g}) = {gamma_lo:g} is already negative")

    k = 0
    while (c_hi - c_lo) > rel_width * 0.5 * (c_lo + c_hi) and k < max_bisections:
        mid = 0.5 * (c_lo + c_hi)
        if minimize_on_sphere(mid, params, config, grid).gamma < -eps_gamma:
            c_hi = mid
        else:
            c_lo = mid
        k += 1
        logger.info(f"c_b bisection {k}: [{c_lo:.6g}, {c_hi:.6g}]")
    return CriticalMassEstimate(
        value=0.5 * (c_lo + c_hi), width=c_hi - c_lo, lo=c_lo, hi=c_hi, bisections=k, gamma_hi=gamma_hi
    )


def _axis_index(axis: int) -> int:
    if axis not in (1, 2, 3):
        raise ValueError(f"axis must be 1, 2 or 3, got {axis}")
    return axis - 1


def _check_plane(grid: Grid3D, ax: int, t: float) -> None:
    half = grid.length[ax] / 2
    if not -half <= t < half:
        raise ValueError(f"plane x{ax + 1} = {t} lies outside the box [{-half}, {half})")


def reflection_extension(u: WaveField, axis: int, side: int, t: float) -> WaveField:
    """Keep u on one side of {x_axis = t} and mirror it onto the other.

    side 1 keeps x_axis <= t, side 2 keeps x_axis > t.
    """
    ax = _axis_index(axis)
    if side not in (1, 2):
        raise ValueError(f"side must be 1 or 2, got {side}")
    grid = u.grid
    _check_plane(grid, ax, t)
    x = grid.axes[ax]
    mirror = x > t if side == 1 else x <= t
    points = np.where(mirror, 2 * t - x, x)
    values = sample_axis(u.values, grid, ax, points)
    # samples at grid points are exact; keep the untouched half bit-for-bit
    index = [slice(None)] * 3
    index[ax] = ~mirror
    values[tuple(index)] = u.values[tuple(index)]
    return WaveField(grid, values)


def half_space_integral(u: WaveField, axis: int, t: float, side: int = 1, power: float = 2.0) -> float:
    """integral of |u|^power over {x_axis <= t} (side 1) or {x_axis >= t} (side 2), half weight on the plane"""
    ax = _axis_index(axis)
    grid = u.grid
    x = grid.axes[ax]
    on_plane = np.isclose(x, t, rtol=0, atol=1e-12 * grid.length[ax])
    strict = (x < t) if side == 1 else (x > t)
    weights = np.where(on_plane, 0.5, np.where(strict, 1.0, 0.0))
    shape = [1, 1, 1]
    shape[ax] = -1
    return grid.cell_volume * float(np.sum(weights.reshape(shape) * np.abs(u.values) ** power))


def split_mass_plane(u: WaveField, axis: int, target: float) -> float:
    """t with ||u^axis_{1,t}||_2^2 = target, 0 < target < 2 ||u||_2^2"""
    ax = _axis_index(axis)
    grid = u.grid
    total = field_mass(u)
    if not 0 < target < 2 * total:
        raise ValueError(f"target mass {target} outside (0, {2 * total})")
    h = grid.spacing[ax]
    lo, hi = -grid.length[ax] / 2 + h, grid.length[ax] / 2 - h
    g = lambda t: field_mass(reflection_extension(u, axis, 1, t)) - target
    return float(brentq(g, lo, hi, xtol=1e-10 * grid.length[ax]))


@dataclass(frozen=True)
class ReflectionCheck:
    axis: int
    t: float
    c1: float
    c2: float
    E_side1: float
    E_side2: float
    E_u: float

    @property
    def defect(self) -> float:
        """E(u_1) + E(u_2) - 2E(u), nonpositive for the right axis"""
        return self.E_side1 + self.E_side2 - 2 * self.E_u


def reflection_concavity_check(u: WaveField, params: ModelParams, c1: float, axis: int) -> ReflectionCheck:
    """Split u (mass (c1 + c2)/2) into reflected fields of masses c1 and c2 and compare energies"""
    total = field_mass(u)
    t = split_mass_plane(u, axis, c1)
    u1 = reflection_extension(u, axis, 1, t)
    u2 = reflection_extension(u, axis, 2, t)
    return ReflectionCheck(
        axis=axis,
        t=t,
        c1=field_mass(u1),
        c2=field_mass(u2),
        E_side1=energy(u1, params).E,
        E_side2=energy(u2, params).E,
        E_u=energy(u, params).E,
    )


@dataclass(frozen=True)
class QualitativeReport:
    phase_deviation: float
    min_modulus_core: float
    axial_defect: float
    radial_defect: float
    planar_defect: float
    decay_slope: float
    decay_r_squared: float
    decay_points: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _rotation_average(values: np.ndarray, grid: Grid3D, plane: Tuple[int, int], angles: int = 8) -> np.ndarray:
    """Average over 4 * angles rotations evenly spread over the full turn"""
    acc = np.zeros_like(values)
    for j in range(angles):
        theta = -np.pi / 4 + j * (np.pi / 2) / angles
        rotated = rotate_in_plane(values, grid, plane, theta) if theta != 0 else values
        for k in range(4):
            acc += quarter_turn(rotated, grid, plane, k)
    return acc / (4 * angles)


def _relative_l2(a: np.ndarray, b: np.ndarray) -> float:
    norm = np.linalg.norm(b)
    return float(np.linalg.norm(a - b) / norm) if norm > 0 else 0.0


def _core_mask(density: np.ndarray, fraction: float) -> np.ndarray:
    flat = density.ravel()
    order = np.argsort(flat)[::-1]
    cumulative = np.cumsum(flat[order])
    count = int(np.searchsorted(cumulative, fraction * cumulative[-1])) + 1
    mask = np.zeros(flat.size, dtype=bool)
    mask[order[:count]] = True
    return mask.reshape(density.shape)


def decay_fit(u: WaveField, floor: float = 1e-10, ceiling: float = 1e-3, shells: int = 64):
    """Linear fit of log|u| against |x| over the tail, on shell-averaged moduli"""
    grid = u.grid
    modulus = np.abs(u.values)
    peak = modulus.max()
    r = np.broadcast_to(grid.radius, grid.n)
    r_max = 0.5 * min(grid.length)
    edges = np.linspace(0.0, r_max, shells + 1)
    which = np.digitize(r.ravel(), edges) - 1
    radii, logs = [], []
    flat = modulus.ravel()
    for s in range(shells):
        sel = which == s
        if not np.any(sel):
            continue
        mean = flat[sel].mean()
        if floor * peak < mean < ceiling * peak:
            radii.append(0.5 * (edges[s] + edges[s + 1]))
            logs.append(np.log(mean))
    if len(radii) < 3:
        return float("nan"), float("nan"), len(radii)
    fit = linregress(radii, logs)
    return float(fit.slope), float(fit.rvalue**2), len(radii)


def qualitative_diagnostics(u: WaveField, core_fraction: float = 0.999, angles: int = 8) -> QualitativeReport:
    grid = u.grid
    centred = translate(u, -center_of_mass(u))
    values = centred.values
    theta = np.angle(np.sum(np.abs(values) * values))
    aligned = values * np.exp(-1j * theta)
    core = _core_mask(np.abs(aligned) ** 2, core_fraction)
    phase_deviation = float(np.abs(np.angle(aligned[core])).max())
    min_modulus = float(np.abs(aligned[core]).min())

    axial = _relative_l2(_rotation_average(aligned, grid, (0, 1), angles), aligned)
    about_x1 = _relative_l2(_rotation_average(aligned, grid, (1, 2), angles), aligned)
    planar = _relative_l2(reflect_index(aligned, 2), aligned)
    slope, r2, npts = decay_fit(WaveField(grid, aligned))
    report = QualitativeReport(
        phase_deviation=phase_deviation,
        min_modulus_core=min_modulus,
        axial_defect=axial,
        radial_defect=max(axial, about_x1),
        planar_defect=planar,
        decay_slope=slope,
        decay_r_squared=r2,
        decay_points=npts,
    )
    logger.debug(f"qualitative diagnostics: {report}")
    return report
