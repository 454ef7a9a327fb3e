# -*- coding: utf-8 -*-

DESCRIPTION = """edGPE toolkit command line: ground states, gamma curves, Gaussian scans, propagation, scattering, thresholds and self-verification"""

import sys, os, time
import json
import argparse
from pathlib import Path
from datetime import datetime
from dataclasses import dataclass, field
from timeit import default_timer as timer
from typing import List, Optional, Tuple, Union

try:
    from humanfriendly import format_timespan
except ImportError:

    def format_timespan(seconds):
        return "{:.2f} seconds".format(seconds)


import logging

root_logger = logging.getLogger()
logger = root_logger.getChild(__name__)

import numpy as np
from jsonschema import Draft7Validator
from tabulate import tabulate

from util import atomic_write_csv, atomic_write_json, write_manifest, Timer
from spectral_grid import (
    Grid3D,
    WaveField,
    fft3,
    spectral_integral,
    mass,
    gradient_norm_sq,
    inner_product,
    norm_lp,
    random_smooth_field,
    translate,
    read_snapshot,
    write_snapshot,
)
from dipolar_kernel import (
    ModelParams,
    HarmonicTrap,
    param_issues,
    khat_table,
    b_functional,
    multiplier_bound,
    energy_split,
    FOUR_PI_THIRDS,
    EIGHT_PI_THIRDS,
)
from functionals import chemical_potential, energy, energy_report, rescale_mass_preserving, scaled_energy, virial
from gaussian_ansatz import (
    GaussianAnsatz,
    default_shapes,
    gaussian_energy,
    gaussian_scan,
    mass_lower_bound_ca,
    printed_limit_a3,
    witness_mass,
)
from ground_state import (
    SolverConfig,
    STATUS_CONVERGED,
    STATUS_SPREADING,
    energy_gradient,
    minimize_on_sphere,
    gamma_curve,
    qualitative_diagnostics,
    reflection_concavity_check,
)
from dynamics import (
    PropagationConfig,
    ScatteringConfig,
    UnderResolvedError,
    NumericalOverflowError,
    propagate,
    scattering_diagnostic,
    strang_step,
)
from thresholds import GNConstantError, gn_constant, threshold_report


COMMANDS = ("ground-state", "gamma-curve", "gaussian-scan", "evolve", "scatter", "thresholds", "verify")

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_NOT_CONVERGED = 2
EXIT_SPREADING = 3
EXIT_UNDER_RESOLVED = 4
EXIT_USAGE = 64
EXIT_CONFIG = 65

# regime A3 with the Lee-Huang-Yang exponent
DEFAULT_PARAMS = {"lambda1": 0.0, "lambda2": 1.0, "lambda3": 1.0, "p": 5.0}

_number = {"type": "number"}
_positive = {"type": "number", "exclusiveMinimum": 0}
_triple_or = lambda item: {"oneOf": [item, {"type": "array", "items": item, "minItems": 3, "maxItems": 3}]}

CONFIG_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": ["params"],
    "additionalProperties": False,
    "properties": {
        "params": {
            "type": "object",
            "required": ["lambda1", "lambda2", "lambda3", "p"],
            "additionalProperties": False,
            "properties": {
                "lambda1": _number,
                "lambda2": _number,
                "lambda3": _number,
                "p": _number,
                "trap": {
                    "type": ["object", "null"],
                    "additionalProperties": False,
                    "properties": {"ratio1": _number, "ratio2": _number},
                },
            },
        },
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n": _triple_or({"type": "integer", "minimum": 2}),
                "length": _triple_or(_positive),
            },
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dt": _positive,
                "max_iters": {"type": "integer", "minimum": 1},
                "energy_tol": _positive,
                "residual_tol": _positive,
                "restarts": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "object",
                        "required": ["sigma", "tau"],
                        "properties": {"sigma": _positive, "tau": _positive},
                    },
                },
                "workers": {"type": "integer", "minimum": 1},
                "check_every": {"type": "integer", "minimum": 1},
                "log_every": {"type": "integer", "minimum": 1},
                "min_dt": _positive,
                "stall_iters": {"type": "integer", "minimum": 1},
                "spreading_ratio": _positive,
                "boundary_tol": _positive,
            },
        },
        "propagation": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dt": _positive,
                "t_end": _number,
                "snapshot_stride": {"type": "integer", "minimum": 1},
                "conserve_tol_mass": _positive,
                "conserve_tol_energy": _positive,
                "experimental": {"type": "boolean"},
            },
        },
        "scattering": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "t_min": _positive,
                "t_max": _positive,
                "points": {"type": "integer", "minimum": 3},
                "tail_pairs": {"type": "integer", "minimum": 1},
                "boundary_tol": _positive,
                "small_data_h1": {"type": ["number", "null"]},
                "tail_fraction": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
            },
        },
        "seed": {"type": "integer", "minimum": 0},
        "output_dir": {"type": "string", "minLength": 1},
        "mass": _positive,
        "masses": {"type": "array", "items": _positive, "minItems": 1},
        "init": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "snapshot": {"type": "string"},
                "gaussian": {
                    "type": "object",
                    "required": ["sigma", "tau"],
                    "additionalProperties": False,
                    "properties": {"sigma": _positive, "tau": _positive, "c": _positive},
                },
            },
        },
    },
}


class ConfigError(ValueError):
    """Every problem found in a run configuration; issues are (kind, code, message) with kind schema/physics/config"""

    def __init__(self, issues: List[Tuple[str, str, str]]):
        self.issues = list(issues)
        super().__init__("\n".join(f"[{kind}] {code}: {msg}" for kind, code, msg in self.issues))

    @property
    def codes(self) -> List[str]:
        return [code for _, code, _ in self.issues]


@dataclass(frozen=True)
class RunConfig:
    params: ModelParams
    grid: Grid3D = field(default_factory=Grid3D.cubic)
    solver: SolverConfig = field(default_factory=SolverConfig)
    propagation: PropagationConfig = field(default_factory=PropagationConfig)
    scattering: ScatteringConfig = field(default_factory=ScatteringConfig)
    seed: int = 0
    output_dir: str = "out"
    mass: Optional[float] = None
    masses: Tuple[float, ...] = ()
    init: Optional[dict] = None

    def to_dict(self) -> dict:
        d = {
            "params": self.params.to_dict(),
            "grid": self.grid.to_dict(),
            "solver": self.solver.to_dict(),
            "propagation": self.propagation.to_dict(),
            "scattering": self.scattering.to_dict(),
            "seed": self.seed,
            "output_dir": self.output_dir,
        }
        if self.masses:
            d["masses"] = list(self.masses)
        if self.mass is not None:
            d["mass"] = self.mass
        if self.init is not None:
            d["init"] = self.init
        return d


def _schema_issues(doc) -> Tuple[List[Tuple[str, str, str]], set]:
    """Schema issues plus the top-level sections they fall in"""
    issues, sections = [], set()
    for error in sorted(Draft7Validator(CONFIG_SCHEMA).iter_errors(doc), key=lambda e: list(e.absolute_path)):
        where = "/".join(str(part) for part in error.absolute_path) or "<root>"
        issues.append(("schema", f"schema_{error.validator}", f"{where}: {error.message}"))
        if error.absolute_path:
            sections.add(error.absolute_path[0])
    return issues, sections


def _build(section: str, builder, data, issues):
    try:
        return builder(data)
    except (ValueError, TypeError) as e:
        issues.append(("config", f"{section}_invalid", str(e)))
        return None


def parse_config(text: Union[str, bytes]) -> RunConfig:
    """Validate a JSON run configuration, collecting every problem before failing"""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError([("schema", "json_syntax", str(e))])

    issues, bad_sections = _schema_issues(doc)
    if not isinstance(doc, dict):
        raise ConfigError(issues)

    params = None
    p = doc.get("params")
    if isinstance(p, dict) and "params" not in bad_sections:
        trap = p.get("trap")
        trap = HarmonicTrap(**trap) if isinstance(trap, dict) else None
        physics = [("physics", code, msg) for code, msg in param_issues(p["lambda1"], p["lambda2"], p["lambda3"], p["p"], trap)]
        issues.extend(physics)
        if not physics:
            params = _build("params", ModelParams.from_dict, p, issues)

    sections = {}
    for section, builder, defaults in (
        ("grid", Grid3D.from_dict, {"n": 64, "length": 16.0}),
        ("solver", SolverConfig.from_dict, {}),
        ("propagation", PropagationConfig.from_dict, {}),
        ("scattering", ScatteringConfig.from_dict, {}),
    ):
        if section not in bad_sections:
            sections[section] = _build(section, builder, {**defaults, **doc.get(section, {})}, issues)

    masses = ()
    if "masses" not in bad_sections:
        masses = tuple(float(c) for c in doc.get("masses", ()))
        if any(b <= a for a, b in zip(masses, masses[1:])):
            issues.append(("config", "masses_not_ascending", f"masses must be strictly ascending, got {list(masses)}"))
    init = doc.get("init")
    if init is not None and "init" not in bad_sections and len(init) != 1:
        issues.append(("config", "init_ambiguous", "init needs exactly one of 'snapshot' or 'gaussian'"))
    if issues:
        raise ConfigError(issues)
    return RunConfig(
        params=params,
        seed=int(doc.get("seed", 0)),
        output_dir=doc.get("output_dir", "out"),
        mass=doc.get("mass"),
        masses=masses,
        init=init,
        **sections,
    )


def initial_field(config: RunConfig) -> WaveField:
    init = config.init or {"gaussian": {"sigma": 2.0, "tau": 2.0}}
    if "snapshot" in init:
        psi = read_snapshot(init["snapshot"])
        if psi.grid != config.grid:
            logger.warning(f"snapshot grid {psi.grid} overrides the configured grid {config.grid}")
        return psi
    g = init["gaussian"]
    c = g.get("c", config.mass if config.mass is not None else 1.0)
    return GaussianAnsatz(g["sigma"], g["tau"], c).field(config.grid)


def _require_mass(config: RunConfig) -> float:
    if config.mass is None:
        raise ConfigError([("config", "mass_missing", "this command needs 'mass' (or --c)")])
    return float(config.mass)


def _default_masses(config: RunConfig) -> List[float]:
    return list(config.masses) if config.masses else list(np.logspace(-1, 4, 51))


class _Artifacts:
    """Collects the files written by one command for the manifest"""

    def __init__(self, outdir: Path):
        self.outdir = outdir
        self.files: List[Path] = []

    def json(self, name: str, obj) -> Path:
        fp = atomic_write_json(self.outdir.joinpath(name), obj)
        self.files.append(fp)
        return fp

    def csv(self, name: str, df) -> Path:
        fp = atomic_write_csv(self.outdir.joinpath(name), df)
        self.files.append(fp)
        return fp

    def snapshot(self, name: str, psi: WaveField) -> Path:
        fp = write_snapshot(self.outdir.joinpath(name), psi)
        self.files.append(fp)
        return fp

    def manifest(self) -> Path:
        return write_manifest(self.outdir, self.files)


def cmd_ground_state(config: RunConfig, out: _Artifacts) -> int:
    c = _require_mass(config)
    result = minimize_on_sphere(c, config.params, config.solver, config.grid)
    summary = result.to_dict()
    summary["energy_report"] = energy_report(result.energy, result.chemical)
    if result.status == STATUS_CONVERGED and result.energy.E < 0:
        summary["qualitative"] = qualitative_diagnostics(result.field).to_dict()
    out.json("ground_state.json", summary)
    out.snapshot("ground_state.edgp", result.field)
    if result.status == STATUS_SPREADING:
        return EXIT_SPREADING
    return EXIT_OK if result.converged else EXIT_NOT_CONVERGED


def cmd_gamma_curve(config: RunConfig, out: _Artifacts) -> int:
    if not config.masses:
        raise ConfigError([("config", "masses_missing", "gamma-curve needs 'masses' (or --c-list)")])
    curve = gamma_curve(config.masses, config.params, config.solver, config.grid)
    out.csv("gamma_curve.csv", curve.to_frame())
    out.json(
        "gamma_curve.json",
        {
            "nonpositive": curve.is_nonpositive(),
            "nonincreasing": curve.is_nonincreasing(),
            "concave": curve.is_concave(),
            "valid_points": int(curve.valid.sum()),
        },
    )
    return EXIT_OK if curve.valid.any() else EXIT_NOT_CONVERGED


def cmd_gaussian_scan(config: RunConfig, out: _Artifacts) -> int:
    scan = gaussian_scan(config.params, default_shapes(), _default_masses(config))
    out.csv("gaussian_scan.csv", scan.frame)
    summary = scan.summary()
    out.json("gaussian_scan.json", summary)
    logger.info(summary["message"])
    return EXIT_OK


def cmd_evolve(config: RunConfig, out: _Artifacts) -> int:
    psi0 = initial_field(config)
    index = [0]

    def save(t, psi):
        out.snapshot(f"snapshots/psi_{index[0]:05d}.edgp", psi)
        index[0] += 1

    try:
        _, trace, _ = propagate(psi0, config.params, config.propagation, on_snapshot=save, keep_snapshots=False)
    except (UnderResolvedError, NumericalOverflowError) as e:
        logger.error(str(e))
        if e.trace is not None:
            out.csv("trace.csv", e.trace.to_frame())
        out.json("evolve.json", {"status": "under_resolved", "message": str(e)})
        return EXIT_UNDER_RESOLVED
    out.csv("trace.csv", trace.to_frame())
    out.json("evolve.json", {"status": "ok", "mass_drift": trace.mass_drift, "energy_drift": trace.energy_drift})
    return EXIT_OK


def cmd_scatter(config: RunConfig, out: _Artifacts) -> int:
    psi0 = initial_field(config)
    try:
        report = scattering_diagnostic(psi0, config.params, config.propagation, config.scattering)
    except NumericalOverflowError as e:
        logger.error(str(e))
        return EXIT_UNDER_RESOLVED
    out.json("scatter.json", report.to_dict())
    out.snapshot("psi_plus.edgp", report.psi_plus)
    if not report.cauchy_consistent:
        logger.warning(f"scatter: {report.message}")
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_thresholds(config: RunConfig, out: _Artifacts) -> int:
    report = threshold_report(config.params, config.grid, config.solver, masses=config.masses or None)
    out.json("thresholds.json", report.to_dict())
    return EXIT_OK


def _check(name: str, passed: bool, detail: str) -> Tuple[str, bool, str]:
    return name, bool(passed), detail


def verify_checks(config: RunConfig) -> List[Tuple[str, bool, str]]:
    """Fast invariant suite over every module"""
    params = config.params
    rng = np.random.default_rng(config.seed)
    small = Grid3D.cubic(32, 16.0)
    wide = Grid3D.cubic(64, 24.0)
    checks = []

    g64 = Grid3D.cubic(64, 16.0)
    nonzero = khat_table(g64)[g64.k_squared > 0]
    lo, hi = float(nonzero.min()), float(nonzero.max())
    ok = -FOUR_PI_THIRDS <= lo <= -FOUR_PI_THIRDS + 1e-3 and EIGHT_PI_THIRDS - 1e-3 <= hi <= EIGHT_PI_THIRDS
    checks.append(_check("kernel range", ok, f"[{lo:.6f}, {hi:.6f}]"))

    fields = [random_smooth_field(small, rng) for _ in range(100)]
    worst = max(
        abs(mass(f) - spectral_integral(np.abs(fft3(f.values, small)) ** 2, small)) / mass(f) for f in fields
    )
    checks.append(_check("parseval", worst < 1e-12, f"max rel error {worst:.1e}"))

    xi = multiplier_bound(params)
    ratio = max(abs(b_functional(f, params)) / (xi * norm_lp(f, 4) ** 4) for f in fields)
    checks.append(_check("B estimate", ratio <= 1 + 1e-8, f"max |B|/(Xi ||u||_4^4) = {ratio:.6f}"))

    untrapped = params.with_trap(None)
    worst = 0.0
    for s, t, c in ((2.0, 3.0, 1.5), (3.0, 2.0, 0.7), (2.5, 2.5, 2.0)):
        grid_E = energy(GaussianAnsatz(s, t, c).field(wide), untrapped).E
        exact = float(gaussian_energy(s, t, c, untrapped))
        worst = max(worst, abs(grid_E - exact) / abs(exact))
    checks.append(_check("gaussian closed form", worst < 1e-4, f"max rel error {worst:.1e}"))

    if params.p == 5 and params.lambda1 - FOUR_PI_THIRDS * params.lambda2 < 0 and params.lambda2 >= 0:
        tau = 1e6
        sigma = np.sqrt(tau)
        a = GaussianAnsatz(sigma, tau).coefficients(untrapped)
        value = -a.Btilde**3 / a.Ctilde**2
        rel = abs(value / printed_limit_a3(untrapped) - 1)
        checks.append(_check("printed A3 limit", rel < 1e-3, f"rel error {rel:.1e}"))

    u = GaussianAnsatz(2.5, 2.5, 1.0).field(small)
    parts = energy(u, untrapped)
    scaled = energy(rescale_mass_preserving(u, 1.1), untrapped)
    expect = scaled_energy(parts, 1.1, "mass_preserving", params.p)
    rel = abs(scaled.E - expect.E) / abs(expect.E)
    checks.append(_check("mass-preserving scaling", rel < 1e-5, f"rel error {rel:.1e}"))

    split = energy_split(u, params)
    full = energy(u, params).E
    rel = abs(split.E1 + split.E2 - full) / abs(full)
    checks.append(_check("E1 + E2 = E", rel < 1e-10, f"rel error {rel:.1e}"))

    # dE(u)[v] = 2 Re <G(u), v>
    f, v, eps = fields[1], fields[2], 1e-5
    numeric = (energy(f + eps * v, params).E - energy(f - eps * v, params).E) / (2 * eps)
    analytic = 2 * inner_product(energy_gradient(f, params), v).real
    rel = abs(numeric - analytic) / max(1.0, abs(analytic))
    checks.append(_check("energy gradient", rel < 1e-6, f"rel error {rel:.1e}"))

    # beta_pohozaev - beta_rayleigh = Q / (2m) for any field
    worst = 0.0
    for f in fields[:5]:
        chem = chemical_potential(f, params)
        expect = virial(f, params) / (2 * mass(f))
        gap = chem.beta_pohozaev - chem.beta_rayleigh
        worst = max(worst, abs(gap - expect) / max(1.0, abs(chem.beta_rayleigh)))
    checks.append(_check("chemical potential", worst < 1e-10, f"max rel gap {worst:.1e}"))

    # plane midway between nodes, so the equal split mirrors nodes onto nodes
    axis = 3 if params.lambda2 >= 0 else 1
    shift = [0.0, 0.0, 0.0]
    shift[axis - 1] = 0.75
    shifted = translate(GaussianAnsatz(2.0, 2.5, 1.0).field(small), shift)
    reflection = reflection_concavity_check(shifted, untrapped, mass(shifted), axis)
    bound = 1e-6 * max(1.0, abs(reflection.E_u))
    checks.append(
        _check("reflection inequality", reflection.defect <= bound, f"axis {axis}, E1 + E2 - 2E = {reflection.defect:.2e}")
    )

    C1 = None
    try:
        C1 = gn_constant(1.0, Grid3D.cubic(32, 24.0), cross_check=False).value
        audit = max(
            norm_lp(f, 4) ** 4 / (C1**4 * gradient_norm_sq(f) ** 1.5 * mass(f) ** 0.5) for f in fields
        )
        checks.append(_check("GN inequality", audit <= 1 + 1e-6, f"C1 = {C1:.8f}, worst ratio {audit:.4f}"))
    except GNConstantError as e:
        checks.append(_check("GN inequality", False, str(e)))

    if C1 is not None:
        c_a = mass_lower_bound_ca(untrapped, C1)
        if np.isinf(c_a):
            checks.append(_check("c_a consistency", True, "c_a infinite: B >= 0 for every field"))
        else:
            gaussian_min = min(gaussian_energy(s, t, 0.99 * c_a, untrapped) for s, t in default_shapes())
            field_min = min(energy(f * np.sqrt(0.5 * c_a / mass(f)), untrapped).E for f in fields[:10])
            witnesses = [w for w in (witness_mass(s, t, untrapped) for s, t in default_shapes()) if w is not None]
            ok = gaussian_min > 0 and field_min > 0 and all(w >= c_a for w in witnesses)
            detail = f"c_a = {c_a:.6g}, min Gaussian E {gaussian_min:.2e}, min field E {field_min:.2e}"
            checks.append(_check("c_a consistency", ok, detail))

    psi = fields[0] * 0.5
    m0 = mass(psi)
    for _ in range(5):
        psi = strang_step(psi, 1e-2, untrapped)
    rel = abs(mass(psi) - m0) / m0
    checks.append(_check("strang mass conservation", rel < 1e-12, f"rel drift {rel:.1e}"))

    # halving dt cuts the energy drift by about four
    packet = GaussianAnsatz(2.0, 2.0, 10.0).field(small)
    drifts = []
    for dt in (0.01, 0.005):
        run = PropagationConfig(dt=dt, t_end=0.2, snapshot_stride=1, conserve_tol_energy=1.0)
        _, trace, _ = propagate(packet, untrapped, run, keep_snapshots=False)
        drifts.append(trace.energy_drift)
    ratio = drifts[0] / max(drifts[1], np.finfo(float).tiny)
    checks.append(_check("strang energy drift order", ratio >= 3.5, f"drift {drifts[0]:.2e} -> {drifts[1]:.2e}, ratio {ratio:.2f}"))
    return checks


def cmd_verify(config: RunConfig, out: _Artifacts) -> int:
    with Timer("verify suite", logger) as t:
        checks = verify_checks(config)
    logger.info("\n" + tabulate(checks, headers=["check", "passed", "detail"]))
    failed = [name for name, passed, _ in checks if not passed]
    out.json(
        "verify.json",
        {"checks": [{"name": n, "passed": p, "detail": d} for n, p, d in checks], "failed": failed},
    )
    logger.info(f"{len(checks) - len(failed)}/{len(checks)} checks passed in {format_timespan(t.elapsed)}")
    return EXIT_OK if not failed else EXIT_VERIFY_FAILED


HANDLERS = {
    "ground-state": cmd_ground_state,
    "gamma-curve": cmd_gamma_curve,
    "gaussian-scan": cmd_gaussian_scan,
    "evolve": cmd_evolve,
    "scatter": cmd_scatter,
    "thresholds": cmd_thresholds,
    "verify": cmd_verify,
}


def run_command(name: str, config: RunConfig) -> int:
    if name not in HANDLERS:
        raise ValueError(f"unknown command {name!r}")
    outdir = Path(config.output_dir).joinpath(name)
    if not outdir.exists():
        logger.debug(f"creating output directory: {outdir}")
        outdir.mkdir(parents=True)
    out = _Artifacts(outdir)
    out.json("config.json", config.to_dict())
    try:
        status = HANDLERS[name](config, out)
    finally:
        out.manifest()
    logger.info(f"{name}: exit status {status}, {len(out.files)} artifacts in {outdir}")
    return status


def load_document(args) -> dict:
    doc = json.loads(Path(args.config).read_text()) if args.config else {}
    if args.params:
        text = args.params if args.params.lstrip().startswith("{") else Path(args.params).read_text()
        doc["params"] = json.loads(text)
    doc.setdefault("params", dict(DEFAULT_PARAMS))
    if args.outdir:
        doc["output_dir"] = args.outdir
    if args.seed is not None:
        doc["seed"] = args.seed
    if args.mass is not None:
        doc["mass"] = args.mass
    if args.masses:
        doc["masses"] = args.masses
    if args.dt is not None:
        doc.setdefault("propagation", {})["dt"] = args.dt
    if args.t_end is not None:
        doc.setdefault("propagation", {})["t_end"] = args.t_end
    if args.init:
        try:
            doc["init"] = {"gaussian": json.loads(args.init)}
        except json.JSONDecodeError:
            doc["init"] = {"snapshot": args.init}
    return doc


def main(args) -> int:
    try:
        config = parse_config(json.dumps(load_document(args)))
    except ConfigError as e:
        logger.error(f"invalid configuration:\n{e}")
        return EXIT_CONFIG
    except (OSError, json.JSONDecodeError) as e:
        logger.error(f"could not read configuration: {e}")
        return EXIT_CONFIG
    logger.info(f"regime {config.params.regime.value}, grid {config.grid.n} on {config.grid.length}")
    try:
        return run_command(args.command, config)
    except ConfigError as e:
        logger.error(f"invalid configuration:\n{e}")
        return EXIT_CONFIG
    except (UnderResolvedError, NumericalOverflowError) as e:
        logger.error(f"run aborted: {e}")
        return EXIT_UNDER_RESOLVED


class UsageArgumentParser(argparse.ArgumentParser):
    """Exits with status 64 on usage errors"""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def mass_list(text: str) -> List[float]:
    """Comma-separated masses, given inline or as the path of a file holding them"""
    if os.path.isfile(text):
        text = Path(text).read_text()
    try:
        return [float(item) for item in text.replace("\n", ",").split(",") if item.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = UsageArgumentParser(description=DESCRIPTION, allow_abbrev=False)
    parser.add_argument("command", choices=COMMANDS, help="what to run")
    parser.add_argument("--config", help="path to a JSON run configuration")
    parser.add_argument("--params", help="lambda1, lambda2, lambda3, p (and optional trap) as inline JSON or a JSON file path")
    parser.add_argument("--out", "--outdir", dest="outdir", help="output directory (overrides output_dir)")
    parser.add_argument("--seed", type=int, help="seed for random test fields")
    parser.add_argument("--c", "--mass", dest="mass", type=float, help="mass c for ground-state runs")
    masses = parser.add_mutually_exclusive_group()
    masses.add_argument("--c-list", dest="masses", type=mass_list, help="ascending masses for gamma-curve and gaussian-scan, comma-separated or a CSV file")
    masses.add_argument("--masses", dest="masses", type=float, nargs="+", help="ascending masses, space-separated")
    parser.add_argument("--init", help="initial field: snapshot path or Gaussian spec as JSON, e.g. '{\"sigma\": 2, \"tau\": 2, \"c\": 1}'")
    parser.add_argument("--dt", type=float, help="propagation time step")
    parser.add_argument("--t-end", dest="t_end", type=float, help="propagation end time (negative runs backward)")
    parser.add_argument("--log-json", action="store_true", help="emit log records as JSON")
    parser.add_argument("--debug", action="store_true", help="output debugging info")
    return parser


def setup_logging(json_format: bool = False) -> logging.Handler:
    handler = logging.StreamHandler()
    if json_format:
        from pythonjsonlogger import jsonlogger

        formatter = jsonlogger.JsonFormatter(
            fmt="%(asctime)s %(name)s %(lineno)d %(levelname)s %(message)s",
            datefmt="%H:%M:%S",
        )
    else:
        formatter = logging.Formatter(
            fmt="%(asctime)s %(name)s.%(lineno)d %(levelname)s : %(message)s",
            datefmt="%H:%M:%S",
        )
    handler.setFormatter(formatter)
    root_logger.addHandler(handler)
    root_logger.setLevel(logging.INFO)
    return handler


if __name__ == "__main__":
    total_start = timer()
    setup_logging(json_format="--log-json" in sys.argv[1:])
    logger.info(" ".join(sys.argv))
    logger.info("{:%Y-%m-%d %H:%M:%S}".format(datetime.now()))
    logger.info("pid: {}".format(os.getpid()))
    parser = build_parser()
    global args
    args = parser.parse_args()
    if args.debug:
        root_logger.setLevel(logging.DEBUG)
        logger.debug("debug mode is on")
    exit_code = main(args)
    total_end = timer()
    logger.info(
        "all finished. total time: {}".format(format_timespan(total_end - total_start))
    )
    sys.exit(exit_code)
