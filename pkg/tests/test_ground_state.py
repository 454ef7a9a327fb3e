"""
Tests for the constrained minimizer, gamma curves, c_b bisection, reflections and shape diagnostics.
"""

from types import SimpleNamespace

import numpy as np
import pytest

import ground_state
from spectral_grid import Grid3D, WaveField, mass, random_smooth_field
from dipolar_kernel import HarmonicTrap, ModelParams
from functionals import hamiltonian_action
from gaussian_ansatz import GaussianAnsatz, default_shapes, gaussian_scan, mass_lower_bound_ca
from ground_state import (
    NO_MINIMIZER,
    STATUS_CONVERGED,
    STATUS_SPREADING,
    GammaCurve,
    InvalidBracketError,
    SolverConfig,
    _pick_best,
    decay_fit,
    energy_gradient,
    estimate_cb,
    gamma_curve,
    half_space_integral,
    minimize_on_sphere,
    qualitative_diagnostics,
    reflection_concavity_check,
    reflection_extension,
    split_mass_plane,
)
from thresholds import resolvable_shapes

# sharp cubic Gagliardo-Nirenberg constant
GN_C1 = 0.04064**0.25


@pytest.fixture(scope="module")
def trap_grid():
    return Grid3D.cubic(32, 12.0)


@pytest.fixture(scope="module")
def trapped_state(trap_grid):
    params = ModelParams(1.0, 0.1, 1.0, 5.0, HarmonicTrap())
    return minimize_on_sphere(0.1, params, SolverConfig(workers=2, residual_tol=1e-6, energy_tol=1e-16), trap_grid)


class TestSolverConfig:
    """Solver settings"""

    def test_defaults(self):
        config = SolverConfig()
        assert config.dt == 0.05
        assert len(config.restarts) == 3

    def test_rejects_bad_values(self):
        with pytest.raises(ValueError):
            SolverConfig(dt=0.0)
        with pytest.raises(ValueError):
            SolverConfig(max_iters=0)
        with pytest.raises(ValueError):
            SolverConfig(restarts=())

    def test_dict_roundtrip(self):
        config = SolverConfig(dt=0.1, restarts=(GaussianAnsatz(1.0, 3.0),))
        assert SolverConfig.from_dict(config.to_dict()) == config


class TestFlow:
    """Normalized gradient flow"""

    def test_gradient_is_hamiltonian_action(self, small_grid, rng, params_a3):
        u = random_smooth_field(small_grid, rng)
        np.testing.assert_array_equal(energy_gradient(u, params_a3).values, hamiltonian_action(u, params_a3))

    def test_trapped_ground_state(self, trapped_state):
        assert trapped_state.converged
        assert trapped_state.status == STATUS_CONVERGED
        assert trapped_state.monotone
        assert np.all(np.diff(trapped_state.energy_history) <= 1e-12)
        assert trapped_state.energy.mass == pytest.approx(0.1, rel=1e-12)

    def test_trapped_chemical_potential(self, trapped_state):
        # nearly linear: -1/2 Lap + |x|^2 has ground level 3/sqrt(2)
        chem = trapped_state.chemical
        assert chem.beta_rayleigh == pytest.approx(-3 / np.sqrt(2), abs=0.05)
        assert chem.beta_rayleigh < -3 / np.sqrt(2)
        assert chem.beta_pohozaev == pytest.approx(chem.beta_rayleigh, rel=1e-3)
        assert abs(trapped_state.energy.Q) <= 1e-4 * trapped_state.energy.A

    def test_spreading_in_stable_regime(self, small_grid, params_a1):
        config = SolverConfig(restarts=(GaussianAnsatz(1.5, 1.5),))
        result = minimize_on_sphere(0.5, params_a1, config, small_grid)
        assert result.status == STATUS_SPREADING
        assert not result.converged
        assert result.gamma == 0.0

    def test_nonpositive_mass(self, params_a3):
        with pytest.raises(ValueError):
            minimize_on_sphere(0.0, params_a3)

    def test_result_dict(self, trapped_state):
        d = trapped_state.to_dict()
        assert d["status"] == STATUS_CONVERGED
        assert d["beta_positive"] is False
        assert set(d["energy"]) >= {"A", "B", "C", "V", "E", "Q", "mass"}


class TestPickBest:
    """Selection among restarts"""

    @staticmethod
    def fake(E, residual, converged=True):
        return SimpleNamespace(
            energy=SimpleNamespace(E=E), chemical=SimpleNamespace(residual_norm=residual), converged=converged
        )

    def test_lowest_energy_wins(self):
        results = [self.fake(-1.0, 1e-3), self.fake(-2.0, 1e-2), self.fake(-0.5, 1e-8)]
        assert _pick_best(results) is results[1]

    def test_tie_goes_to_smaller_residual(self):
        results = [self.fake(-2.0, 1e-3), self.fake(-2.0 + 1e-12, 1e-6)]
        best = _pick_best(results)
        assert best is results[1]
        assert best.alternatives == [results[0]]

    def test_unconverged_are_not_alternatives(self):
        results = [self.fake(-2.0, 1e-6), self.fake(-2.0 + 1e-8, 1e-3, converged=False)]
        assert _pick_best(results).alternatives == []


class TestGammaCurve:
    """gamma(c) bookkeeping"""

    def test_shape_checks(self):
        curve = GammaCurve(
            masses=[1.0, 2.0, 3.0, 4.0],
            gammas=[0.0, -1.0, -3.0, np.nan],
            energies=[0.5, -1.0, -3.0, np.nan],
            statuses=[STATUS_SPREADING, STATUS_CONVERGED, STATUS_CONVERGED, "invalid"],
            witnesses=[NO_MINIMIZER, "in-memory", "in-memory", "invalid"],
        )
        assert curve.valid.tolist() == [True, True, True, False]
        assert curve.is_nonpositive()
        assert curve.is_nonincreasing()
        assert curve.is_concave()
        assert list(curve.to_frame().columns) == ["c", "gamma", "E_best", "status", "witness"]

    def test_convexity_detected(self):
        curve = GammaCurve([1.0, 2.0, 3.0], [-3.0, -4.0, -4.5], [0, 0, 0], ["converged"] * 3, ["in-memory"] * 3)
        assert curve.is_nonincreasing()
        assert not curve.is_concave()

    def test_masses_must_ascend(self, params_a3):
        with pytest.raises(ValueError):
            GammaCurve([2.0, 1.0], [0.0, 0.0], [0.0, 0.0], ["x", "x"], ["x", "x"])
        with pytest.raises(ValueError):
            gamma_curve([3.0, 2.0], params_a3)

    def test_stable_trapped_curve_has_no_witness(self, trap_grid):
        params = ModelParams(1.0, 0.1, 1.0, 5.0, HarmonicTrap())
        curve = gamma_curve([0.05, 0.1], params, SolverConfig(), trap_grid)
        assert curve.witnesses == [NO_MINIMIZER, NO_MINIMIZER]
        assert curve.gammas == [0.0, 0.0]
        assert all(E > 0 for E in curve.energies)


class TestCriticalMass:
    """Bisection on gamma(c) < 0"""

    @pytest.fixture
    def fake_gamma(self, monkeypatch):
        calls = []

        def fake(c, params, config=None, grid=None, initial_fields=()):
            calls.append(c)
            return SimpleNamespace(gamma=min(0.0, -(c - 10.0)))

        monkeypatch.setattr(ground_state, "minimize_on_sphere", fake)
        return calls

    def test_bisection(self, fake_gamma, params_a3):
        estimate = estimate_cb(params_a3, bracket=(1.0, 40.0))
        assert estimate.lo <= 10.0 <= estimate.hi
        assert estimate.width <= 0.05 * estimate.value
        assert estimate.value == pytest.approx(10.0, rel=0.05)
        assert estimate.gamma_hi == -30.0
        assert fake_gamma[:2] == [40.0, 1.0]

    def test_lower_end_already_negative(self, fake_gamma, params_a3):
        with pytest.raises(InvalidBracketError, match="already negative"):
            estimate_cb(params_a3, bracket=(20.0, 40.0))

    def test_upper_end_not_negative(self, fake_gamma, params_a3):
        with pytest.raises(InvalidBracketError, match="not negative"):
            estimate_cb(params_a3, bracket=(1.0, 5.0))

    def test_stable_regimes_rejected(self, params_a1, params_a2):
        for params in (params_a1, params_a2):
            with pytest.raises(InvalidBracketError, match="never negative"):
                estimate_cb(params)

    def test_bad_bracket(self, params_a3):
        with pytest.raises(InvalidBracketError):
            estimate_cb(params_a3, bracket=(5.0, 1.0))


class TestReflections:
    """Reflection extensions across coordinate planes"""

    @pytest.fixture
    def gauss(self, small_grid):
        return GaussianAnsatz(2.0, 1.5, 2.0).field(small_grid)

    def test_symmetric_field_is_unchanged(self, gauss):
        for side in (1, 2):
            mirrored = reflection_extension(gauss, 3, side, 0.0)
            np.testing.assert_allclose(mirrored.values, gauss.values, atol=1e-12)

    def test_half_space_mass(self, gauss):
        total = mass(gauss)
        assert half_space_integral(gauss, 3, 0.0) == pytest.approx(total / 2, rel=1e-12)
        assert half_space_integral(gauss, 3, 0.0, side=2) == pytest.approx(total / 2, rel=1e-12)

    def test_extension_mass_doubles_half_space(self, gauss):
        # plane midway between nodes mirrors nodes onto nodes
        u1 = reflection_extension(gauss, 1, 1, 0.75)
        assert mass(u1) == pytest.approx(2 * half_space_integral(gauss, 1, 0.75), rel=1e-10)

    def test_split_plane(self, gauss):
        assert split_mass_plane(gauss, 3, mass(gauss)) == pytest.approx(0.0, abs=1e-6)
        t = split_mass_plane(gauss, 2, 1.2)
        assert mass(reflection_extension(gauss, 2, 1, t)) == pytest.approx(1.2, rel=1e-6)

    def test_concavity_check_masses(self, gauss, params_a3):
        check = reflection_concavity_check(gauss, params_a3, 1.5, 3)
        assert check.c1 == pytest.approx(1.5, rel=1e-6)
        assert check.c2 > check.c1
        assert np.isfinite(check.defect)

    def test_invalid_axis_and_plane(self, gauss):
        with pytest.raises(ValueError):
            reflection_extension(gauss, 0, 1, 0.0)
        with pytest.raises(ValueError):
            reflection_extension(gauss, 1, 3, 0.0)
        with pytest.raises(ValueError):
            reflection_extension(gauss, 1, 1, 9.0)
        with pytest.raises(ValueError):
            split_mass_plane(gauss, 1, 3 * mass(gauss))


class TestDiagnostics:
    """Phase, symmetry and decay of a candidate minimizer"""

    def test_axisymmetric_gaussian(self, small_grid):
        u = GaussianAnsatz(2.0, 3.0).field(small_grid)
        report = qualitative_diagnostics(WaveField(small_grid, np.exp(0.3j) * u.values))
        assert report.phase_deviation < 1e-10
        assert report.min_modulus_core > 0
        assert report.axial_defect < 1e-5
        assert report.planar_defect < 1e-8
        assert report.radial_defect > 0.05

    def test_exponential_tail(self, grid):
        u = WaveField(grid, np.exp(-2 * grid.radius))
        slope, r2, points = decay_fit(u)
        assert slope == pytest.approx(-2.0, abs=0.05)
        assert r2 > 0.999
        assert points >= 3

    def test_too_few_points(self, small_grid):
        slope, r2, points = decay_fit(WaveField(small_grid, np.ones(small_grid.n)))
        assert np.isnan(slope)
        assert points == 0


@pytest.mark.slow
class TestUnstableRegimeGroundState:
    """Acceptance-scale minimizer in the cigar regime"""

    @pytest.fixture(scope="class")
    def state(self):
        params = ModelParams(0.0, 1.0, 1.0, 5.0)
        config = SolverConfig(
            max_iters=40000,
            residual_tol=1e-6,
            energy_tol=1e-16,
            restarts=(GaussianAnsatz(1.7, 5.0), GaussianAnsatz(2.0, 4.0)),
        )
        return minimize_on_sphere(40.0, params, config, Grid3D.cubic(64, 24.0))

    def test_pohozaev_identities(self, state):
        assert state.converged
        assert state.energy.E < 0
        assert abs(state.energy.Q) <= 1e-4 * state.energy.A
        assert state.chemical.beta_pohozaev == pytest.approx(state.chemical.beta_rayleigh, rel=1e-4)
        assert state.chemical.beta_rayleigh > 0

    def test_reflection_inequality(self, state):
        params = ModelParams(0.0, 1.0, 1.0, 5.0)
        check = reflection_concavity_check(state.field, params, mass(state.field), 3)
        assert check.c1 == pytest.approx(mass(state.field), rel=1e-6)
        assert check.E_side1 + check.E_side2 <= 2 * check.E_u + 1e-6

    def test_shape(self, state):
        report = qualitative_diagnostics(state.field)
        assert report.phase_deviation < 1e-6
        assert report.axial_defect < 1e-3
        assert report.planar_defect < 1e-3
        assert report.decay_slope < 0

    def test_gamma_curve(self):
        params = ModelParams(0.0, 1.0, 1.0, 5.0)
        config = SolverConfig(max_iters=20000, restarts=(GaussianAnsatz(1.7, 5.0),))
        curve = gamma_curve([40.0, 50.0, 60.0], params, config, Grid3D.cubic(64, 24.0))
        assert curve.witnesses == ["in-memory"] * 3
        assert curve.is_nonpositive()
        assert curve.is_nonincreasing()
        assert curve.is_concave(slack=1e-3)

    def test_gamma_curve_across_thresholds(self):
        params = ModelParams(0.0, 1.0, 1.0, 5.0)
        grid = Grid3D.cubic(48, 24.0)
        c_a = mass_lower_bound_ca(params, GN_C1)
        witness = gaussian_scan(params, resolvable_shapes(default_shapes(), grid), np.logspace(-1, 4, 51)).refined_witness
        c_c = witness["c"]
        masses = np.geomspace(c_a / 2, 4 * c_c, 12)
        seeds = (GaussianAnsatz(witness["sigma"], witness["tau"]), GaussianAnsatz(1.7, 5.0))
        config = SolverConfig(max_iters=20000, restarts=seeds)
        curve = gamma_curve(masses, params, config, grid)
        assert curve.valid.all()
        assert curve.is_nonpositive()
        assert curve.is_nonincreasing()
        assert curve.is_concave()
        gammas = np.asarray(curve.gammas)
        assert np.all(gammas[masses < c_a] == 0.0)
        assert np.all(gammas[masses >= 2 * c_c] < 0)


@pytest.mark.slow
class TestPancakeRegimeGroundState:
    """Minimizer with negative lambda2 reflected across a plane normal to x1"""

    def test_reflection_inequality(self):
        params = ModelParams(0.0, -1.0, 1.0, 5.0)
        grid = Grid3D.cubic(64, 24.0)
        witness = gaussian_scan(params, resolvable_shapes(default_shapes(), grid), np.logspace(-1, 4, 51)).refined_witness
        assert witness is not None
        c = 1.5 * witness["c"]
        config = SolverConfig(max_iters=20000, restarts=(GaussianAnsatz(witness["sigma"], witness["tau"]),))
        state = minimize_on_sphere(c, params, config, grid)
        assert state.status != STATUS_SPREADING
        assert state.energy.E < 0
        check = reflection_concavity_check(state.field, params, c, 1)
        assert check.E_side1 + check.E_side2 <= 2 * check.E_u + 1e-6
