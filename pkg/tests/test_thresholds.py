"""
Tests for the Gagliardo-Nirenberg constant and the mass threshold report.
"""

import numpy as np
import pytest

import thresholds
from spectral_grid import Grid3D, WaveField, mass, random_smooth_field
from dipolar_kernel import HarmonicTrap, RegimeLabel
from functionals import energy
from gaussian_ansatz import default_shapes, gaussian_energy, log_shapes, mass_lower_bound_ca, witness_mass
from ground_state import CriticalMassEstimate, InvalidBracketError
from thresholds import (
    GNConstant,
    gn_constant,
    gn_constant_direct,
    gn_constant_shooting,
    petviashvili,
    resolvable_shapes,
    threshold_report,
    weinstein_quotient,
)

# sup of the cubic Weinstein quotient, 2 / ||psi||_2^2 for the rescaled ground state
GN_POWER = 0.04064
C1 = GN_POWER**0.25

COARSE = Grid3D.cubic(32, 24.0)


class TestWeinsteinQuotient:
    """The scale-invariant quotient"""

    def test_gaussian_value(self, grid):
        u = WaveField(grid, np.exp(-0.5 * grid.radius**2))
        assert weinstein_quotient(u) == pytest.approx((3 * np.pi) ** -1.5, rel=1e-9)

    def test_scale_invariance(self, grid):
        u = WaveField(grid, np.exp(-0.5 * grid.radius**2))
        v = WaveField(grid, 3.0 * np.exp(-0.5 * grid.radius**2 / 1.44))
        assert weinstein_quotient(v) == pytest.approx(weinstein_quotient(u), rel=1e-9)

    def test_below_sharp_constant(self, small_grid, rng):
        for _ in range(100):
            assert weinstein_quotient(random_smooth_field(small_grid, rng)) < GN_POWER

    def test_zero_field(self, small_grid):
        with pytest.raises(ValueError):
            weinstein_quotient(WaveField.zeros(small_grid))


class TestLowerThreshold:
    """Energy is positive on every sphere below c_a"""

    @pytest.mark.parametrize("regime", ["params_a3", "params_a4"])
    def test_random_fields_below_ca(self, regime, small_grid, rng, request):
        params = request.getfixturevalue(regime)
        c_a = mass_lower_bound_ca(params, C1)
        assert 0 < c_a < np.inf
        for _ in range(20):
            f = random_smooth_field(small_grid, rng)
            assert energy(f * np.sqrt(0.5 * c_a / mass(f)), params).E > 0

    @pytest.mark.parametrize("regime", ["params_a3", "params_a4"])
    def test_gaussians_below_ca(self, regime, request):
        params = request.getfixturevalue(regime)
        c_a = mass_lower_bound_ca(params, C1)
        energies = [gaussian_energy(s, t, 0.99 * c_a, params) for s, t in default_shapes()]
        assert min(energies) > 0
        witnesses = [witness_mass(s, t, params) for s, t in default_shapes()]
        assert min(w for w in witnesses if w is not None) >= c_a


class TestGNConstant:
    """Direct maximization and ODE shooting"""

    def test_value_must_be_positive(self):
        with pytest.raises(ValueError):
            GNConstant(sigma=1.0, value=0.0)

    def test_gap_and_dict(self):
        c = GNConstant(sigma=1.0, value=0.5, cross_check=0.5005)
        assert c.relative_gap == pytest.approx(1e-3)
        assert c.power == pytest.approx(0.5**4)
        assert GNConstant(sigma=1.0, value=0.5).relative_gap is None
        assert c.to_dict()["relative_gap"] == pytest.approx(1e-3)

    def test_sigma_range(self):
        with pytest.raises(ValueError):
            gn_constant_shooting(2.0)
        with pytest.raises(ValueError):
            gn_constant_direct(0.0, COARSE)

    def test_shooting(self):
        result = gn_constant_shooting(1.0)
        assert result.method == "ode_ground_state"
        assert result.power == pytest.approx(GN_POWER, rel=1e-3)

    def test_petviashvili_solves_ground_state_equation(self):
        seed = np.exp(-0.5 * COARSE.radius**2)
        u, residual, iterations = petviashvili(seed, COARSE, 1.0)
        assert residual < 1e-8
        assert iterations < 2000
        # -Lap Q + Q = Q^3 has Q(0) ~ 4.34
        assert u.max() == pytest.approx(4.34, rel=1e-2)

    def test_direct_on_coarse_grid(self):
        result = gn_constant_direct(1.0, COARSE)
        assert result.method == "direct_maximization"
        assert result.power == pytest.approx(GN_POWER, rel=1e-3)

    def test_cross_check_on_coarse_grid(self):
        result = gn_constant(1.0, COARSE)
        assert result.cross_check is not None
        assert result.relative_gap < 1e-3

    @pytest.mark.slow
    def test_routes_agree(self):
        result = gn_constant(1.0)
        assert result.relative_gap < 1e-4
        assert result.power == pytest.approx(GN_POWER, rel=1e-4)


class TestResolvableShapes:
    """Gaussian shapes the grid can represent"""

    def test_filter(self, grid):
        shapes = [(0.5, 2.0), (1.0, 1.0), (2.0, 5.0), (2.0, 6.0)]
        assert resolvable_shapes(shapes, grid) == [(1.0, 1.0), (2.0, 5.0)]


class TestThresholdReport:
    """c_a, c_c and the bracketed c_b"""

    SHAPES = log_shapes("sqrt_tau", 1.0, 1e3, 25)

    @pytest.fixture
    def fake_cb(self, monkeypatch):
        brackets = []

        def fake(params, config, bracket, grid):
            brackets.append(bracket)
            lo, hi = bracket
            mid = 0.5 * (lo + hi)
            return CriticalMassEstimate(value=mid, width=0.01 * mid, lo=0.995 * mid, hi=1.005 * mid, bisections=3, gamma_hi=-1.0)

        monkeypatch.setattr(thresholds, "estimate_cb", fake)
        return brackets

    def test_stable_regime(self, params_a1):
        report = threshold_report(params_a1, C1=C1)
        assert report.regime is RegimeLabel.A1
        assert report.c_a == np.inf
        assert report.ordering_ok
        assert report.c_b is None
        assert "c_a" in report.table()

    def test_trap_rejected(self, params_a3):
        with pytest.raises(ValueError, match="untrapped"):
            threshold_report(params_a3.with_trap(HarmonicTrap()), C1=C1)

    def test_ordering(self, fake_cb, params_a3, grid):
        report = threshold_report(params_a3, grid, C1=C1, shapes=self.SHAPES)
        assert report.c_c_all_shapes <= report.c_c
        assert report.c_a <= report.c_c
        (lower, upper), = fake_cb
        assert lower == pytest.approx(report.c_a)
        assert upper == pytest.approx(1.05 * report.c_c)
        assert report.ordering_ok
        assert report.message == "c_a <= c_b <= c_c"
        d = report.to_dict()
        assert d["regime"] == "A3"
        assert d["c_b_estimate"] == report.c_b.value

    @pytest.mark.parametrize("where", ["above_cc", "below_ca"])
    def test_ordering_violated(self, params_a3, grid, monkeypatch, where):
        def misplaced(params, config, bracket, grid):
            lo, hi = bracket
            value = 0.99 * hi if where == "above_cc" else 0.5 * lo
            return CriticalMassEstimate(value=value, width=0.002 * value, lo=0.999 * value, hi=1.001 * value, bisections=3, gamma_hi=-1.0)

        monkeypatch.setattr(thresholds, "estimate_cb", misplaced)
        report = threshold_report(params_a3, grid, C1=C1, shapes=self.SHAPES)
        assert not report.ordering_ok
        assert report.message == "threshold ordering violated"

    def test_rejected_bracket(self, params_a4, grid, monkeypatch):
        def reject(*args, **kwargs):
            raise InvalidBracketError("gamma(1) = 0 is not negative")

        monkeypatch.setattr(thresholds, "estimate_cb", reject)
        report = threshold_report(params_a4, grid, C1=C1)
        assert report.c_b is None
        assert not report.ordering_ok
        assert report.message.startswith("c_b bracket rejected")

    def test_no_resolvable_witness(self, fake_cb, params_a3, grid):
        report = threshold_report(params_a3, grid, C1=C1, shapes=[(100.0, 1e4)])
        assert report.c_c is None
        assert report.c_c_all_shapes is not None
        assert report.message == "no resolvable Gaussian witness; c_b not bracketed"
        assert fake_cb == []

    @pytest.mark.slow
    def test_full_report(self, params_a3):
        report = threshold_report(params_a3, Grid3D.cubic(64, 24.0), C1=C1)
        assert report.c_b is not None
        assert report.ordering_ok
