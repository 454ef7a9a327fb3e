"""
Tests for the dipolar multiplier, parameter validation, regimes and the B functional.
"""

import numpy as np
import pytest

from spectral_grid import Grid3D, WaveField, norm_lp, random_smooth_field
from dipolar_kernel import (
    FOUR_PI_THIRDS,
    EIGHT_PI_THIRDS,
    HarmonicTrap,
    ModelParams,
    ParameterError,
    RegimeLabel,
    khat,
    khat_table,
    interaction_symbol,
    multiplier_bound,
    xi_bound,
    b_functional,
    convolution_term,
    interaction_potential,
    energy_split,
    classify_regime,
)
from functionals import energy
from gaussian_ansatz import GaussianAnsatz, gaussian_energy_coeffs


class TestKhat:
    """Point values and range of the multiplier"""

    def test_axis_values(self):
        assert khat([0.0, 0.0, 2.0]) == pytest.approx(EIGHT_PI_THIRDS)
        assert khat([3.0, 0.0, 0.0]) == pytest.approx(-FOUR_PI_THIRDS)
        assert khat([0.0, -1.0, 0.0]) == pytest.approx(-FOUR_PI_THIRDS)

    def test_origin_is_zero(self):
        assert khat([0.0, 0.0, 0.0]) == 0.0

    def test_homogeneous_of_degree_zero(self, rng):
        xi = rng.standard_normal((20, 3))
        np.testing.assert_allclose(khat(xi), khat(7.5 * xi))

    def test_axis_average_vanishes(self):
        directions = np.vstack([np.eye(3), -np.eye(3)])
        assert np.mean(khat(directions)) == pytest.approx(0.0, abs=1e-15)

    def test_rejects_wrong_trailing_axis(self):
        with pytest.raises(ValueError):
            khat(np.zeros((4, 2)))

    def test_range_on_default_grid(self, grid):
        table = khat_table(grid)[grid.k_squared > 0]
        assert -FOUR_PI_THIRDS <= table.min() <= -FOUR_PI_THIRDS + 1e-3
        assert EIGHT_PI_THIRDS - 1e-3 <= table.max() <= EIGHT_PI_THIRDS + 1e-12

    def test_table_matches_pointwise(self, small_grid):
        k1, k2, k3 = (np.broadcast_to(k, small_grid.n) for k in small_grid.kmeshes)
        pointwise = khat(np.stack([k1, k2, k3], axis=-1))
        np.testing.assert_allclose(khat_table(small_grid), pointwise, atol=1e-14)


class TestParameters:
    """Validation collects every violated constraint"""

    def test_valid(self, params_a3):
        assert params_a3.p == 5.0

    @pytest.mark.parametrize(
        "kwargs, code",
        [
            (dict(lambda1=1.0, lambda2=0.0, lambda3=0.0, p=5.0), "lambda3_nonpositive"),
            (dict(lambda1=1.0, lambda2=0.0, lambda3=1.0, p=7.0), "p_out_of_range"),
            (dict(lambda1=1.0, lambda2=0.0, lambda3=1.0, p=4.0), "p_out_of_range"),
            (dict(lambda1=0.0, lambda2=0.0, lambda3=1.0, p=5.0), "nondegeneracy"),
            (dict(lambda1=1.0, lambda2=0.0, lambda3=1.0, p=5.0, trap=HarmonicTrap(0.0, 1.0)), "trap_invalid"),
        ],
    )
    def test_single_violation(self, kwargs, code):
        with pytest.raises(ParameterError) as excinfo:
            ModelParams(**kwargs)
        assert excinfo.value.codes == [code]

    def test_p6_allowed(self):
        assert ModelParams(1.0, 0.0, 1.0, 6.0).p == 6.0

    def test_all_violations_reported(self):
        with pytest.raises(ParameterError) as excinfo:
            ModelParams(lambda1=0.0, lambda2=0.0, lambda3=-1.0, p=7.0)
        assert set(excinfo.value.codes) == {"lambda3_nonpositive", "p_out_of_range", "nondegeneracy"}
        assert "p out of (4,6]" in str(excinfo.value)

    def test_dict_roundtrip(self):
        params = ModelParams(0.5, -0.2, 2.0, 5.5, HarmonicTrap(2.0, 0.5))
        assert ModelParams.from_dict(params.to_dict()) == params

    def test_with_trap(self, params_a1):
        trapped = params_a1.with_trap(HarmonicTrap())
        assert trapped.trap == HarmonicTrap(1.0, 1.0)
        assert trapped.with_trap(None) == params_a1


class TestRegimes:
    """Classification into A1-A4"""

    def test_fixtures(self, params_a1, params_a2, params_a3, params_a4):
        assert classify_regime(params_a1) is RegimeLabel.A1
        assert classify_regime(params_a2) is RegimeLabel.A2
        assert classify_regime(params_a3) is RegimeLabel.A3
        assert classify_regime(params_a4) is RegimeLabel.A4

    def test_boundaries_belong_to_stable_side(self):
        assert ModelParams(FOUR_PI_THIRDS, 1.0, 1.0, 5.0).regime is RegimeLabel.A1
        assert ModelParams(EIGHT_PI_THIRDS, -1.0, 1.0, 5.0).regime is RegimeLabel.A2

    def test_b_sign(self):
        assert not RegimeLabel.A1.b_can_be_negative
        assert not RegimeLabel.A2.b_can_be_negative
        assert RegimeLabel.A3.b_can_be_negative
        assert RegimeLabel.A4.b_can_be_negative


class TestBounds:
    """Interaction constants"""

    def test_multiplier_bound(self):
        params = ModelParams(1.0, 1.0, 1.0, 5.0)
        assert multiplier_bound(params) == pytest.approx(1.0 + EIGHT_PI_THIRDS)
        params = ModelParams(0.0, -1.0, 1.0, 5.0)
        assert multiplier_bound(params) == pytest.approx(EIGHT_PI_THIRDS)

    def test_xi_bound_scaling(self, params_a3):
        assert xi_bound(params_a3) == pytest.approx(multiplier_bound(params_a3) / (2 * np.pi) ** 3)

    def test_symbol_bounded_by_multiplier(self, small_grid, params_a4):
        assert np.abs(interaction_symbol(small_grid, params_a4)).max() <= multiplier_bound(params_a4) + 1e-12


class TestBFunctional:
    """B(u) and its optimal estimate"""

    def test_contact_only_is_l4(self, small_grid, rng):
        params = ModelParams(2.0, 0.0, 1.0, 5.0)
        f = random_smooth_field(small_grid, rng)
        assert b_functional(f, params) == pytest.approx(2.0 * norm_lp(f, 4) ** 4, rel=1e-12)

    def test_estimate_on_random_fields(self, small_grid, rng, params_a3, params_a4):
        for params in (params_a3, params_a4, ModelParams(1.0, 1.0, 1.0, 5.0)):
            bound = multiplier_bound(params)
            for _ in range(34):
                f = random_smooth_field(small_grid, rng)
                assert abs(b_functional(f, params)) <= bound * norm_lp(f, 4) ** 4 * (1 + 1e-8)

    def test_near_saturation(self):
        # pancake density: spectrum concentrated along xi3
        grid = Grid3D(n=(32, 32, 640), length=160.0)
        params = ModelParams(10.0, 1.0, 1.0, 5.0)
        u = GaussianAnsatz(32.0, 1.0).field(grid)
        ratio = b_functional(u, params) / (multiplier_bound(params) * norm_lp(u, 4) ** 4)
        assert 0.95 < ratio <= 1.0

    def test_gaussian_closed_form(self):
        grid = Grid3D(n=(32, 32, 640), length=160.0)
        params = ModelParams(10.0, 1.0, 1.0, 5.0)
        c = 3.0
        u = GaussianAnsatz(32.0, 1.0, c).field(grid)
        _, Btilde, _ = gaussian_energy_coeffs(32.0, 1.0, params)
        assert b_functional(u, params) == pytest.approx(2 * Btilde * c**2, rel=1e-5)

    def test_radial_density_has_no_dipolar_energy(self, small_grid):
        u = WaveField(small_grid, np.exp(-small_grid.radius**2))
        dipolar = small_grid.cell_volume * np.sum(convolution_term(u).values.real * np.abs(u.values) ** 2)
        assert abs(dipolar) <= 1e-12 * norm_lp(u, 4) ** 4

    def test_interaction_potential(self, small_grid, rng, params_a4):
        u = random_smooth_field(small_grid, rng)
        expected = params_a4.lambda1 * np.abs(u.values) ** 2 + params_a4.lambda2 * convolution_term(u).values.real
        np.testing.assert_allclose(interaction_potential(u, params_a4), expected, atol=1e-12)


class TestEnergySplit:
    """E = E1 + E2 through the axial weight"""

    def test_sum_is_energy(self, small_grid, rng, params_a3):
        u = random_smooth_field(small_grid, rng)
        split = energy_split(u, params_a3)
        assert split.E1 + split.E2 == pytest.approx(energy(u, params_a3).E, rel=1e-10)

    def test_sum_with_trap(self, small_grid, rng, params_a4):
        params = params_a4.with_trap(HarmonicTrap(0.5, 2.0))
        u = random_smooth_field(small_grid, rng)
        split = energy_split(u, params)
        assert split.E1 + split.E2 == pytest.approx(energy(u, params).E, rel=1e-10)

    def test_e2_identity(self, small_grid, rng, params_a3):
        u = random_smooth_field(small_grid, rng)
        B = b_functional(u, params_a3)
        l4 = norm_lp(u, 4) ** 4
        expected = 0.5 * B - 0.5 * (params_a3.lambda1 - FOUR_PI_THIRDS * params_a3.lambda2) * l4
        assert energy_split(u, params_a3).E2 == pytest.approx(expected, rel=1e-10)

    def test_strict_printed_drops_lambda3(self, small_grid, rng):
        params = ModelParams(0.0, 1.0, 3.0, 5.0)
        u = random_smooth_field(small_grid, rng)
        lp = norm_lp(u, 5) ** 5
        strict = energy_split(u, params, strict_printed=True)
        full = energy_split(u, params)
        assert full.E1 - strict.E1 == pytest.approx((2 / 5) * 2.0 * lp, rel=1e-10)
        assert full.E2 == strict.E2


class TestTrap:
    """Harmonic trap potential"""

    def test_potential(self, small_grid):
        V = HarmonicTrap(2.0, 0.5).potential(small_grid)
        x1, x2, x3 = small_grid.coordinates()
        np.testing.assert_allclose(V, 2.0 * x1**2 + 0.5 * x2**2 + x3**2)
