import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from agechemostat import (
    Cell,
    ModelParams,
    age_weighted_integral,
    cell_integral,
    exp_interp_params,
    output_integral,
    reflected_weighted_integral,
    renewal_integral,
)
from agechemostat.errors import NonPositiveInterior
from agechemostat.model import family_initial_profile

from conftest import GAIN, reference_model
from oracles import (
    I_cell,
    I_merged,
    J_cell,
    J_merged,
    K_cell,
    exp_integral,
    exp_moment,
    exp_reflected,
)

H = 0.04


def exp_cell(C, sigma, j, h=H):
    return Cell(C * math.exp(sigma * j * h), C * math.exp(sigma * (j + 1) * h), j, h)


def merged_cell(C, sigma, h=H):
    return Cell(C * math.exp(sigma * h), C * math.exp(2 * sigma * h), 2, h, merged=True)


def rel(a, b):
    return abs(float(a) - float(b)) / abs(float(b))


class TestInterpolation:
    def test_constant(self):
        sigma, C = exp_interp_params(Cell(1.0, 1.0, 5, H))
        assert sigma == 0.0 and C == 1.0

    def test_unit_rate(self):
        sigma, C = exp_interp_params(Cell(1.0, math.exp(0.04), 0, 0.04))
        assert sigma == pytest.approx(1.0, rel=1e-12)
        assert C == pytest.approx(1.0, rel=1e-12)

    def test_equilibrium_cells(self, model):
        f = model.f_star
        j = np.arange(model.N)
        sigma, C = exp_interp_params(Cell(f[j], f[j + 1], j, model.h))
        np.testing.assert_allclose(sigma, -1.1, rtol=1e-10)
        np.testing.assert_allclose(C, 1.0, rtol=1e-10)

    def test_merged_node(self):
        sigma, C = exp_interp_params(merged_cell(3.0, -2.0))
        assert sigma == pytest.approx(-2.0, rel=1e-12)
        assert C == pytest.approx(3.0, rel=1e-12)


class TestCellValues:
    def test_equal_values(self):
        assert cell_integral(Cell(3.0, 3.0, 4, 0.04)) == pytest.approx(0.12, rel=1e-14)
        assert cell_integral(Cell(2.5, 2.5, 2, 0.04, merged=True)) == pytest.approx(0.2, rel=1e-14)
        assert age_weighted_integral(Cell(1.0, 1.0, 3, 0.04)) == pytest.approx(0.0056, rel=1e-13)
        assert age_weighted_integral(Cell(1.7, 1.7, 2, 0.04, merged=True)) == pytest.approx(2 * 0.0016 * 1.7, rel=1e-13)
        assert reflected_weighted_integral(Cell(1.0, 1.0, 30, 0.04)) == pytest.approx(0.0312, rel=1e-13)

    def test_unit_exponential(self):
        assert cell_integral(Cell(1.0, math.exp(0.04), 0, 0.04)) == pytest.approx(math.expm1(0.04), rel=1e-14)
        assert math.expm1(0.04) == pytest.approx(0.0408108, abs=1e-7)

    def test_vanishing_profile(self):
        assert age_weighted_integral(Cell(1e-300, 1e-300, 3, H)) < 1e-299

    def test_reflected_near_end(self):
        values = [0.7, 5.0]
        c = Cell(values[0], values[1], 49, H)
        assert 0 < reflected_weighted_integral(c) <= H * H * max(values)

    @pytest.mark.parametrize("j", [2, 7, 24])
    def test_published_rising_formulas(self, j):
        for f0, f1 in [(0.9, 0.7), (1.3, 2.6), (0.05, 0.051)]:
            c = Cell(f0, f1, j, H)
            assert rel(cell_integral(c), I_cell(f0, f1, H)) < 1e-12
            assert rel(age_weighted_integral(c), J_cell(f0, f1, j, H)) < 1e-12

    @pytest.mark.parametrize("j", [25, 33, 49])
    def test_published_falling_formula(self, j):
        for f0, f1 in [(0.9, 0.7), (1.3, 2.6), (0.05, 0.051)]:
            assert rel(reflected_weighted_integral(Cell(f0, f1, j, H)), K_cell(f0, f1, j, H)) < 1e-12

    def test_published_merged_formulas(self):
        for fh, f2 in [(0.9, 0.7), (1.3, 2.6), (0.05, 0.051), (2.0, 2.0)]:
            c = Cell(fh, f2, 2, H, merged=True)
            assert rel(cell_integral(c), I_merged(fh, f2, H)) < 1e-12
            assert rel(age_weighted_integral(c), J_merged(fh, f2, H)) < 1e-12

    @pytest.mark.parametrize("ratio", [1 + 1e-9, 1 - 1e-9, 1 + 3e-10, 1 + 2e-9])
    def test_branch_continuity(self, ratio):
        for weight_fn in (cell_integral, age_weighted_integral, reflected_weighted_integral):
            j = 30
            near = weight_fn(Cell(1.0, ratio, j, H))
            flat = weight_fn(Cell(1.0, 1.0, j, H))
            assert rel(near, flat) < 1e-7


# Below |sigma h| = 1e-9 cells take the flat branch, whose relative error is
# of order |sigma h| instead of rounding level.
rates = st.floats(-50, 50).filter(lambda s: abs(s * H) >= 1e-9)


class TestExactness:
    @settings(max_examples=200, deadline=None)
    @given(st.floats(-3, 3), rates, st.integers(2, 49))
    def test_interior_cells(self, logC, sigma, j):
        C = 10.0**logC
        c = exp_cell(C, sigma, j)
        a0, a1 = j * H, (j + 1) * H
        assert rel(cell_integral(c), exp_integral(C, sigma, a0, a1)) < 1e-12
        assert rel(age_weighted_integral(c), exp_moment(C, sigma, a0, a1)) < 1e-12
        assert rel(reflected_weighted_integral(c), exp_reflected(C, sigma, a0, a1)) < 1e-12

    @settings(max_examples=100, deadline=None)
    @given(st.floats(-3, 3), rates)
    def test_merged_cells(self, logC, sigma):
        C = 10.0**logC
        c = merged_cell(C, sigma)
        assert rel(cell_integral(c), exp_integral(C, sigma, 0, 2 * H)) < 1e-12
        assert rel(age_weighted_integral(c), exp_moment(C, sigma, 0, 2 * H)) < 1e-12

    @pytest.mark.parametrize("sigma", [0.0, 1e-12, -3e-9, 2.4e-8])
    def test_flat_band_error_bound(self, sigma):
        j = 10
        c = exp_cell(1.0, sigma, j)
        a0, a1 = j * H, (j + 1) * H
        bound = abs(sigma * H) + 1e-14
        assert rel(cell_integral(c), exp_integral(1.0, sigma, a0, a1)) <= bound
        assert rel(age_weighted_integral(c), exp_moment(1.0, sigma, a0, a1)) <= bound

    def test_positivity(self, rng):
        left = np.exp(rng.uniform(-5, 5, 500))
        right = np.exp(rng.uniform(-5, 5, 500))
        j = rng.integers(2, 49, 500)
        for fn in (cell_integral, age_weighted_integral, reflected_weighted_integral):
            assert np.all(fn(Cell(left, right, j, H)) > 0)


class TestIntegrals:
    def test_newborn_of_equilibrium(self, model):
        assert renewal_integral(model.f_star, model) == pytest.approx(1.0, abs=1e-4)
        assert renewal_integral(2 * model.f_star, model) == pytest.approx(2 * renewal_integral(model.f_star, model), rel=1e-14)

    def test_newborn_ignores_first_node(self, model):
        f = model.f_star.copy()
        f[0] = np.nan
        assert renewal_integral(f, model) == pytest.approx(renewal_integral(model.f_star, model), rel=0)

    def test_newborn_fig2_profile(self, model):
        f0 = family_initial_profile(0.2, 0.8, 1.0, model)
        assert renewal_integral(f0, model) == pytest.approx(1.0, abs=1e-3)

    def test_general_kernel_route_matches_triangular(self, model):
        tab = ModelParams(A=2.0, h=model.h, mu=0.1, k=model.k_values.copy(), D_star=1.0)
        for f in (model.f_star, family_initial_profile(0.2, 0.8, 1.0, model).values):
            assert renewal_integral(f, tab) == pytest.approx(renewal_integral(f, model), rel=1e-12)

    def test_output_of_equilibrium(self, model):
        assert output_integral(model.f_star, model) == pytest.approx(0.808361, abs=5e-4)

    def test_output_constant_and_exponential(self, model):
        assert output_integral(np.full(51, 1.7), model) == pytest.approx(1.7 * 2.0, rel=1e-14)
        assert output_integral(np.exp(model.ages), model) == pytest.approx(math.e**2 - 1, rel=1e-10)

    def test_output_with_weight_table(self, model):
        p = 0.5 + 0.25 * model.ages
        m = ModelParams(A=2.0, h=model.h, mu=0.1, k=TriangularBirthCopy(), p=p, D_star=1.0)
        exact = float(exp_integral(0.5, 1.0, 0, 2) + 0.25 * exp_moment(1.0, 1.0, 0, 2))
        assert output_integral(np.exp(model.ages), m) == pytest.approx(exact, rel=1e-12)

    def test_additivity(self, model, rng):
        f = np.exp(rng.normal(size=51))
        j = np.arange(2, 50)
        total = cell_integral(Cell(f[1], f[2], 2, H, merged=True)) + np.sum(cell_integral(Cell(f[j], f[j + 1], j, H)))
        assert output_integral(f, model) == pytest.approx(float(total), rel=1e-14)

    def test_rejects_nonpositive_interior(self, model):
        f = model.f_star.copy()
        f[10] = -1.0
        with pytest.raises(NonPositiveInterior):
            renewal_integral(f, model)
        with pytest.raises(NonPositiveInterior):
            output_integral(f, model)

    def test_fine_grid_consistency(self):
        # Same profile, finer grid: both routes converge to the same value.
        coarse, fine = reference_model(0.04), reference_model(0.01)
        f = lambda a: 0.2 - 0.15184211991649094 * a + 0.8 * np.exp(-a)  # noqa: E731
        assert renewal_integral(f(fine.ages), fine) == pytest.approx(renewal_integral(f(coarse.ages), coarse), abs=2e-4)


def TriangularBirthCopy():
    from agechemostat import TriangularBirth

    return TriangularBirth(GAIN)
