import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from agechemostat import (
    AgeProfile,
    ModelParams,
    TransformedState,
    TriangularBirth,
    equilibrium_profile,
    family_initial_profile,
    from_transformed,
    lotka_sharpe_residual,
    normalized_kernel,
    pi_functional,
    setpoint_scale,
    solve_equilibrium_dilution,
    to_transformed,
    triangular_birth_gain,
)
from agechemostat.errors import NonPositiveInput, NonPositiveProfile, NoRoot, ValidationError
from agechemostat.ide import ergodic_projection
from agechemostat.model import kernel_mass
from agechemostat.profiles import History

from conftest import GAIN, reference_model
from oracles import equilibrium_output, pi_direct, renewal_slope, triangular_residual, triangular_root

# Frozen from the package after agreeing with the closed forms in oracles.py.
FROZEN_GAIN = 2.718728499150719
FROZEN_B1 = {(0.2, 0.8, 1.0): 0.15184211991649094, (1.0, 4.0, 1.0): 0.7592105995824545}
FROZEN_Y_STAR = 0.808360765125151
FROZEN_STEP_ROOT = 1.5936242600396326


def step_model(h=0.01, mu=0.0):
    """Constant birth rate 2 on [0, 1]."""
    n = int(round(1 / h))
    return ModelParams(A=1.0, h=h, mu=mu, k=np.full(n + 1, 2.0), D_min=0.5, D_max=2.5)


def triangular_k(a):
    return GAIN * a if a <= 1 else GAIN * (2 - a)


class TestBirthGain:
    def test_reference_value(self):
        assert triangular_birth_gain(0.1, 1.0) == pytest.approx(2.718728, abs=5e-6)
        assert triangular_birth_gain(0.1, 1.0) == pytest.approx(FROZEN_GAIN, rel=1e-14)

    def test_zero_mortality(self):
        assert triangular_birth_gain(0.0, 1.0) == pytest.approx(1 / (1 - math.exp(-1)) ** 2, rel=1e-12)

    @given(st.floats(0.01, 3.0), st.floats(0.01, 3.0))
    def test_exceeds_square_and_balances(self, mu, D):
        g = triangular_birth_gain(mu, D)
        assert g > (mu + D) ** 2
        assert abs(float(triangular_residual(D, mu, g))) < 1e-12

    def test_rejects_nonpositive_rate(self):
        with pytest.raises(ValidationError):
            triangular_birth_gain(-1.0, 0.5)


class TestLotkaSharpe:
    def test_residual_zero_at_design_dilution(self, model):
        assert abs(lotka_sharpe_residual(1.0, model)) < 1e-6

    def test_residual_matches_closed_form_off_root(self, model):
        for D in (0.3, 0.8, 1.7, 3.0):
            assert lotka_sharpe_residual(D, model) == pytest.approx(float(triangular_residual(D, 0.1, GAIN)), abs=1e-12)

    def test_step_kernel_closed_form(self):
        assert lotka_sharpe_residual(1.0, step_model()) == pytest.approx(2 * (1 - math.exp(-1)) - 1, abs=1e-12)
        assert 2 * (1 - math.exp(-1)) - 1 == pytest.approx(0.264241, abs=1e-6)

    def test_strictly_decreasing(self, model):
        values = [lotka_sharpe_residual(D, model) for D in np.linspace(-2, 5, 200)]
        assert np.all(np.diff(values) < 0)

    def test_root_reference_model(self):
        m = ModelParams(A=2.0, h=0.04, mu=0.1, k=TriangularBirth(GAIN))
        assert solve_equilibrium_dilution(m) == pytest.approx(1.0, abs=1e-6)
        assert solve_equilibrium_dilution(m) == pytest.approx(triangular_root(0.1, GAIN), abs=1e-9)

    def test_root_step_kernel(self):
        root = solve_equilibrium_dilution(step_model())
        oracle = float(mp.findroot(lambda D: 2 * (1 - mp.e ** (-D)) / D - 1, 1.5))
        assert root == pytest.approx(oracle, abs=1e-9)
        assert root == pytest.approx(FROZEN_STEP_ROOT, abs=1e-12)
        assert abs(lotka_sharpe_residual(root, step_model())) <= 1e-10

    def test_root_zero_when_kernel_already_balanced(self):
        # k = 1/A with no mortality already integrates to one.
        m = ModelParams(A=2.0, h=0.02, mu=0.0, k=np.full(101, 0.5))
        assert solve_equilibrium_dilution(m) == pytest.approx(0.0, abs=1e-9)

    def test_no_root_for_empty_kernel(self):
        m = ModelParams(A=2.0, h=0.04, mu=0.1, k=np.full(51, 1e-300))
        with pytest.raises(NoRoot):
            solve_equilibrium_dilution(m)

    def test_timing(self):
        import time

        m = ModelParams(A=2.0, h=0.04, mu=0.1, k=TriangularBirth(GAIN))
        start = time.perf_counter()
        solve_equilibrium_dilution(m)
        assert time.perf_counter() - start < 0.01


class TestEquilibrium:
    def test_profile_closed_form(self, model):
        f = equilibrium_profile(model, 1.0)
        assert f.values[0] == 1.0
        np.testing.assert_allclose(f.values, np.exp(-1.1 * model.ages), rtol=1e-14)
        assert f.values[-1] == pytest.approx(0.110803, abs=1e-6)

    def test_setpoint(self, model):
        assert model.y_star == pytest.approx(equilibrium_output(0.1, 1.0), abs=5e-6)
        assert model.y_star == pytest.approx(FROZEN_Y_STAR, rel=1e-12)
        assert setpoint_scale(0.808361, model) == pytest.approx(1.0, abs=1e-5)
        assert setpoint_scale(2 * model.y_star, model) == pytest.approx(2.0, rel=1e-12)

    def test_setpoint_rejects_nonpositive(self, model):
        with pytest.raises(ValidationError):
            setpoint_scale(0.0, model)

    def test_with_setpoint_rescales_profile(self, model):
        m2 = model.with_setpoint(2 * model.y_star)
        np.testing.assert_allclose(m2.f_star, 2 * model.f_star, rtol=1e-12)

    def test_normalized_kernel_unit_mass(self, model):
        assert kernel_mass(model) == pytest.approx(1.0, abs=1e-6)
        kt = normalized_kernel(model)
        assert np.all(kt.values >= 0)

    def test_normalized_kernel_step(self):
        m = step_model().with_equilibrium()
        np.testing.assert_allclose(normalized_kernel(m).values, 2 * np.exp(-m.D_star * m.ages), rtol=1e-12)


class TestPi:
    def test_equilibrium_is_one(self, model):
        assert pi_functional(model.f_star, model) == pytest.approx(1.0, abs=1e-12)

    def test_scaling(self, model):
        assert pi_functional(3.5 * model.f_star, model) == pytest.approx(3.5, rel=1e-12)

    @pytest.mark.parametrize("h,tol", [(0.04, 1e-4), (0.01, 5e-6)])
    def test_matches_double_integral(self, h, tol):
        m = reference_model(h)
        b1 = FROZEN_B1[(0.2, 0.8, 1.0)]
        exact = pi_direct(lambda a: 0.2 - b1 * a + 0.8 * mp.e ** (-a), triangular_k, 0.1, 1.0)
        f0 = 0.2 - b1 * m.ages + 0.8 * np.exp(-m.ages)
        assert pi_functional(f0, m) == pytest.approx(exact, abs=tol)

    def test_sandwich_fig2_profile(self, model):
        f0 = family_initial_profile(0.2, 0.8, 1.0, model)
        ratio = f0.values / model.f_star
        assert ratio.min() <= pi_functional(f0, model) <= ratio.max()

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(0.05, 20.0), min_size=51, max_size=51), st.lists(st.floats(0.05, 20.0), min_size=51, max_size=51),
           st.floats(-3, 3), st.floats(-3, 3))
    def test_linearity_sandwich_and_log_bound(self, u, v, alpha, beta):
        m = reference_model()
        f, g = np.array(u), np.array(v)
        combo = pi_functional(alpha * f + beta * g, m)
        lin = alpha * pi_functional(f, m) + beta * pi_functional(g, m)
        assert abs(combo - lin) <= 1e-10 * (abs(alpha) * np.max(f) + abs(beta) * np.max(g))
        ratio = f / m.f_star
        pi = pi_functional(f, m)
        assert ratio.min() * (1 - 1e-12) <= pi <= ratio.max() * (1 + 1e-12)
        assert abs(math.log(pi)) <= np.max(np.abs(np.log(ratio))) + 1e-12


class TestInitialProfile:
    @pytest.mark.parametrize("params", list(FROZEN_B1))
    def test_slope(self, model, params):
        b0, c, theta = params
        f0 = family_initial_profile(b0, c, theta, model)
        b1 = (b0 + c * np.exp(-theta * 1.0) - f0.values[25]) / 1.0
        assert b1 == pytest.approx(renewal_slope(b0, c, theta, triangular_k), abs=1e-9)
        assert b1 == pytest.approx(FROZEN_B1[params], abs=1e-12)

    def test_reference_values(self, model):
        from agechemostat.model import initial_profile_slope

        assert initial_profile_slope(0.2, 0.8, 1.0, model) == pytest.approx(0.15184212, abs=1e-7)
        assert initial_profile_slope(1.0, 4.0, 1.0, model) == pytest.approx(0.7592106, abs=1e-6)

    def test_general_kernel_path_agrees(self):
        # A tabulated copy of the triangular law takes the generic route.
        m = reference_model(0.01)
        tab = ModelParams(A=2.0, h=0.01, mu=0.1, k=m.k_values.copy()).with_equilibrium()
        from agechemostat.model import initial_profile_slope

        assert initial_profile_slope(0.2, 0.8, 1.0, tab) == pytest.approx(FROZEN_B1[(0.2, 0.8, 1.0)], abs=1e-9)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0.1, 2.0), st.floats(0.1, 4.0), st.floats(0.2, 3.0))
    def test_renewal_compatibility(self, b0, c, theta):
        m = reference_model()
        from agechemostat.quadrature import renewal_integral

        try:
            f0 = family_initial_profile(b0, c, theta, m)
        except NonPositiveProfile:
            return
        assert renewal_integral(f0, m) == pytest.approx(f0.values[0], rel=1e-3)

    def test_rejects_nonpositive(self, model):
        with pytest.raises(NonPositiveProfile):
            family_initial_profile(1.0, 0.01, 1.0, model)
        with pytest.raises(ValidationError):
            family_initial_profile(-1.0, 0.8, 1.0, model)


class TestTransform:
    def test_equilibrium(self, model):
        s = to_transformed(model.f_star, model)
        assert s.eta == pytest.approx(0.0, abs=1e-14)
        assert np.max(np.abs(s.psi.values)) < 1e-14

    def test_doubled(self, model):
        s = to_transformed(2 * model.f_star, model)
        assert s.eta == pytest.approx(math.log(2), abs=1e-14)
        np.testing.assert_allclose(from_transformed(s, model).values, 2 * model.f_star, rtol=1e-14)

    def test_zero_state_gives_equilibrium(self, model):
        s = TransformedState(0.0, History(model.h, np.zeros(model.N + 1)))
        np.testing.assert_allclose(from_transformed(s, model).values, model.f_star, rtol=0)

    def test_fig2_psi_bound(self, model):
        f0 = family_initial_profile(0.2, 0.8, 1.0, model)
        nu = np.max(np.abs(np.log(f0.values / model.f_star)))
        psi = to_transformed(f0, model).psi.values
        assert np.max(np.abs(psi)) <= math.exp(2 * nu) - 1

    def test_rejects_nonpositive(self, model):
        bad = model.f_star.copy()
        bad[7] = 0.0
        with pytest.raises(NonPositiveInput):
            to_transformed(bad, model)
        with pytest.raises(ValidationError):
            TransformedState(0.0, History(model.h, np.full(model.N + 1, -1.0)))

    def test_round_trip_and_projection(self, model, rng):
        for _ in range(100):
            f = model.f_star * np.exp(rng.normal(scale=0.7, size=model.N + 1))
            s = to_transformed(f, model)
            assert abs(ergodic_projection(model.kernel, s.psi)) <= 1e-8
            np.testing.assert_allclose(from_transformed(s, model).values, f, rtol=1e-12)
            back = to_transformed(from_transformed(s, model), model)
            assert back.eta == pytest.approx(s.eta, abs=1e-12)


class TestProfiles:
    def test_profile_is_immutable(self, model):
        f = AgeProfile(0.04, np.ones(51))
        with pytest.raises(ValueError):
            f.values[0] = 2.0
        assert f.N == 50 and f.A == pytest.approx(2.0)

    def test_profile_rejects_short_or_nonfinite(self):
        with pytest.raises(ValidationError):
            AgeProfile(0.1, np.ones(3))
        with pytest.raises(ValidationError):
            AgeProfile(0.1, np.array([1.0, np.nan, 1.0, 1.0, 1.0]))

    def test_history_orders(self):
        x = History.from_chronological(np.arange(6.0), 0.5)
        assert x.current == 5.0
        np.testing.assert_array_equal(x.chronological(), np.arange(6.0))
        np.testing.assert_array_equal(x.lags, 0.5 * np.arange(6))

    def test_model_validation(self):
        with pytest.raises(ValidationError):
            ModelParams(A=2.0, h=0.03, mu=0.1, k=TriangularBirth(GAIN))
        with pytest.raises(ValidationError):
            ModelParams(A=2.0, h=0.04, mu=-0.1, k=TriangularBirth(GAIN))
        with pytest.raises(ValidationError):
            ModelParams(A=2.0, h=0.04, mu=0.1, k=TriangularBirth(GAIN), D_min=2.0, D_max=1.0)
