import numpy as np
import pytest
from scipy.special import iv

from almpinn.autodiff import Jet2
from almpinn.problems import (BURGERS_T_EVAL_MIN, burgers_coefficients,
                              exact_burgers, exact_burgers_jet, exact_nl1d,
                              exact_nl1d_jet, get_problem, residual_burgers,
                              residual_nl1d)


def zero_jet(v=0.0):
    return Jet2(v, 0.0, 0.0, 0.0, 0.0, 0.0)


class TestNl1d:
    def test_residual_trivial_jets(self):
        assert residual_nl1d(zero_jet(0.0), (2.0, 2.0)) == 0.0
        assert residual_nl1d(zero_jet(1.0), (5.0, -3.0)) == 0.0

    def test_residual_of_exact_solution(self):
        jet = exact_nl1d_jet(0.3, 1.2)
        assert abs(residual_nl1d(jet, (2.0, 2.0))) <= 1e-10

        rng = np.random.default_rng(8)
        x = rng.uniform(0, 1, 100)
        t = rng.uniform(0, 4, 100)
        res = residual_nl1d(exact_nl1d_jet(x, t), (2.0, 2.0))
        assert np.max(np.abs(res)) <= 1e-10

    def test_exact_values(self):
        assert exact_nl1d(0.0, 0.0) == pytest.approx(2.0, abs=1e-15)
        assert exact_nl1d(0.77, 0.77) == pytest.approx(2.0, abs=1e-14)
        # direct evaluation: 1/(1/2 + tanh(-1/4)/2) = 1 + e^(1/2)
        assert exact_nl1d(1.0, 0.0) == pytest.approx(2.648721270700128, abs=1e-14)

    def test_travelling_wave_symmetry(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            x, t, c = rng.uniform(-2, 2, 3)
            assert exact_nl1d(x + c, t + c) == pytest.approx(exact_nl1d(x, t), rel=1e-13)

    def test_boundary_initial_consistency(self):
        p = get_problem("nl1d")
        t = np.linspace(0, 4, 9)
        x = np.linspace(0, 1, 9)
        assert np.max(np.abs(p.boundary_value(np.zeros(9), t) - exact_nl1d(0.0, t))) <= 1e-14
        assert np.max(np.abs(p.boundary_value(np.ones(9), t) - exact_nl1d(1.0, t))) <= 1e-14
        assert np.max(np.abs(p.initial_value(x) - exact_nl1d(x, 0.0))) <= 1e-14
        assert p.true_v == (2.0, 2.0)

    def test_exact_jet_matches_finite_differences(self):
        x0, t0, h = 0.4, 1.7, 1e-6
        jet = exact_nl1d_jet(x0, t0)
        gx = (exact_nl1d(x0 + h, t0) - exact_nl1d(x0 - h, t0)) / (2 * h)
        gt = (exact_nl1d(x0, t0 + h) - exact_nl1d(x0, t0 - h)) / (2 * h)
        assert jet.gx == pytest.approx(gx, rel=1e-8)
        assert jet.gt == pytest.approx(gt, rel=1e-8)


class TestBurgersSeries:
    def test_coefficients_validation(self):
        with pytest.raises(ValueError):
            burgers_coefficients(0.0, 10)
        with pytest.raises(ValueError):
            burgers_coefficients(0.1, 0)

    def test_large_viscosity_limit(self):
        s = burgers_coefficients(1e8, 8, 512)
        assert s.a0 == pytest.approx(1.0, abs=1e-8)
        assert np.max(np.abs(s.an)) <= 1e-8

    def test_quadrature_refinement_stable(self):
        a = burgers_coefficients(0.1, 50, 512)
        b = burgers_coefficients(0.1, 50, 1024)
        assert abs(a.a0 - b.a0) < 1e-12

    def test_coefficients_match_bessel_identity(self):
        # A_n = 2 exp(-c) I_n(c) with c = 1/(2 pi nu): an independent oracle
        nu = 0.1
        c = 1.0 / (2 * np.pi * nu)
        s = burgers_coefficients(nu, 12, 1024)
        assert s.a0 == pytest.approx(float(np.exp(-c) * iv(0, c)), abs=1e-13)
        want = 2.0 * np.exp(-c) * iv(np.arange(1, 13), c)
        assert np.max(np.abs(s.an - want)) <= 1e-13

    def test_coefficients_decay(self):
        s = burgers_coefficients(0.1, 16, 1024)
        mags = np.abs(s.an[:13])
        assert np.all(mags[1:] < mags[:-1])

    def test_boundary_values_vanish(self):
        s = burgers_coefficients(0.1, 50)
        for t in (0.01, 0.3, 1.0):
            assert exact_burgers(s, 0.0, t) == 0.0
            assert abs(exact_burgers(s, 1.0, t)) < 1e-13

    def test_matches_initial_condition_at_t0(self):
        s = burgers_coefficients(0.1, 200)
        x = np.linspace(0, 1, 101)
        u0 = exact_burgers(s, x, np.zeros_like(x))
        assert np.max(np.abs(u0 - np.sin(np.pi * x))) <= 1e-10

    def test_evolution_from_initial_condition_verified_by_time_stepper(self):
        # Independent oracle: explicit finite-difference integration to t=0.01.
        # The solution genuinely leaves sin(pi x) at first order in t; the
        # series and the time stepper agree on where it goes.
        nu, t_end = 0.1, 0.01
        s = burgers_coefficients(nu, 200)
        nx, dt = 801, 1e-6
        x = np.linspace(0, 1, nx)
        dx = x[1] - x[0]
        u = np.sin(np.pi * x)
        for _ in range(int(round(t_end / dt))):
            ux = (np.roll(u, -1) - np.roll(u, 1)) / (2 * dx)
            uxx = (np.roll(u, -1) - 2 * u + np.roll(u, 1)) / dx**2
            u = u + dt * (nu * uxx - u * ux)
            u[0] = u[-1] = 0.0
        useries = exact_burgers(s, x, np.full_like(x, t_end))
        gap_to_ic = np.max(np.abs(useries - np.sin(np.pi * x)))
        assert np.max(np.abs(u - useries)) <= 5e-4
        assert 0.02 <= gap_to_ic <= 0.025  # frozen from the oracle runs

    def test_truncation_self_consistency(self):
        s200 = burgers_coefficients(0.1, 200)
        s400 = burgers_coefficients(0.1, 400, 2048)
        x = np.linspace(0, 1, 101)
        t = np.full_like(x, 0.1)
        assert np.max(np.abs(exact_burgers(s200, x, t)
                             - exact_burgers(s400, x, t))) <= 1e-10

    def test_residual_trivial_jets(self):
        assert residual_burgers(zero_jet(0.0), (1.0, 0.1)) == 0.0
        assert residual_burgers(zero_jet(0.7), (1.0, 0.1)) == 0.0

    def test_residual_of_series_jets(self):
        s = burgers_coefficients(0.1, 200)
        jet = exact_burgers_jet(s, 0.5, 0.2)
        assert abs(residual_burgers(jet, (1.0, 0.1))) <= 1e-6

        rng = np.random.default_rng(5)
        x = rng.uniform(0, 1, 100)
        t = rng.uniform(BURGERS_T_EVAL_MIN, 1.0, 100)
        res = residual_burgers(exact_burgers_jet(s, x, t), (1.0, 0.1))
        assert np.max(np.abs(res)) <= 1e-6

    def test_series_jet_matches_finite_differences(self):
        s = burgers_coefficients(0.1, 200)
        x0, t0, h = 0.33, 0.21, 1e-6
        jet = exact_burgers_jet(s, x0, t0)
        gx = (exact_burgers(s, x0 + h, t0) - exact_burgers(s, x0 - h, t0)) / (2 * h)
        gt = (exact_burgers(s, x0, t0 + h) - exact_burgers(s, x0, t0 - h)) / (2 * h)
        hxx = (exact_burgers(s, x0 + h, t0) - 2 * exact_burgers(s, x0, t0)
               + exact_burgers(s, x0 - h, t0)) / h**2
        assert jet.gx == pytest.approx(gx, rel=1e-8)
        assert jet.gt == pytest.approx(gt, rel=1e-8)
        assert jet.hxx == pytest.approx(hxx, rel=1e-3)


def test_registry():
    p = get_problem("burgers", nu=0.2, series_terms=50)
    assert p.true_v == (1.0, 0.2)
    assert p.domain == (0.0, 1.0, 0.0, 1.0)
    assert p.t_eval_min == BURGERS_T_EVAL_MIN
    q = get_problem("nl1d", true_v=(3.0, 1.0))
    assert q.true_v == (3.0, 1.0)
    with pytest.raises(KeyError):
        get_problem("heat")
