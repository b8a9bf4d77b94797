import math

import numpy as np
import pytest
from scipy import integrate

from steklab import asymptotics as asy
from steklab.errors import QuadratureUnderflow
from steklab.geometry.cusp import GlueParams


class TestProfiles:
    def test_boundary_values(self):
        assert asy.f(0.0) == 0 and abs(asy.f(1.0)) < 1e-15
        assert asy.f1(0.0) == pytest.approx(1.0) and abs(asy.f1(1.0)) < 1e-15
        assert abs(asy.f2(0.0)) < 1e-15 and abs(asy.f2(1.0)) < 1e-15

    @pytest.mark.parametrize("fn, dfn", [(asy.f, asy.df), (asy.f1, asy.df1), (asy.f2, asy.df2)])
    def test_derivatives(self, fn, dfn):
        v = np.linspace(0.05, 0.95, 19)
        h = 1e-6
        assert np.allclose(dfn(v), (fn(v + h) - fn(v - h)) / (2 * h), atol=1e-8)

    def test_ode_residuals(self):
        r1, r2 = asy.ode_residuals(1000)
        assert r1 <= 1e-10 and r2 <= 1e-10

    def test_ode_residual_converges(self):
        # Fourth-order stencil: residual shrinks ~16x per halving of h.
        coarse = asy.ode_residuals(101)[0]
        fine = asy.ode_residuals(201)[0]
        assert 12 < coarse / fine < 20

    def test_orthogonality(self):
        ints = asy.model_integrals()
        assert abs(ints["f_f1"]) <= 1e-12
        assert abs(ints["f_f2_plus_half_f1_f1"]) <= 1e-12
        # Closed forms: int f1^2 = 1/6 + 1/(8 pi^2), a frozen oracle from symbolic integration.
        assert ints["f1_f1"] == pytest.approx(1 / 6 + 1 / (8 * math.pi**2), rel=1e-12)


class TestIntegralI:
    @pytest.mark.parametrize("r", np.geomspace(1e-6, 0.9, 13))
    def test_closed_form(self, r):
        assert abs(asy.integral_I(r) - asy.integral_I_quadrature(r)) <= 1e-12

    def test_limit_r_to_one(self):
        # int_0^1 sin(pi v) dv = 2/pi.
        assert asy.integral_I(1 - 1e-12) == pytest.approx(2 / math.pi, rel=1e-10)

    def test_domain(self):
        with pytest.raises(ValueError):
            asy.integral_I(1.0)


class TestThetaVariables:
    def test_round_trip(self):
        p = GlueParams(0.1, 0.45, t=3.0)
        v = np.linspace(0, 1, 11)
        y = asy.y_of_v(v, p)
        assert np.allclose(asy.v_of_y(y, p), v)
        th = np.sin(np.pi * v)
        assert np.allclose(asy.theta_of_phi(asy.phi_of_theta(th, v, p), y, p), th)

    @pytest.mark.parametrize("eps", [0.2, 0.1])
    def test_energy_identities_gauss(self, eps):
        p = GlueParams(eps, 0.45, t=2.0)
        res = asy.energy_identity_residuals(lambda x, v: np.sin(np.pi * v) * (1 + 0 * x), p)
        assert res["square"] < 1e-10 and res["mean"] < 1e-10 and res["gradient"] < 1e-8

    def test_energy_identities_x_dependent(self):
        p = GlueParams(0.2, 0.45)
        res = asy.energy_identity_residuals(lambda x, v: np.sin(np.pi * v) + x * v, p)
        assert res["square"] < 1e-9 and res["mean"] < 1e-9 and res["gradient"] < 1e-7

    def test_trapezoid_second_order(self):
        p = GlueParams(0.2, 0.45)
        th = lambda x, v: np.sin(np.pi * v) * (1 + 0 * x)  # noqa: E731
        a = asy.energy_identity_residuals(th, p, n=8, panels=4, rule="trapezoid")["square"]
        b = asy.energy_identity_residuals(th, p, n=16, panels=4, rule="trapezoid")["square"]
        assert 3.0 < a / b < 5.0

    def test_underflow(self):
        with pytest.raises(QuadratureUnderflow):
            asy.energy_identity_residuals(lambda x, v: v, GlueParams(0.1, r=1e-170))


class TestBounds:
    def test_cusp_branch(self):
        p = GlueParams(0.1, 0.45, t=8.0)
        assert asy.branch_cusp(p) == pytest.approx(8 * (1 / 8 + math.pi**2 / (2 * p.log_inv_r**2)))

    def test_first_bound_is_min(self):
        p = GlueParams(0.1, 0.45, t=8.0)
        b = asy.upper_bound_first(p, 100.0)
        assert b.bound == b.branch_cusp
        b = asy.upper_bound_first(p, 1.0)
        assert b.bound == 1.0
        assert b.error_scale == pytest.approx(0.1 / p.log_inv_r**2 + 0.01)

    def test_kplus1_bound_is_max(self):
        p = GlueParams(0.1, 0.45, t=8.0)
        assert asy.upper_bound_Kplus1(p, 100.0).value == 100.0
        assert asy.upper_bound_Kplus1(p, 1.0).value == asy.branch_cusp(p)

    def test_cusp_law_frozen(self):
        sigma, law = asy.cusp_branch_law(GlueParams(0.05, 0.45))
        assert law == pytest.approx(9.8686808913111, rel=1e-9)
        assert sigma == pytest.approx(0.457891046395248, rel=1e-9)


class TestExpansion:
    def test_sigma_reduces_to_dirichlet_when_c1_zero(self):
        p = GlueParams(0.1, 0.45, t=5.0)
        s = asy.expansion_sigma(asy.ExpansionInput(p, 1.0, 0.0))
        assert s.value == pytest.approx(asy.branch_cusp(p))
        assert s.error_scale > 0

    def test_theta_end_values(self):
        p = GlueParams(0.1, 0.45)
        e = asy.expansion_theta(np.array([0.0, 1.0]), asy.ExpansionInput(p, 0.8, 0.1))
        assert e.theta[0] == pytest.approx(0.1)
        assert abs(e.theta[1]) < 1e-14

    def test_theta_derivative_consistent(self):
        p = GlueParams(0.1, 0.45)
        inp = asy.ExpansionInput(p, 0.9, 0.2)
        v = np.linspace(0, 1, 2001)
        e = asy.expansion_theta(v, inp)
        assert np.allclose(np.gradient(e.theta, v, edge_order=2), e.theta_v, atol=1e-5)
        assert integrate.trapezoid(e.theta_v, v) == pytest.approx(e.theta[-1] - e.theta[0], abs=1e-6)

    def test_c0_range(self):
        with pytest.raises(ValueError):
            asy.ExpansionInput(GlueParams(0.1), 0.0, 0.1)
