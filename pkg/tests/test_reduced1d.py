import math

import numpy as np
import pytest
from scipy import optimize

from steklab import reduced1d as rd
from steklab.errors import BracketFailure
from steklab.geometry.cusp import GlueParams
from steklab.steklov import SteklovProblem


@pytest.fixture(scope="module")
def balanced(base01):
    params, base = base01
    choice = rd.choose_t_for_mass(base, params)
    return params, base, choice


class TestReducedModel:
    def test_truncated_closed_form(self):
        p = GlueParams(0.1, 0.45, t=2.0)
        assert rd.truncated_dirichlet_sigma(p, 1) == pytest.approx(2 / 8 + 2 * math.pi**2 / (2 * p.log_inv_r**2))

    def test_fd_second_order(self):
        p = GlueParams(0.1, 0.45)
        exact = rd.truncated_dirichlet_sigma(p)
        errs = [abs(rd.solve_reduced(p, n=n, correction=False, count=1)[0].sigma - exact) for n in (50, 100, 200, 400)]
        slope = np.polyfit(np.log([50, 100, 200, 400]), np.log(errs), 1)[0]
        assert slope == pytest.approx(-2.0, abs=0.1)

    def test_shooting_exact(self):
        p = GlueParams(0.1, 0.45, t=3.0)
        st = rd.solve_reduced(p, count=2, correction=False, method="shooting")
        assert st[0].sigma == pytest.approx(rd.truncated_dirichlet_sigma(p, 1), rel=1e-11)
        assert st[1].sigma == pytest.approx(rd.truncated_dirichlet_sigma(p, 2), rel=1e-11)

    @pytest.mark.parametrize("beta", [0.0, 1.0])
    def test_robin_end(self, beta):
        # w = sin(k (1 - v)) with w'(0) = beta w(0): tan k = -k / beta.
        p = GlueParams(0.1, 0.45)
        if beta == 0:
            k = math.pi / 2
        else:
            k = optimize.brentq(lambda k: math.tan(k) + k / beta, math.pi / 2 + 1e-9, math.pi - 1e-9)
        exact = p.t / 8 + p.t * k * k / (2 * p.log_inv_r**2)
        st = rd.solve_reduced(p, "dirichlet-robin", count=1, correction=False, method="shooting", beta=beta)
        assert st[0].sigma == pytest.approx(exact, rel=1e-10)

    def test_profile_normalisation_and_sign(self):
        p = GlueParams(0.1, 0.45)
        st = rd.solve_reduced(p, count=2, mass=0.5)
        for s in st:
            assert s.mass == pytest.approx(0.5, rel=1e-12)
        assert np.trapezoid(st[0].theta * np.sin(np.pi * st[0].v), st[0].v) > 0

    def test_correction_lowers_sigma(self):
        p = GlueParams(0.2, 0.45)
        plain = rd.solve_reduced(p, count=1, correction=False)[0].sigma
        corr = rd.solve_reduced(p, count=1, correction=True)[0].sigma
        assert corr < plain

    def test_bad_input(self):
        with pytest.raises(ValueError):
            rd.BoundaryCondition.parse("robin-robin")
        with pytest.raises(ValueError):
            rd.solve_reduced(GlueParams(0.1), count=20, n=10)

    def test_thin_matrices(self):
        v, k, m = rd.thin_matrices(GlueParams(0.1), 40, correction=False)
        assert k.shape == m.shape == (41, 41)
        assert np.allclose(k, k.T) and np.allclose(m, m.T)
        assert np.ones(41) @ m @ np.ones(41) == pytest.approx(2.0)


class TestMassBalancing:
    def test_bracket_contains_resonance(self):
        p = GlueParams(0.1, 0.45)
        lo, hi = rd.default_t_bracket(p, 6.3)
        assert lo < 8 * 6.3 < hi

    def test_balanced_mass(self, balanced):
        _, _, choice = balanced
        assert abs(choice.mass - 0.5) <= 1e-3
        assert choice.bracket_masses[0] > 0.5 > choice.bracket_masses[1]
        assert choice.t == pytest.approx(9.2835, rel=1e-3)

    def test_bracket_failure(self, base01):
        params, base = base01
        with pytest.raises(BracketFailure):
            rd.choose_t_for_mass(base, params, bracket=(1.0, 2.0))

    def test_state_from_fem(self, balanced):
        _, _, choice = balanced
        st = rd.state_from_fem(choice.glued, choice.spectrum, 1)
        assert st.diagnostics["thin_mass"] == pytest.approx(choice.mass, abs=1e-12)
        assert st.theta.shape == st.v.shape


class TestCoupled:
    def test_monolithic_matches_fem(self, balanced):
        params, base, choice = balanced
        res = rd.coupled_solve(base, params.replace(t=choice.t, r=params.r))
        fem = choice.spectrum.eigenvalues[1]
        assert abs(res.sigma[0]) < 1e-6
        assert res.sigma[1] == pytest.approx(fem, rel=5e-3)
        assert res.sigma[1] == pytest.approx(5.78937, rel=1e-4)

    def test_fixed_point_agrees(self, balanced):
        params, base, choice = balanced
        p = params.replace(t=choice.t, r=params.r)
        mono = rd.coupled_solve(base, p)
        fp = rd.coupled_solve(base, p, method="fixed_point")
        assert fp.sigma[1] == pytest.approx(mono.sigma[1], rel=1e-9)
        assert np.isnan(fp.sigma[2])
        assert fp.iterations < 50

    def test_detached_splits(self, balanced):
        params, base, choice = balanced
        p = params.replace(t=choice.t, r=params.r)
        res = rd.coupled_solve(base, p, detached=True, count=6)
        assert np.min(np.abs(res.sigma - 6.297)) < 5e-2


class TestCombinedBound:
    def test_select_second_mode(self):
        assert rd.select_second_mode({2: 0.1, 3: 0.3}, 2) == (3, True)
        assert rd.select_second_mode({2: 0.01, 3: 0.02}, 2) == (3, False)

    def test_combined_beats_single(self, balanced):
        _, _, choice = balanced
        spec = SteklovProblem(choice.glued.mesh).solve(choice.glued.metric, 6)
        cb = rd.combined_test_function(choice.glued, spec, 2)
        assert cb.bound >= cb.single_bound
        assert cb.bound == pytest.approx(cb.rayleigh_direct, rel=1e-9)
        assert cb.bound == pytest.approx(7.9517, rel=1e-3)
        assert abs(cb.theta_bar_at_zero) < 1e-12
