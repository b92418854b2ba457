import math

import numpy as np
import pytest

from mmfem1d import problems
from mmfem1d.errors import ConfigError

# physical constants of the two-phase benchmark
PHI_REFERENCE = 0.205426929376498
INTERFACE_AT_T0 = 0.01597539


class TestErf:
    def test_origin(self):
        assert problems.erf(0.0) == 0.0
        assert problems.erfc(0.0) == 1.0

    def test_odd_symmetry(self):
        rng = np.random.default_rng(0)
        for x in rng.uniform(-4, 4, 50):
            assert abs(problems.erf(-x) + problems.erf(x)) < 1e-15

    def test_complement(self):
        for x in (-2.0, -0.3, 0.7, 3.1):
            assert abs(problems.erf(x) + problems.erfc(x) - 1.0) < 1e-15

    def test_against_maclaurin_series_oracle(self):
        # erf(x) = 2/sqrt(pi) * sum_k (-1)^k x^(2k+1) / (k! (2k+1));
        # 30 terms at x=1 leave a remainder below the alternating-series bound
        x = 1.0
        s = 0.0
        fact = 1.0
        for k in range(30):
            if k > 0:
                fact *= k
            s += (-1) ** k * x ** (2 * k + 1) / (fact * (2 * k + 1))
        oracle = 2.0 / math.sqrt(math.pi) * s
        bound = 2.0 / math.sqrt(math.pi) / (math.factorial(30) * 61)
        assert abs(problems.erf(1.0) - oracle) <= bound + 1e-15

    def test_array_input(self):
        xs = np.array([0.0, 0.5, -0.5])
        out = problems.erf(xs)
        assert out.shape == xs.shape
        assert abs(out[1] - math.erf(0.5)) < 1e-16


class TestPhiRoot:
    def test_reference_value(self):
        assert abs(problems.stefan_phi_root() - PHI_REFERENCE) < 1e-12

    def test_residual_at_root(self):
        pr = problems.StefanParameters()
        root = problems.stefan_phi_root(pr)
        assert abs(problems._phi_residual(root, pr)) <= 1e-14

    def test_bracket_independence(self):
        pr = problems.StefanParameters()
        a = problems.stefan_phi_root(pr, bracket=(0.05, 0.5))
        b = problems.stefan_phi_root(pr, bracket=(0.1, 0.4))
        c = problems.stefan_phi_root(pr, bracket=(0.19, 0.3))
        assert abs(a - b) < 1e-14 and abs(a - c) < 1e-14

    def test_interface_position_at_t0(self):
        pr = problems.stefan_default_parameters()
        assert abs(pr.interface_position(0.0012) - INTERFACE_AT_T0) < 5e-8

    def test_no_sign_change_raises(self):
        pr = problems.StefanParameters()
        with pytest.raises(ConfigError):
            problems.stefan_phi_root(pr, bracket=(0.3, 0.5))


class TestStefanExact:
    @pytest.fixture(scope="class")
    def pr(self):
        return problems.stefan_default_parameters()

    def test_wall_value(self, pr):
        for t in (0.0012, 0.005, 0.0112):
            assert abs(problems.stefan_exact(0.0, t, pr) + 20.0) < 1e-12

    def test_zero_on_interface_both_branches(self, pr):
        t = 0.0012
        s = pr.interface_position(t)
        assert abs(problems.stefan_exact(s, t, pr)) < 1e-13
        assert abs(problems.stefan_exact(s * (1 + 1e-14), t, pr)) < 1e-12

    def test_far_field_reaches_liquid_value(self, pr):
        # erfc tail: at x = 50 the complementary error function has decayed
        # to below 1e-300, so u equals the far value to machine precision
        assert abs(problems.stefan_exact(50.0, 0.0012, pr) - 10.0) < 1e-13

    def test_continuity_across_interface(self, pr):
        # both branches vanish at s(t); values eps away are bounded by the
        # one-sided slopes (there is a gradient kink, not a jump)
        t = 0.003
        s = pr.interface_position(t)
        eps = 1e-9
        assert abs(problems.stefan_exact(s - eps, t, pr)) < 5e-6
        assert abs(problems.stefan_exact(s + eps, t, pr)) < 5e-6

    def test_right_flux_matches_finite_difference(self, pr):
        t = 0.0012
        eps = 1e-7
        fd = (problems.stefan_exact(1.0 + eps, t, pr)
              - problems.stefan_exact(1.0 - eps, t, pr)) / (2 * eps)
        assert abs(problems.stefan_right_flux(t, pr) - fd) < 1e-5

    def test_interface_speed_is_position_derivative(self, pr):
        t = 0.002
        eps = 1e-9
        fd = (pr.interface_position(t + eps) - pr.interface_position(t - eps)) / (2 * eps)
        assert abs(pr.interface_speed(t) - fd) < 1e-4


class TestCrankGupta:
    def test_zero_value_and_slope_at_moving_boundary(self):
        for t in (0.0, 0.3, 0.7):
            x = 1.0 - t
            assert problems.cg_exact(x, t) == 0.0
            eps = 1e-8
            inner = problems.cg_exact(x - eps, t)
            assert abs(inner) < 1e-15  # u ~ eps^2/2 below fp resolution

    def test_initial_left_value(self):
        assert abs(problems.cg_exact(0.0, 0.0) - math.exp(-1)) < 1e-15
        assert abs(problems.cg_exact(0.0, 0.0) - 0.3678794411714423) < 1e-15

    def test_boundary_trajectory(self):
        assert problems.cg_boundary(0.3) == 0.7

    def test_fixed_flux_matches_solution_gradient(self):
        t = 0.1
        eps = 1e-7
        fd = (problems.cg_exact(eps, t) - problems.cg_exact(0.0, t)) / eps
        assert abs(problems.cg_fixed_flux(t) - fd) < 1e-6

    def test_zero_beyond_boundary(self):
        assert problems.cg_exact(0.95, 0.2) == 0.0


class TestPmeSimilarity:
    def test_reference_time(self):
        # t0 = 0.5 * m * x0^2 / (m + 2) with m = 1, x0 = 0.5
        assert abs(problems.pme_reference_time(1, 0.5) - 0.125 / 3) < 1e-15

    def test_unit_peak_at_reference_time(self):
        t0 = problems.pme_reference_time(1, 0.5)
        assert abs(problems.pme_similarity(0.0, t0) - 1.0) < 1e-14

    def test_compact_support(self):
        t0 = problems.pme_reference_time(1, 0.5)
        b = problems.pme_boundary(2 * t0)
        assert problems.pme_similarity(b * 1.0000001, 2 * t0) == 0.0
        assert abs(problems.pme_similarity(b, 2 * t0)) < 1e-12

    def test_mass_invariance_quadrature_oracle(self):
        # total mass integral computed with a fine Gauss rule at two times
        from mmfem1d.fem import gauss_rule
        t0 = problems.pme_reference_time(1, 0.5)
        rule = gauss_rule(20)

        def total_mass(t):
            b = problems.pme_boundary(t)
            acc = 0.0
            cells = np.linspace(-b, b, 201)
            for lo, hi in zip(cells[:-1], cells[1:]):
                x = 0.5 * (lo + hi) + 0.5 * (hi - lo) * rule.points
                acc += 0.5 * (hi - lo) * np.sum(rule.weights
                                                * problems.pme_similarity(x, t))
            return acc

        assert abs(total_mass(t0) - total_mass(2 * t0)) < 1e-12

    def test_scale_at_reference_time(self):
        assert abs(problems.pme_scale(problems.pme_reference_time(1, 0.5), 1, 0.5)
                   - 1.0) < 1e-15


class TestProblemSpec:
    def test_kinds_and_monitors(self):
        assert problems.stefan_problem().monitor == "area"
        assert problems.crank_gupta_problem().monitor == "mass"
        assert problems.pme_cos_problem().monitor == "mass"

    def test_exact_routing(self):
        assert problems.pme_cos_problem().has_exact is False
        assert problems.pme_similarity_problem().has_exact is True
        with pytest.raises(ConfigError):
            problems.pme_cos_problem().exact(0.0, 0.0)

    def test_dirichlet_sets(self):
        st = problems.stefan_problem()
        d = st.dirichlet_dofs(21, 4)
        assert d == {0: -20.0, 4: 0.0}
        cg = problems.crank_gupta_problem()
        assert cg.dirichlet_dofs(11, None) == {10: 0.0}
        pme = problems.pme_cos_problem()
        assert pme.dirichlet_dofs(11, None) == {0: 0.0, 10: 0.0}

    def test_invalid_kind(self):
        with pytest.raises(ConfigError):
            problems.ProblemSpec(kind="heat", t0=0.0, span=1.0, domain=(0, 1))


class TestWeakForms:
    def test_pme_zero_field_gives_zero_callbacks(self):
        wf = problems.problem_weak_forms(problems.pme_cos_problem())
        u = np.zeros((4, 3))
        ux = np.zeros((4, 3))
        assert np.all(wf.diffusive_flux(u, ux) == 0.0)
        assert wf.sink == 0.0
        assert wf.theta_dot(0.0, 1.0) == 0.0

    def test_cg_sink_contributes_domain_length(self):
        # the sink adds -integral(w_i) to every mass rate; summed over the
        # partition of unity that is minus the domain length
        from mmfem1d import fem, mesh
        wf = problems.problem_weak_forms(problems.crank_gupta_problem())
        assert wf.sink == 1.0
        sp = fem.TestSpace(mesh.build_uniform(0, 1, 7, 2))
        area = fem.assemble_functional(sp, 1.0)
        assert abs(wf.sink * area.sum() - 1.0) < 1e-13

    def test_cg_theta_dot_two_term_oracle(self):
        # independent evaluation of the two terms: the fixed-boundary flux
        # with outward normal -1 and the sink's domain integral
        wf = problems.problem_weak_forms(problems.crank_gupta_problem())
        t, length = 0.0, 1.0
        term_flux = -problems.cg_fixed_flux(t)
        term_sink = -length
        assert abs(wf.theta_dot(t, length) - (term_flux + term_sink)) < 1e-15
        # analytic check: d/dt of the exact total mass at t = 0 is -1/e
        assert abs(wf.theta_dot(0.0, 1.0) + math.exp(-1)) < 1e-15

    def test_stefan_interface_flux_matches_interface_speed(self):
        # closed-form one-sided gradients of the two branches at s(t0)
        pr = problems.stefan_default_parameters()
        wf = problems.problem_weak_forms(problems.stefan_problem(pr))
        t = pr.t0
        s = pr.interface_position(t)
        grad_s = (-pr.u_wall * math.exp(-pr.phi ** 2)
                  / (math.sqrt(math.pi * pr.kappa_solid * t) * math.erf(pr.phi)))
        zc = pr.phi * math.sqrt(pr.kappa_solid / pr.kappa_liquid)
        grad_l = (pr.u_far * math.exp(-zc ** 2)
                  / (math.sqrt(math.pi * pr.kappa_liquid * t) * math.erfc(zc)))
        vi = wf.interface_velocity(grad_s, grad_l)
        assert abs(vi - pr.interface_speed(t)) < 1e-10

    def test_stefan_phase_fluxes(self):
        pr = problems.stefan_default_parameters()
        wf = problems.problem_weak_forms(problems.stefan_problem(pr))
        ux = np.array([[2.0]])
        u = np.array([[1.0]])
        assert np.isclose(wf.diffusive_flux(u, ux, phase=0)[0, 0],
                          pr.kappa_solid * 2.0)
        assert np.isclose(wf.diffusive_flux(u, ux, phase=1)[0, 0],
                          pr.kappa_liquid * 2.0)

    def test_neumann_routing(self):
        wf_cg = problems.problem_weak_forms(problems.crank_gupta_problem())
        assert wf_cg.neumann("left", 0.0) == problems.cg_fixed_flux(0.0)
        assert wf_cg.neumann("right", 0.0) is None
        wf_st = problems.problem_weak_forms(problems.stefan_problem())
        assert wf_st.neumann("left", 0.0012) is None
        assert wf_st.neumann("right", 0.0012) is not None
