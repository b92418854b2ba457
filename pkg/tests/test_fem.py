import math

import numpy as np
import pytest

from mmfem1d import fem, mesh
from mmfem1d.errors import SingularSystemError


class TestGaussRule:
    def test_one_point(self):
        r = fem.gauss_rule(1)
        assert np.allclose(r.points, [0.0])
        assert np.allclose(r.weights, [2.0])

    def test_two_point_from_moment_equations(self):
        # solve the 2-point moment conditions by hand: symmetry gives
        # x2 = -x1, w1 = w2 = 1; matching the x^2 moment gives x1 = 1/sqrt(3)
        r = fem.gauss_rule(2)
        assert np.allclose(sorted(r.points), [-1 / math.sqrt(3), 1 / math.sqrt(3)],
                           atol=1e-15)
        assert np.allclose(r.weights, [1.0, 1.0], atol=1e-15)

    def test_exactness_degree(self):
        # q-point rule integrates monomials up to degree 2q-1 exactly
        for q in range(1, 21):
            r = fem.gauss_rule(q)
            for k in range(2 * q):
                exact = 0.0 if k % 2 else 2.0 / (k + 1)
                got = np.sum(r.weights * r.points ** k)
                assert abs(got - exact) < 1e-14, (q, k)

    def test_quintic_with_three_points(self):
        r = fem.gauss_rule(3)
        assert abs(np.sum(r.weights * r.points ** 4) - 0.4) < 1e-15

    def test_weights_sum_to_two(self):
        for q in (1, 4, 9, 20):
            assert abs(fem.gauss_rule(q).weights.sum() - 2.0) < 1e-14

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            fem.gauss_rule(0)
        with pytest.raises(ValueError):
            fem.gauss_rule(21)


class TestLagrangeBasis:
    def test_cardinality_p1(self):
        vals, _ = fem.lagrange_basis(1, -1.0)
        assert np.allclose(vals, [1.0, 0.0])

    def test_cardinality_general(self):
        for p in (2, 3, 4, 5):
            nodes = np.linspace(-1, 1, p + 1)
            for i, t in enumerate(nodes):
                vals, _ = fem.lagrange_basis(p, t)
                expect = np.zeros(p + 1)
                expect[i] = 1.0
                assert np.allclose(vals, expect, atol=1e-12)

    def test_partition_of_unity(self):
        rng = np.random.default_rng(0)
        for p in (1, 2, 3, 4, 6):
            for t in rng.uniform(-1, 1, 20):
                vals, ders = fem.lagrange_basis(p, t)
                assert abs(vals.sum() - 1.0) < 1e-14
                assert abs(ders.sum()) < 1e-12

    def test_p2_midpoint(self):
        vals, _ = fem.lagrange_basis(2, 0.0)
        assert np.allclose(vals, [0.0, 1.0, 0.0], atol=1e-15)

    def test_derivatives_against_central_differences(self):
        rng = np.random.default_rng(1)
        eps = 1e-6
        for p in (1, 2, 3, 4):
            for t in rng.uniform(-0.99, 0.99, 25):
                _, ders = fem.lagrange_basis(p, t)
                vp, _ = fem.lagrange_basis(p, t + eps)
                vm, _ = fem.lagrange_basis(p, t - eps)
                fd = (vp - vm) / (2 * eps)
                assert np.max(np.abs(ders - fd)) < 1e-7


def _space(n, p, a=0.0, b=1.0):
    return fem.TestSpace(mesh.build_uniform(a, b, n, p))


class TestAssembleMass:
    def test_single_p1_element_hand_integrated(self):
        # integral of hat products over one element of length h:
        # diag h/3, off-diagonal h/6
        h = 0.25
        m = fem.assemble_mass(fem.TestSpace(mesh.build_uniform(0, h, 1, 1)))
        assert np.allclose(m.to_dense(), [[h / 3, h / 6], [h / 6, h / 3]],
                           rtol=1e-14)

    def test_two_elements_middle_entry(self):
        h = 0.5
        m = fem.assemble_mass(_space(2, 1))
        assert abs(m[1, 1] - 2 * h / 3) < 1e-15

    def test_row_sums_are_basis_integrals(self):
        sp = _space(7, 3)
        m = fem.assemble_mass(sp).to_dense()
        area = fem.assemble_functional(sp, 1.0)
        assert np.allclose(m.sum(axis=1), area, rtol=1e-13)

    def test_spd_on_test_meshes(self):
        for n, p in [(4, 1), (5, 2), (3, 4)]:
            rng = np.random.default_rng(n + p)
            v = np.sort(rng.uniform(0, 1, n + 1))
            sp = fem.TestSpace(mesh.Mesh1D(v, p))
            dense = fem.assemble_mass(sp).to_dense()
            assert np.allclose(dense, dense.T, atol=1e-15)
            np.linalg.cholesky(dense)  # raises if not SPD


class TestWeightedStiffness:
    def test_single_p1_element(self):
        h = 0.25
        k = fem.assemble_weighted_stiffness(
            fem.TestSpace(mesh.build_uniform(0, h, 1, 1)), 1.0)
        assert np.allclose(k.to_dense(), [[1 / h, -1 / h], [-1 / h, 1 / h]],
                           rtol=1e-14)

    def test_constants_in_nullspace(self):
        sp = _space(6, 3)
        k = fem.assemble_weighted_stiffness(sp, lambda x: 1.0 + x ** 2)
        assert np.max(np.abs(k.to_dense() @ np.ones(sp.n_dofs))) < 1e-13

    def test_constant_weight_scales_linearly(self):
        sp = _space(4, 2)
        k1 = fem.assemble_weighted_stiffness(sp, 1.0).to_dense()
        kc = fem.assemble_weighted_stiffness(sp, lambda x: np.full_like(x, 2.5))
        assert np.allclose(kc.to_dense(), 2.5 * k1, rtol=1e-14)

    def test_field_coefficient_weight(self):
        sp = _space(5, 2)
        const = np.full(sp.n_dofs, 3.0)
        k = fem.assemble_weighted_stiffness(sp, const).to_dense()
        k1 = fem.assemble_weighted_stiffness(sp, 1.0).to_dense()
        assert np.allclose(k, 3.0 * k1, rtol=1e-13)


class TestFunctionals:
    def test_unit_integrand_gives_basis_integrals(self):
        sp = _space(9, 2)
        v = fem.assemble_functional(sp, 1.0)
        assert abs(v.sum() - 1.0) < 1e-13  # partition of unity -> |domain|

    def test_linear_integrand_hand_integrated(self):
        # u_h = x on [0,1], one p=1 element: (1/6, 1/3)
        sp = fem.TestSpace(mesh.build_uniform(0, 1, 1, 1))
        v = fem.assemble_functional(sp, lambda x: x)
        assert np.allclose(v, [1 / 6, 1 / 3], rtol=1e-14)

    def test_gradient_functional_of_linear_field(self):
        # d/dx of u = 2x is constant, so basis' integrals telescope
        sp = _space(4, 2)
        g = fem.assemble_gradient_functional(sp, lambda x: np.full_like(x, 2.0))
        assert abs(g.sum()) < 1e-14
        assert np.allclose(g[0], -2.0, rtol=1e-13)
        assert np.allclose(g[-1], 2.0, rtol=1e-13)

    def test_polynomial_derivative_integrates_exactly(self):
        # with u_h interpolating x^p, integral of w_i' u_h' matches the
        # closed form computed from the antiderivative
        for p in (1, 2, 3):
            sp = _space(6, p)
            pts = sp.mesh.dof_points()
            coeffs = pts ** p
            qx, qw, bmat, dmat, _, _, _, _ = fem.canonical_tables(p, sp.q)
            from mmfem1d import _core
            udq = np.empty((6, sp.q))
            _core.deriv_at_q(sp.mesh.vertices, coeffs, p, dmat, udq)
            out = np.zeros(sp.n_dofs)
            _core.assemble_value_func(sp.mesh.vertices, p, qw, bmat, udq, out)
            # sum_i integral(w_i u') = integral(u') = 1^p - 0^p = 1
            assert abs(out.sum() - 1.0) < 1e-13


class TestSolveBanded:
    def test_identity(self):
        a = fem.BandedMatrix.zeros(6, 2)
        for i in range(6):
            a.add(i, i, 1.0)
        b = np.arange(6.0)
        assert np.allclose(fem.solve_banded(a, b), b)

    def test_mass_round_trip(self):
        sp = _space(8, 3)
        a = fem.assemble_mass(sp)
        rng = np.random.default_rng(5)
        x0 = rng.normal(size=sp.n_dofs)
        b = a.to_dense() @ x0
        x = fem.solve_banded(a, b)
        assert np.max(np.abs(x - x0)) < 1e-12

    def test_residual_bound(self):
        rng = np.random.default_rng(9)
        for n, bw in [(12, 1), (25, 3), (40, 4)]:
            a = fem.BandedMatrix.zeros(n, bw)
            for i in range(n):
                for j in range(max(0, i - bw), min(n, i + bw + 1)):
                    a.add(i, j, rng.normal())
            b = rng.normal(size=n)
            x = fem.solve_banded(a, b)
            dense = a.to_dense()
            resid = np.max(np.abs(dense @ x - b))
            bound = 1e-12 * (np.abs(dense).max() * np.abs(x).max() + np.abs(b).max())
            assert resid <= max(bound, 1e-13)

    def test_matches_dense_oracle(self):
        rng = np.random.default_rng(11)
        n, bw = 30, 2
        a = fem.BandedMatrix.zeros(n, bw)
        for i in range(n):
            for j in range(max(0, i - bw), min(n, i + bw + 1)):
                a.add(i, j, rng.normal())
        b = rng.normal(size=n)
        assert np.allclose(fem.solve_banded(a, b),
                           np.linalg.solve(a.to_dense(), b), atol=1e-10)

    def test_unconstrained_stiffness_is_singular(self):
        sp = _space(5, 2)
        k = fem.assemble_weighted_stiffness(sp, 1.0)
        with pytest.raises(SingularSystemError):
            fem.solve_banded(k, np.zeros(sp.n_dofs))

    def test_singular_error_names_dof(self):
        a = fem.BandedMatrix.zeros(4, 1)
        a.add(0, 0, 1.0)
        a.add(1, 1, 1.0)  # rows 2,3 zero -> pivot failure at DOF 2
        try:
            fem.solve_banded(a, np.ones(4))
        except SingularSystemError as exc:
            assert exc.dof_index == 2
        else:
            pytest.fail("expected a singular-system error")

    def test_dirichlet_constraints(self):
        sp = _space(6, 2)
        k = fem.assemble_weighted_stiffness(sp, 1.0)
        f = fem.assemble_functional(sp, 0.0)
        x = fem.solve_banded(k, f, constraints={0: 1.0, sp.n_dofs - 1: 3.0})
        # -u'' = 0 with u(0)=1, u(1)=3 -> u = 1 + 2x
        assert np.allclose(x, 1.0 + 2.0 * sp.mesh.dof_points(), atol=1e-12)

    def test_input_matrix_not_modified(self):
        sp = _space(4, 1)
        a = fem.assemble_mass(sp)
        before = a.ab.copy()
        fem.solve_banded(a, np.ones(sp.n_dofs), constraints={0: 0.0})
        assert np.array_equal(a.ab, before)
