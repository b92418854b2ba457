import numpy as np
import pytest

from mmfem1d import mesh
from mmfem1d.errors import ConfigError, MeshTanglingError


def test_build_uniform_equal_spacing():
    m = mesh.build_uniform(0.0, 1.0, 10, 1)
    assert np.allclose(m.vertices, np.linspace(0, 1, 11))
    assert np.allclose(np.diff(m.vertices), 0.1)


def test_build_uniform_symmetry():
    m = mesh.build_uniform(-0.5, 0.5, 2, 2)
    assert np.allclose(m.vertices, [-0.5, 0.0, 0.5])


def test_single_element_dof_points():
    m = mesh.build_uniform(0.0, 1.0, 1, 4)
    assert np.allclose(m.dof_points(), [0.0, 0.25, 0.5, 0.75, 1.0])


def test_build_uniform_rejects_bad_args():
    with pytest.raises(ValueError):
        mesh.build_uniform(0.0, 1.0, 0, 1)
    with pytest.raises(ValueError):
        mesh.build_uniform(1.0, 0.0, 4, 1)
    with pytest.raises(ValueError):
        mesh.build_uniform(0.0, 1.0, 4, 0)


def test_vertices_must_increase():
    with pytest.raises(MeshTanglingError):
        mesh.Mesh1D(np.array([0.0, 0.5, 0.5, 1.0]), 1)
    with pytest.raises(MeshTanglingError):
        mesh.Mesh1D(np.array([0.0, 0.6, 0.4, 1.0]), 1)


def test_interface_index_must_be_interior():
    v = np.linspace(0, 1, 5)
    with pytest.raises(ValueError):
        mesh.Mesh1D(v, 1, interface_index=0)
    with pytest.raises(ValueError):
        mesh.Mesh1D(v, 1, interface_index=4)


def test_mesh_is_immutable():
    m = mesh.build_uniform(0, 1, 4, 1)
    with pytest.raises(ValueError):
        m.vertices[0] = 3.0


class TestStefanBisection:
    def test_structure(self):
        m = mesh.build_stefan_bisection(1)
        assert m.n_elements == 10
        assert m.interface_index == 2
        s0 = m.vertices[2]
        assert 0.0159753 < s0 < 0.0159754

    def test_bisection_cascade_lengths(self):
        # hand enumeration: bisecting the interface-adjacent interval 7 times
        # leaves lengths (1-s0) * [2^-7, 2^-7, 2^-6, ..., 2^-1] left to right
        m = mesh.build_stefan_bisection(3)
        s0 = m.vertices[m.interface_index]
        right = np.diff(m.vertices[m.interface_index:])
        expected = (1.0 - s0) * np.array(
            [2.0 ** -7, 2.0 ** -7] + [2.0 ** -k for k in range(6, 0, -1)])
        assert np.allclose(right, expected, rtol=1e-14)
        # the two elements adjacent to the interface have equal lengths
        assert np.isclose(right[0], right[1], rtol=1e-14)
        # leftmost right-phase element = rightmost / 2^6
        assert np.isclose(right[0], right[-1] / 2 ** 6, rtol=1e-14)

    def test_left_phase_uniform(self):
        m = mesh.build_stefan_bisection(2)
        left = np.diff(m.vertices[: m.interface_index + 1])
        assert left.size == 2
        assert np.isclose(left[0], left[1], rtol=1e-15)

    def test_refinement_splits_every_element(self):
        m0 = mesh.build_stefan_bisection(1)
        m1 = mesh.build_stefan_bisection(1, refinements=1)
        assert m1.n_elements == 20
        assert m1.interface_index == 4
        # level-0 vertices survive bit-exactly
        assert np.array_equal(m1.vertices[::2], m0.vertices)
        assert np.allclose(np.diff(m1.vertices)[::2], np.diff(m1.vertices)[1::2])


class TestGeometricRatio:
    def test_uniform_fill_gives_ratio_one(self):
        assert mesh.geometric_ratio(0.25, 1.0, 4) == 1.0

    def test_fill_is_exact(self):
        first, total, count = 0.01, 1.0, 6
        r = mesh.geometric_ratio(first, total, count)
        s = sum(first * r ** j for j in range(count))
        assert abs(s - total) <= 1e-13 * total

    def test_against_independent_bisection_oracle(self):
        # oracle: plain interval bisection on the partial-sum equation
        first, total, count = 0.0159753 / 5, 1.0 - 0.0159753, 5

        def partial(r):
            return sum(first * r ** j for j in range(count)) - total

        lo, hi = 1.0, 16.0
        assert partial(lo) < 0 < partial(hi)
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if partial(mid) < 0:
                lo = mid
            else:
                hi = mid
        oracle = 0.5 * (lo + hi)
        assert abs(mesh.geometric_ratio(first, total, count) - oracle) < 1e-12

    def test_unbracketable_raises(self):
        with pytest.raises(ConfigError):
            mesh.geometric_ratio(10.0, 1.0, 3)  # sum always exceeds total


class TestStefanGeometric:
    def test_structure(self):
        m = mesh.build_stefan_geometric(2)
        assert m.n_elements == 10
        assert m.interface_index == 5
        left = np.diff(m.vertices[:6])
        right = np.diff(m.vertices[5:])
        assert np.allclose(left, left[0])
        # first right element matches the left element length
        assert np.isclose(right[0], left[0], rtol=1e-12)
        # geometric progression with a common ratio
        ratios = right[1:] / right[:-1]
        assert np.allclose(ratios, ratios[0], rtol=1e-9)
        assert m.vertices[-1] == 1.0

    def test_sum_fills_interval(self):
        m = mesh.build_stefan_geometric(1)
        s0 = m.vertices[m.interface_index]
        assert abs(np.diff(m.vertices[5:]).sum() - (1.0 - s0)) < 1e-14


def test_refine_uniform_basics():
    m = mesh.Mesh1D(np.array([0.0, 1.0]), 1)
    r = mesh.refine_uniform(m)
    assert np.allclose(r.vertices, [0.0, 0.5, 1.0])


def test_refine_preserves_vertices_bit_exact():
    rng = np.random.default_rng(3)
    v = np.sort(rng.uniform(0, 1, 7))
    m = mesh.Mesh1D(v, 2)
    r = mesh.refine_uniform(m)
    assert np.array_equal(r.vertices[::2], v)


def test_double_refinement_quadruples_elements():
    m = mesh.build_uniform(0, 1, 3, 1)
    r = mesh.refine_uniform(mesh.refine_uniform(m))
    assert r.n_elements == 12


def test_dof_points_p1_coincide_with_vertices():
    m = mesh.build_uniform(0, 2, 7, 1)
    assert np.array_equal(m.dof_points(), m.vertices)


def test_dof_points_interior_spacing():
    m = mesh.Mesh1D(np.array([0.0, 0.3, 1.0]), 3)
    pts = m.dof_points()
    assert np.allclose(pts[1:3], [0.1, 0.2])
    assert pts.size == 2 * 3 + 1


def test_dof_count():
    m = mesh.build_uniform(0, 1, 10, 4)
    assert m.dof_points().size == 41
    assert m.n_dofs == 41


def test_dof_points_affine_commutes_with_motion():
    # moving vertices with a linear-in-x velocity then re-deriving DOF points
    # equals moving the DOF points with the same velocity
    m = mesh.Mesh1D(np.array([0.0, 0.4, 0.7, 1.3]), 3)
    vel = lambda x: 0.3 * x + 0.1
    dt = 0.05
    moved = m.with_vertices(m.vertices + dt * vel(m.vertices))
    assert np.allclose(moved.dof_points(),
                       m.dof_points() + dt * vel(m.dof_points()), atol=1e-15)


def test_phase_views():
    m = mesh.build_stefan_bisection(2)
    solid = m.phase_view(0)
    liquid = m.phase_view(1)
    assert solid.n_elements == 2
    assert liquid.n_elements == 8
    assert solid.vertices[-1] == liquid.vertices[0]


def test_perturb_interior_seeded_and_bounded():
    m = mesh.build_uniform(0, 1, 10, 2)
    p1 = mesh.perturb_interior(m, 0.2, seed=42)
    p2 = mesh.perturb_interior(m, 0.2, seed=42)
    assert np.array_equal(p1.vertices, p2.vertices)
    assert p1.vertices[0] == 0.0 and p1.vertices[-1] == 1.0
    assert not np.allclose(p1.vertices, m.vertices)
    # amplitude bound precludes tangling by construction
    h = np.diff(m.vertices)
    shift = np.abs(p1.vertices - m.vertices)[1:-1]
    assert np.all(shift <= 0.2 * np.minimum(h[:-1], h[1:]) + 1e-15)


def test_perturb_keeps_interface(tmp_path):
    m = mesh.build_stefan_bisection(1)
    p = mesh.perturb_interior(m, 0.1, seed=1)
    assert p.vertices[p.interface_index] == m.vertices[m.interface_index]


def test_mesh_csv_dump(tmp_path):
    m = mesh.build_stefan_bisection(1)
    path = tmp_path / "mesh.csv"
    mesh.write_mesh_csv(m, path)
    lines = path.read_text().splitlines()
    assert lines[1] == mesh.MESH_CSV_SCHEMA
    rows = [ln.split(",") for ln in lines[2:]]
    assert len(rows) == m.vertices.size
    assert [int(r[2]) for r in rows].count(1) == 1
    assert float(rows[2][1]) == m.vertices[2]
