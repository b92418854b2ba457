"""Quadrature, Lagrange bases, banded assembly and the direct banded solver.

These wrap the flat-array kernels in ``_core`` with small value types. All
operations are pure; assembly never applies boundary constraints (those are
imposed when solving).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import _core
from .errors import SingularSystemError
from .mesh import Mesh1D


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss-Legendre abscissae/weights on the canonical interval [-1, 1]."""

    points: np.ndarray
    weights: np.ndarray

    @property
    def n(self) -> int:
        return self.points.size


def gauss_rule(q: int) -> QuadratureRule:
    """q-point Gauss-Legendre rule, exact for polynomials of degree 2q - 1."""
    if not 1 <= q <= 20:
        raise ValueError(f"quadrature point count must be in [1, 20], got {q}")
    x, w = np.polynomial.legendre.leggauss(q)
    return QuadratureRule(points=x, weights=w)


def lagrange_basis(p: int, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Values and d/dt derivatives of the p+1 uniform-node basis at t."""
    if p < 1:
        raise ValueError(f"degree must be >= 1, got {p}")
    vals = np.empty(p + 1)
    ders = np.empty(p + 1)
    _core.lagrange_vals(p, float(t), vals)
    _core.lagrange_ders(p, float(t), ders)
    return vals, ders


@lru_cache(maxsize=None)
def canonical_tables(p: int, q: int):
    """Per-(degree, rule) tables reused by assembly and the fast kernels.

    Returns (qx, qw, B, D, Mloc, Kloc, bvec, B1): basis values/derivatives at
    the quadrature points, the canonical mass/stiffness blocks, the canonical
    basis integrals, and the piecewise-linear basis values.
    """
    rule = gauss_rule(q)
    qx, qw = rule.points, rule.weights
    bmat = np.empty((q, p + 1))
    dmat = np.empty((q, p + 1))
    for i, t in enumerate(qx):
        bmat[i], dmat[i] = lagrange_basis(p, t)
    mloc = np.einsum("q,qa,qb->ab", qw, bmat, bmat)
    kloc = np.einsum("q,qa,qb->ab", qw, dmat, dmat)
    bvec = qw @ bmat
    if p == 1:
        b1 = bmat
    else:
        b1 = np.empty((q, 2))
        for i, t in enumerate(qx):
            b1[i], _ = lagrange_basis(1, t)
    for a in (qx, qw, bmat, dmat, mloc, kloc, bvec, b1):
        a.flags.writeable = False
    return qx, qw, bmat, dmat, mloc, kloc, bvec, b1


@dataclass(frozen=True)
class TestSpace:
    """Continuous degree-p Lagrange space with strongly constrained DOFs."""

    mesh: Mesh1D
    dirichlet: dict[int, float] = field(default_factory=dict)
    quadrature: int = 0  # 0 means the default p + 2 points

    @property
    def degree(self) -> int:
        return self.mesh.degree

    @property
    def n_dofs(self) -> int:
        return self.mesh.n_dofs

    @property
    def q(self) -> int:
        return self.quadrature if self.quadrature > 0 else self.degree + 2

    def free_dofs(self) -> np.ndarray:
        mask = np.ones(self.n_dofs, dtype=bool)
        for c in self.dirichlet:
            mask[c] = False
        return np.nonzero(mask)[0]


@dataclass
class BandedMatrix:
    """Square band matrix, bw sub/superdiagonals, LAPACK-style packing."""

    ab: np.ndarray
    bw: int

    @classmethod
    def zeros(cls, n: int, bw: int) -> "BandedMatrix":
        return cls(ab=np.zeros((3 * bw + 1, n)), bw=bw)

    @property
    def n(self) -> int:
        return self.ab.shape[1]

    def __getitem__(self, ij: tuple[int, int]) -> float:
        i, j = ij
        if abs(i - j) > self.bw:
            return 0.0
        return self.ab[2 * self.bw + i - j, j]

    def add(self, i: int, j: int, v: float) -> None:
        self.ab[2 * self.bw + i - j, j] += v

    def to_dense(self) -> np.ndarray:
        a = np.zeros((self.n, self.n))
        for i in range(self.n):
            for j in range(max(0, i - self.bw), min(self.n, i + self.bw + 1)):
                a[i, j] = self[i, j]
        return a

    def copy(self) -> "BandedMatrix":
        return BandedMatrix(ab=self.ab.copy(), bw=self.bw)


def _eval_weight(weight, space: TestSpace, xq: np.ndarray) -> np.ndarray:
    if np.isscalar(weight):
        return np.full(xq.shape, float(weight))
    if callable(weight):
        return np.asarray(weight(xq), dtype=float)
    # coefficient vector of a field on the same space
    coeffs = np.asarray(weight, dtype=float)
    out = np.empty(xq.shape)
    _core.field_at_q(coeffs, space.degree, _tables(space)[2], space.mesh.n_elements, out)
    return out


def _tables(space: TestSpace):
    return canonical_tables(space.degree, space.q)


def _phys_points(space: TestSpace, qx: np.ndarray) -> np.ndarray:
    v = space.mesh.vertices
    return v[:-1, None] + 0.5 * (qx[None, :] + 1.0) * np.diff(v)[:, None]


def assemble_mass(space: TestSpace) -> BandedMatrix:
    """Matrix of basis-pair integrals over the current mesh (SPD on free DOFs)."""
    _, _, _, _, mloc, _, _, _ = _tables(space)
    out = BandedMatrix.zeros(space.n_dofs, space.degree)
    _core.assemble_mass(space.mesh.vertices, space.degree, mloc, out.ab)
    return out


def assemble_weighted_stiffness(space: TestSpace, weight) -> BandedMatrix:
    """Matrix of weight(x) * basis-gradient pairs.

    ``weight`` may be a scalar, a callable of physical coordinates, or a
    coefficient vector on the same space.
    """
    qx, qw, _, dmat, _, kloc, _, _ = _tables(space)
    out = BandedMatrix.zeros(space.n_dofs, space.degree)
    if np.isscalar(weight):
        _core.assemble_stiff(space.mesh.vertices, space.degree, kloc, out.ab)
        if weight != 1.0:
            out.ab *= float(weight)
        return out
    wq = _eval_weight(weight, space, _phys_points(space, qx))
    _core.assemble_wstiff(space.mesh.vertices, space.degree, qw, dmat, wq, out.ab)
    return out


def assemble_functional(space: TestSpace, integrand) -> np.ndarray:
    """Vector of integrals of basis_i * integrand(x).

    ``integrand`` is a callable of physical coordinates (arrays of shape
    (elements, points)), a scalar, or a coefficient vector. Endpoint terms
    are the caller's business.
    """
    qx, qw, bmat, _, _, _, _, _ = _tables(space)
    fq = _eval_weight(integrand, space, _phys_points(space, qx))
    out = np.zeros(space.n_dofs)
    _core.assemble_value_func(space.mesh.vertices, space.degree, qw, bmat, fq, out)
    return out


def assemble_gradient_functional(space: TestSpace, integrand) -> np.ndarray:
    """Vector of integrals of basis_i' * integrand(x)."""
    qx, qw, _, dmat, _, _, _, _ = _tables(space)
    fq = _eval_weight(integrand, space, _phys_points(space, qx))
    out = np.zeros(space.n_dofs)
    _core.assemble_grad_func(space.degree, qw, dmat, fq, out)
    return out


def solve_banded(a: BandedMatrix, b: np.ndarray,
                 constraints: dict[int, float] | None = None,
                 what: str = "system") -> np.ndarray:
    """Direct banded LU solve with strong constraint elimination.

    The input matrix is not modified. Raises SingularSystemError naming the
    first DOF whose pivot vanishes.
    """
    work = a.ab.copy()
    rhs = np.asarray(b, dtype=float).copy()
    if constraints:
        cidx = np.fromiter(constraints.keys(), dtype=np.int64)
        cval = np.fromiter((constraints[int(i)] for i in cidx), dtype=float)
        _core.apply_dirichlet(work, a.bw, rhs, cidx, cval)
    ipiv = np.empty(a.n, dtype=np.int64)
    st = _core.band_factor(work, a.bw, ipiv)
    if st >= 0:
        raise SingularSystemError(int(st), what)
    _core.band_solve(work, a.bw, ipiv, rhs)
    return rhs
