"""Moving 1D meshes: construction, refinement and geometric queries.

A mesh is an ordered set of vertices; continuous degree-p Lagrange DOFs sit
at p+1 uniformly spaced points per element (shared at element boundaries).
Meshes are immutable; motion happens by building a new mesh from updated
vertex coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, MeshTanglingError


@dataclass(frozen=True)
class Mesh1D:
    """Strictly increasing vertex coordinates with an optional phase marker.

    Parameters
    ----------
    vertices : ndarray
        Element boundary coordinates, strictly increasing.
    degree : int
        Polynomial degree p >= 1 of the Lagrange space.
    interface_index : int or None
        Interior vertex separating the two phases, when present.
    """

    vertices: np.ndarray
    degree: int
    interface_index: int | None = None

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.vertices, dtype=np.float64))
        if v.ndim != 1 or v.size < 2:
            raise ValueError("mesh needs at least two vertices")
        if not np.all(np.diff(v) > 0.0):
            raise MeshTanglingError("vertices are not strictly increasing")
        if self.degree < 1:
            raise ValueError(f"degree must be >= 1, got {self.degree}")
        if self.interface_index is not None:
            if not 0 < self.interface_index < v.size - 1:
                raise ValueError("interface_index must mark an interior vertex")
        v.flags.writeable = False
        object.__setattr__(self, "vertices", v)

    @property
    def n_elements(self) -> int:
        return self.vertices.size - 1

    @property
    def n_dofs(self) -> int:
        return self.n_elements * self.degree + 1

    def element_lengths(self) -> np.ndarray:
        return np.diff(self.vertices)

    def dof_points(self) -> np.ndarray:
        """Global Lagrange node coordinates (p+1 uniform points per element)."""
        p = self.degree
        v = self.vertices
        pts = np.empty(self.n_elements * p + 1)
        for e in range(self.n_elements):
            h = v[e + 1] - v[e]
            for j in range(p):
                pts[e * p + j] = v[e] + j * h / p
        pts[-1] = v[-1]
        return pts

    def with_vertices(self, vertices: np.ndarray) -> "Mesh1D":
        """New mesh with moved vertices (tangling raises)."""
        return Mesh1D(vertices, self.degree, self.interface_index)

    def phase_view(self, phase: int) -> "Mesh1D":
        """Sub-mesh of one phase (0 = left of the interface, 1 = right)."""
        if self.interface_index is None:
            raise ValueError("mesh has no interface marker")
        k = self.interface_index
        v = self.vertices[: k + 1] if phase == 0 else self.vertices[k:]
        return Mesh1D(v.copy(), self.degree)

    @property
    def interface_dof(self) -> int:
        if self.interface_index is None:
            raise ValueError("mesh has no interface marker")
        return self.interface_index * self.degree


def build_uniform(a: float, b: float, n: int, p: int) -> Mesh1D:
    """n equal elements spanning [a, b]."""
    if n < 1:
        raise ValueError(f"element count must be positive, got {n}")
    if not a < b:
        raise ValueError(f"need a < b, got a={a}, b={b}")
    return Mesh1D(np.linspace(a, b, n + 1), p)


def refine_uniform(mesh: Mesh1D) -> Mesh1D:
    """Split every element at its midpoint (existing vertices unchanged)."""
    v = mesh.vertices
    out = np.empty(2 * v.size - 1)
    out[0::2] = v
    out[1::2] = 0.5 * (v[:-1] + v[1:])
    iface = None if mesh.interface_index is None else 2 * mesh.interface_index
    return Mesh1D(out, mesh.degree, iface)


def _default_interface_position() -> float:
    from .problems import stefan_default_parameters

    params = stefan_default_parameters()
    return params.interface_position(params.t0)


def build_stefan_bisection(p: int, refinements: int = 0,
                           interface_position: float | None = None) -> Mesh1D:
    """Coarsest two-phase mesh: 2 uniform elements left of the interface and
    8 elements to its right obtained by bisecting the interval adjacent to
    the interface 7 times; then ``refinements`` uniform refinements.
    """
    if refinements < 0:
        raise ValueError("refinements must be >= 0")
    s0 = _default_interface_position() if interface_position is None else interface_position
    if not 0.0 < s0 < 1.0:
        raise ValueError(f"interface must lie inside (0, 1), got {s0}")
    left = [0.0, 0.5 * s0, s0]
    right = [s0, 1.0]
    for _ in range(7):
        right.insert(1, 0.5 * (right[0] + right[1]))
    mesh = Mesh1D(np.array(left + right[1:]), p, interface_index=2)
    for _ in range(refinements):
        mesh = refine_uniform(mesh)
    return mesh


def geometric_ratio(first: float, total: float, count: int,
                    tol: float = 1e-14, max_iter: int = 200) -> float:
    """Common ratio r with first*(1 + r + ... + r^(count-1)) = total.

    Bisection on the monotone partial sum; robustness matters more than
    speed for a setup-time computation.
    """
    if first <= 0.0 or total <= 0.0 or count < 1:
        raise ValueError("need positive first term, total and count")

    def partial(r: float) -> float:
        s = 0.0
        term = first
        for _ in range(count):
            s += term
            term *= r
        return s

    if count == 1:
        if abs(first - total) > tol * total:
            raise ConfigError("single element cannot fill the interval")
        return 1.0
    if abs(partial(1.0) - total) <= tol * total:
        return 1.0
    if first > total * (1.0 + tol):
        raise ConfigError("geometric ratio root not bracketed: first term "
                          "already exceeds the interval")
    lo, hi = 0.0, 1.0
    while partial(hi) < total:
        hi *= 2.0
        if hi > 1e12:
            raise ConfigError("geometric ratio root not bracketed")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if partial(mid) < total:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * max(1.0, hi):
            break
    return 0.5 * (lo + hi)


def build_stefan_geometric(p: int, refinements: int = 0,
                           interface_position: float | None = None,
                           n_per_phase: int = 5) -> Mesh1D:
    """Coarsest two-phase mesh with uniform left phase and a geometric
    progression on the right whose first element matches the left element
    length and whose lengths exactly fill the right interval.
    """
    if refinements < 0:
        raise ValueError("refinements must be >= 0")
    if n_per_phase < 1:
        raise ValueError("n_per_phase must be >= 1")
    s0 = _default_interface_position() if interface_position is None else interface_position
    if not 0.0 < s0 < 1.0:
        raise ValueError(f"interface must lie inside (0, 1), got {s0}")
    ell = s0 / n_per_phase
    r = geometric_ratio(ell, 1.0 - s0, n_per_phase)
    v = np.empty(2 * n_per_phase + 1)
    v[: n_per_phase + 1] = np.linspace(0.0, s0, n_per_phase + 1)
    length = ell
    for j in range(n_per_phase - 1):
        v[n_per_phase + 1 + j] = v[n_per_phase + j] + length
        length *= r
    v[-1] = 1.0
    mesh = Mesh1D(v, p, interface_index=n_per_phase)
    for _ in range(refinements):
        mesh = refine_uniform(mesh)
    return mesh


def perturb_interior(mesh: Mesh1D, amplitude: float, seed: int) -> Mesh1D:
    """Displace interior vertices by seeded uniform random fractions of the
    smaller adjacent element length. The interface vertex, when marked,
    stays put so the phase split is preserved.
    """
    if not 0.0 <= amplitude < 0.5:
        raise ValueError("amplitude must lie in [0, 0.5) to preclude tangling")
    rng = np.random.default_rng(seed)
    v = mesh.vertices.copy()
    h = np.diff(v)
    shifts = rng.uniform(-1.0, 1.0, size=v.size - 2)
    for i in range(1, v.size - 1):
        if mesh.interface_index is not None and i == mesh.interface_index:
            continue
        v[i] += amplitude * shifts[i - 1] * min(h[i - 1], h[i])
    return Mesh1D(v, mesh.degree, mesh.interface_index)


MESH_CSV_SCHEMA = "vertex_index,coordinate,is_interface"


def write_mesh_csv(mesh: Mesh1D, path) -> None:
    with open(path, "w") as fh:
        fh.write("# mmfem1d mesh csv v1\n")
        fh.write(MESH_CSV_SCHEMA + "\n")
        for i, x in enumerate(mesh.vertices):
            flag = 1 if mesh.interface_index == i else 0
            fh.write(f"{i},{float(x)!r},{flag}\n")
