"""The velocity/mass pipeline and SSP Runge-Kutta integrators.

One right-hand-side evaluation of the mesh/mass ODE system runs, in order:
solution recovery from the stored masses, monitor redistribution, a velocity
potential solve, recovery of a continuous piecewise linear mesh velocity from
the potential gradient, and the conservative update rate of the masses. The
moving boundary/interface velocity comes out of the same framework.

This module is the readable reference path built from the assembly
primitives; ``harness`` drives production runs through the fused kernels in
``_core`` (both paths are equivalence-tested).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _core
from .errors import (DegenerateMonitorError, DegenerateWeightError,
                     MeshTanglingError, SingularSystemError)
from .fem import canonical_tables
from .mesh import Mesh1D
from .problems import ProblemSpec, problem_weak_forms

VARIANTS = {"interpolation": _core.V_INTERPOLATION,
            "projection": _core.V_PROJECTION}


def quadrature_order(problem: ProblemSpec, p: int) -> int:
    """Point count making every assembled integrand exactly integrable."""
    if problem.kind == "pme":
        m = problem.pme_exponent
        return max(p + 2, math.ceil((m + 2) * p / 2) + 1)
    return p + 2


ERROR_EXTRA_POINTS = 5  # error-norm rules use p + 5 points


# ---------------------------------------------------------------------------
# Value types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScalarField:
    """Global continuous degree-p Lagrange coefficients over a mesh."""

    mesh: Mesh1D
    coeffs: np.ndarray

    def __post_init__(self):
        if self.coeffs.size != self.mesh.n_dofs:
            raise ValueError("coefficient count does not match the space")

    def __call__(self, x):
        if np.isscalar(x):
            return _core.eval_field_at(self.mesh.vertices, self.coeffs,
                                       self.mesh.degree, float(x))
        xs = np.asarray(x, dtype=float)
        out = np.empty(xs.size)
        _core.eval_field_many(self.mesh.vertices, self.coeffs,
                              self.mesh.degree, xs.ravel(), out)
        return out.reshape(xs.shape)


@dataclass(frozen=True)
class MassDistribution:
    """Per-test-function masses; the conserved unknowns of the ODE system.

    For a two-phase mesh ``mu`` holds the solid block then the liquid block
    (the interface test function appears once per phase); ``phase_split`` is
    the solid block length. ``theta`` is the total, Sum(mu).
    """

    mu: np.ndarray
    theta: float
    phase_split: int | None = None

    @classmethod
    def from_vector(cls, mu: np.ndarray, phase_split: int | None = None):
        return cls(mu=mu, theta=float(mu.sum()), phase_split=phase_split)

    def solid(self) -> np.ndarray:
        return self.mu[: self.phase_split]

    def liquid(self) -> np.ndarray:
        return self.mu[self.phase_split:]


@dataclass(frozen=True)
class MonitorDistribution:
    """Normalized distribution of a monitor integral between test functions."""

    kind: str  # "mass" or "area"
    c: np.ndarray
    theta_m: float


@dataclass(frozen=True)
class VelocityField:
    """Vertex velocities defining the continuous piecewise linear motion.

    ``recovered`` holds the degree-p field the vertex values were sampled
    from (None for the piecewise-linear projection variant).
    """

    vertex_values: np.ndarray
    recovered: np.ndarray | None = None

    def at_quadrature(self, qx: np.ndarray) -> np.ndarray:
        v = self.vertex_values
        return v[:-1, None] + (v[1:] - v[:-1])[:, None] * 0.5 * (qx[None, :] + 1.0)


@dataclass(frozen=True)
class PotentialField:
    """Velocity potential, fixed at one DOF to pick the gauge."""

    mesh: Mesh1D
    coeffs: np.ndarray
    pin_index: int = 0
    pin_value: float = 0.0


@dataclass(frozen=True)
class SystemState:
    mesh: Mesh1D
    mass: MassDistribution
    time: float


@dataclass(frozen=True)
class SystemRate:
    vertex_velocities: np.ndarray
    mu_dot: np.ndarray
    dtime: float = 1.0


# ---------------------------------------------------------------------------
# Pipeline steps
# ---------------------------------------------------------------------------


def _band_solve(ab_bw, n, p, b, constraints, what):
    ab, bw = ab_bw
    rhs = b.copy()
    if constraints:
        cidx = np.fromiter(constraints.keys(), dtype=np.int64)
        cval = np.fromiter((constraints[int(i)] for i in cidx), dtype=float)
        _core.apply_dirichlet(ab, bw, rhs, cidx, cval)
    ipiv = np.empty(n, dtype=np.int64)
    st = _core.band_factor(ab, bw, ipiv)
    if st >= 0:
        raise SingularSystemError(int(st), what)
    _core.band_solve(ab, bw, ipiv, rhs)
    return rhs


def interpolate(mesh: Mesh1D, fn) -> ScalarField:
    """Nodal interpolant of fn at the p+1 uniform points of each element."""
    return ScalarField(mesh, np.asarray(fn(mesh.dof_points()), dtype=float))


def mass_from_field(mesh: Mesh1D, u: ScalarField, q: int) -> MassDistribution:
    """Assemble the per-test-function masses of a field (per phase if split)."""
    _, qw, bmat, _, _, _, _, _ = canonical_tables(mesh.degree, q)
    split = _core.K_STEFAN if mesh.interface_index is not None else _core.K_CG
    iface = mesh.interface_index if mesh.interface_index is not None else -1
    mu = _core.mass_from_field(split, mesh.vertices, u.coeffs, mesh.degree,
                               iface, qw, bmat)
    phase_split = None
    if mesh.interface_index is not None:
        phase_split = mesh.interface_index * mesh.degree + 1
    return MassDistribution.from_vector(mu, phase_split)


def recover_solution(mesh: Mesh1D, mass: MassDistribution,
                     dirichlet: dict[int, float]) -> ScalarField:
    """Invert the mass matrix to get nodal values from stored masses.

    Constraints are keyed by global DOF; on a two-phase mesh each phase is
    recovered independently (the interface constraint applies to both sides).
    """
    p = mesh.degree
    q = p + 2
    _, _, _, _, mloc, _, _, _ = canonical_tables(p, q)
    ng = mesh.n_dofs
    if mesh.interface_index is None:
        ab = np.zeros((3 * p + 1, ng))
        _core.assemble_mass(mesh.vertices, p, mloc, ab)
        coeffs = _band_solve((ab, p), ng, p, mass.mu, dirichlet, "mass matrix")
        return ScalarField(mesh, coeffs)

    k = mesh.interface_index
    ns = k * p + 1
    out = np.zeros(ng)
    for phase, (lo_dof, n_loc) in enumerate(((0, ns), (ns - 1, ng - ns + 1))):
        verts = mesh.vertices[: k + 1] if phase == 0 else mesh.vertices[k:]
        ab = np.zeros((3 * p + 1, n_loc))
        _core.assemble_mass(verts, p, mloc, ab)
        local_dirichlet = {g - lo_dof: v for g, v in dirichlet.items()
                           if lo_dof <= g < lo_dof + n_loc}
        blk = mass.mu[:ns] if phase == 0 else mass.mu[ns:]
        coeffs = _band_solve((ab, p), n_loc, p, blk, local_dirichlet, "mass matrix")
        out[lo_dof: lo_dof + n_loc] = coeffs
    return ScalarField(mesh, out)


def monitor_distribution(mesh: Mesh1D, u: ScalarField | None,
                         kind: str) -> MonitorDistribution:
    """Distribution of the monitor integral between the test functions.

    kind "mass" uses the solution itself as density, "area" a unit density.
    """
    p = mesh.degree
    q = p + 2
    qx, qw, bmat, _, _, _, bvec, _ = canonical_tables(p, q)
    n = mesh.n_elements
    raw = np.zeros(mesh.n_dofs)
    if kind == "area":
        _core.assemble_area(mesh.vertices, p, bvec, raw)
    elif kind == "mass":
        uq = np.empty((n, q))
        _core.field_at_q(u.coeffs, p, bmat, n, uq)
        _core.assemble_value_func(mesh.vertices, p, qw, bmat, uq, raw)
    else:
        raise ValueError(f"unknown monitor kind {kind!r}")
    theta_m = float(raw.sum())
    if abs(theta_m) < 1e-300:
        raise DegenerateMonitorError("monitor integral vanished")
    return MonitorDistribution(kind=kind, c=raw / theta_m, theta_m=theta_m)


def solve_potential_mass(mesh: Mesh1D, u: ScalarField,
                         c: MonitorDistribution | None,
                         problem: ProblemSpec, t: float
                         ) -> tuple[PotentialField, float]:
    """Velocity potential from local conservation of the solution mass.

    Returns the gauge-pinned potential and the total-mass rate. The monitor
    distribution is unused (and may be None) when the total is conserved.
    """
    wf = problem_weak_forms(problem)
    p = mesh.degree
    q = quadrature_order(problem, p)
    qx, qw, bmat, dmat, _, _, bvec, _ = canonical_tables(p, q)
    n = mesh.n_elements
    ng = mesh.n_dofs
    v = mesh.vertices

    uq = np.empty((n, q))
    _core.field_at_q(u.coeffs, p, bmat, n, uq)
    udq = np.empty((n, q))
    _core.deriv_at_q(v, u.coeffs, p, dmat, udq)

    theta_dot = wf.theta_dot(t, float(v[-1] - v[0]))
    b = np.zeros(ng)
    _core.assemble_grad_func(p, qw, dmat, wf.diffusive_flux(uq, udq), b)
    b = -b
    if wf.sink != 0.0:
        area = np.zeros(ng)
        _core.assemble_area(v, p, bvec, area)
        b -= wf.sink * area
    gl = wf.neumann("left", t)
    if gl is not None:
        b[0] -= gl  # outward normal is -1 at the left end
    gr = wf.neumann("right", t)
    if gr is not None:
        b[ng - 1] += gr
    if theta_dot != 0.0:
        if c is None:
            raise DegenerateMonitorError(
                "monitor distribution required when the total mass changes")
        b -= c.c * theta_dot

    ab = np.zeros((3 * p + 1, ng))
    _core.assemble_wstiff(v, p, qw, dmat, uq, ab)
    try:
        coeffs = _band_solve((ab, p), ng, p, b, {0: 0.0}, "weighted stiffness")
    except SingularSystemError as exc:
        raise DegenerateWeightError(
            f"weighted stiffness singular (weight vanishing?): {exc}") from exc
    return PotentialField(mesh, coeffs), theta_dot


def solve_potential_area(phase_mesh: Mesh1D,
                         boundary_flux: tuple[float, float]
                         ) -> tuple[PotentialField, float]:
    """Velocity potential preserving relative element lengths in one phase.

    ``boundary_flux`` holds the outward-signed normal velocities (v.n) at the
    phase's left and right endpoints; their sum is the phase length rate.
    """
    p = phase_mesh.degree
    q = p + 2
    qx, qw, _, _, _, kloc, bvec, _ = canonical_tables(p, q)
    ng = phase_mesh.n_dofs
    v = phase_mesh.vertices

    fl, fr = boundary_flux
    theta_dot = fl + fr
    area = np.zeros(ng)
    _core.assemble_area(v, p, bvec, area)
    length = float(v[-1] - v[0])
    b = -(area / length) * theta_dot
    b[0] += fl
    b[ng - 1] += fr

    ab = np.zeros((3 * p + 1, ng))
    _core.assemble_stiff(v, p, kloc, ab)
    try:
        coeffs = _band_solve((ab, p), ng, p, b, {0: 0.0}, "stiffness")
    except SingularSystemError as exc:
        raise DegenerateWeightError(str(exc)) from exc
    return PotentialField(phase_mesh, coeffs), theta_dot


def _potential_gradient_at_q(mesh: Mesh1D, phi, dmat) -> np.ndarray:
    """phi may be one PotentialField or a per-phase pair on a split mesh."""
    p = mesh.degree
    n = mesh.n_elements
    q = dmat.shape[0]
    out = np.empty((n, q))
    if isinstance(phi, PotentialField):
        _core.deriv_at_q(mesh.vertices, phi.coeffs, p, dmat, out)
        return out
    k = mesh.interface_index
    solid, liquid = phi
    _core.deriv_at_q(mesh.vertices[: k + 1], solid.coeffs, p, dmat, out[:k])
    _core.deriv_at_q(mesh.vertices[k:], liquid.coeffs, p, dmat, out[k:])
    return out


def recover_velocity(mesh: Mesh1D, phi, prescribed: dict[int, float],
                     variant: str = "interpolation",
                     q: int | None = None) -> VelocityField:
    """Mesh velocity from a potential gradient.

    The interpolation variant projects the gradient onto the full degree-p
    space and samples the result at the vertices; the projection variant
    projects straight onto the continuous piecewise linear space (retained as
    a lower-order control). ``prescribed`` pins vertex velocities strongly,
    keyed by vertex index.
    """
    p = mesh.degree
    if q is None:
        q = p + 2
    qx, qw, bmat, dmat, mloc, _, _, b1mat = canonical_tables(p, q)
    n = mesh.n_elements
    v = mesh.vertices
    phid = _potential_gradient_at_q(mesh, phi, dmat)

    if variant == "interpolation":
        ng = mesh.n_dofs
        b = np.zeros(ng)
        _core.assemble_value_func(v, p, qw, bmat, phid, b)
        ab = np.zeros((3 * p + 1, ng))
        _core.assemble_mass(v, p, mloc, ab)
        cons = {k * p: val for k, val in prescribed.items()}
        coeffs = _band_solve((ab, p), ng, p, b, cons, "mass matrix")
        return VelocityField(vertex_values=coeffs[::p].copy(), recovered=coeffs)
    if variant != "projection":
        raise ValueError(f"unknown velocity recovery variant {variant!r}")
    _, _, _, _, mloc1, _, _, _ = canonical_tables(1, q)
    b = np.zeros(n + 1)
    _core.assemble_value_func(v, 1, qw, b1mat, phid, b)
    ab = np.zeros((4, n + 1))
    _core.assemble_mass(v, 1, mloc1, ab)
    vals = _band_solve((ab, 1), n + 1, 1, b, dict(prescribed), "linear mass matrix")
    return VelocityField(vertex_values=vals, recovered=None)


def ale_rate(mesh: Mesh1D, u: ScalarField, vel: VelocityField,
             problem: ProblemSpec, t: float) -> MassDistribution:
    """Rate of change of the per-test-function masses on the moving mesh.

    The problems' boundary conditions are already substituted: moving-end
    boundary terms vanish, fixed-end Neumann data and interface fluxes appear
    as endpoint contributions.
    """
    wf = problem_weak_forms(problem)
    p = mesh.degree
    q = quadrature_order(problem, p)
    qx, qw, bmat, dmat, _, _, bvec, _ = canonical_tables(p, q)
    n = mesh.n_elements
    ng = mesh.n_dofs
    v = mesh.vertices

    uq = np.empty((n, q))
    _core.field_at_q(u.coeffs, p, bmat, n, uq)
    udq = np.empty((n, q))
    _core.deriv_at_q(v, u.coeffs, p, dmat, udq)
    vtq = vel.at_quadrature(qx)

    if mesh.interface_index is None:
        f = wf.diffusive_flux(uq, udq) + uq * vtq
        out = np.zeros(ng)
        _core.assemble_grad_func(p, qw, dmat, f, out)
        out = -out
        if wf.sink != 0.0:
            area = np.zeros(ng)
            _core.assemble_area(v, p, bvec, area)
            out -= wf.sink * area
        gl = wf.neumann("left", t)
        if gl is not None:
            out[0] -= gl
        gr = wf.neumann("right", t)
        if gr is not None:
            out[ng - 1] += gr
        return MassDistribution.from_vector(out)

    k = mesh.interface_index
    ns = k * p + 1
    nl = (n - k) * p + 1
    usx = _core.interface_gradient(v, u.coeffs, p, k, 0)
    ulx = _core.interface_gradient(v, u.coeffs, p, k, 1)
    u0x = _core.elem_deriv_at(v, u.coeffs, p, 0, -1.0)
    kaps = problem.stefan.kappa_solid
    kapl = problem.stefan.kappa_liquid
    out = np.zeros(ns + nl)
    fs = wf.diffusive_flux(uq[:k], udq[:k], phase=0) + uq[:k] * vtq[:k]
    fl = wf.diffusive_flux(uq[k:], udq[k:], phase=1) + uq[k:] * vtq[k:]
    _core.assemble_grad_func(p, qw, dmat, fs, out[:ns])
    _core.assemble_grad_func(p, qw, dmat, fl, out[ns:])
    out = -out
    out[ns - 1] += kaps * usx
    out[0] -= kaps * u0x
    out[ns] -= kapl * ulx
    out[ns + nl - 1] += kapl * wf.neumann("right", t)
    return MassDistribution.from_vector(out, phase_split=ns)


# ---------------------------------------------------------------------------
# Full right-hand side and time stepping
# ---------------------------------------------------------------------------


def velocity_from_solution(mesh: Mesh1D, u: ScalarField, problem: ProblemSpec,
                           t: float, variant: str = "interpolation"
                           ) -> VelocityField:
    """Monitor redistribution, potential solve and velocity recovery."""
    p = mesh.degree
    q = quadrature_order(problem, p)
    wf = problem_weak_forms(problem)
    if problem.kind == "stefan":
        k = mesh.interface_index
        usx = _core.interface_gradient(mesh.vertices, u.coeffs, p, k, 0)
        ulx = _core.interface_gradient(mesh.vertices, u.coeffs, p, k, 1)
        vi = wf.interface_velocity(usx, ulx)
        phi_s, _ = solve_potential_area(mesh.phase_view(0), (0.0, vi))
        phi_l, _ = solve_potential_area(mesh.phase_view(1), (-vi, 0.0))
        return recover_velocity(mesh, (phi_s, phi_l),
                                {0: 0.0, k: vi, mesh.n_elements: 0.0},
                                variant, q=q)
    theta_changes = problem.kind == "crank_gupta"
    c = monitor_distribution(mesh, u, "mass") if theta_changes else None
    phi, _ = solve_potential_mass(mesh, u, c, problem, t)
    if problem.kind == "crank_gupta":
        prescribed = {0: 0.0}
    elif problem.pme_exponent == 1:
        # linear contact: impose v = -u_x at the moving ends from one-sided
        # nodal gradients (projected potential gradients lose an order there)
        n = mesh.n_elements
        prescribed = {
            0: -_core.interface_gradient(mesh.vertices, u.coeffs, p, 0, 1),
            n: -_core.interface_gradient(mesh.vertices, u.coeffs, p, n, 0),
        }
    else:
        prescribed = {}
    return recover_velocity(mesh, phi, prescribed, variant, q=q)


def evaluate_rhs(state: SystemState, problem: ProblemSpec,
                 variant: str = "interpolation") -> SystemRate:
    """One evaluation of the mesh/mass ODE right-hand side."""
    mesh = state.mesh
    dirichlet = problem.dirichlet_dofs(
        mesh.n_dofs,
        mesh.interface_dof if mesh.interface_index is not None else None)
    u = recover_solution(mesh, state.mass, dirichlet)
    vel = velocity_from_solution(mesh, u, problem, state.time, variant)
    rate = ale_rate(mesh, u, vel, problem, state.time)
    return SystemRate(vertex_velocities=vel.vertex_values, mu_dot=rate.mu)


def _stage(state: SystemState, rate: SystemRate, dt: float,
           stage: int) -> SystemState:
    try:
        mesh = state.mesh.with_vertices(
            state.mesh.vertices + dt * rate.vertex_velocities)
    except MeshTanglingError as exc:
        raise MeshTanglingError(f"mesh tangled in stage {stage}: {exc}") from exc
    mass = MassDistribution.from_vector(state.mass.mu + dt * rate.mu_dot,
                                        state.mass.phase_split)
    return SystemState(mesh, mass, state.time + dt * rate.dtime)


def _blend(a: float, sa: SystemState, b: float, sb: SystemState,
           stage: int) -> SystemState:
    try:
        mesh = sa.mesh.with_vertices(a * sa.mesh.vertices + b * sb.mesh.vertices)
    except MeshTanglingError as exc:
        raise MeshTanglingError(f"mesh tangled in stage {stage}: {exc}") from exc
    mass = MassDistribution.from_vector(a * sa.mass.mu + b * sb.mass.mu,
                                        sa.mass.phase_split)
    return SystemState(mesh, mass, a * sa.time + b * sb.time)


def ssp_rk_step(state: SystemState, rhs, dt: float, order: int) -> SystemState:
    """One strong-stability-preserving Runge-Kutta step (orders 1, 2, 3).

    ``rhs`` maps SystemState -> SystemRate. Mesh positions and masses advance
    together; a tangled mesh after any stage aborts with the stage index.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    if order == 1:
        return _stage(state, rhs(state), dt, 1)
    if order == 2:
        s1 = _stage(state, rhs(state), dt, 1)
        return _blend(0.5, state, 0.5, _stage(s1, rhs(s1), dt, 2), 2)
    if order == 3:
        s1 = _stage(state, rhs(state), dt, 1)
        s2 = _blend(0.75, state, 0.25, _stage(s1, rhs(s1), dt, 2), 2)
        return _blend(1.0 / 3.0, state, 2.0 / 3.0, _stage(s2, rhs(s2), dt, 3), 3)
    raise ValueError(f"SSP-RK order must be 1, 2 or 3, got {order}")


def initial_state(problem: ProblemSpec, mesh: Mesh1D) -> SystemState:
    """Interpolate the initial data and assemble its mass distribution."""
    u = interpolate(mesh, problem.initial_values)
    q = quadrature_order(problem, mesh.degree)
    return SystemState(mesh, mass_from_field(mesh, u, q), problem.t0)


def gcl_residual(mesh: Mesh1D, vel: VelocityField, dt: float = 1e-3) -> float:
    """Geometric conservation check for one Euler substep (diagnostic only).

    Compares the geometric rate of the test-function areas under the
    piecewise linear motion against the divergence-form integral identity;
    returns the max abs mismatch. Small by construction in 1D; reported,
    never enforced.
    """
    p = mesh.degree
    q = p + 2
    qx, qw, _, dmat, _, _, bvec, _ = canonical_tables(p, q)
    v = mesh.vertices
    moved = v + dt * vel.vertex_values
    a0 = np.zeros(mesh.n_dofs)
    a1 = np.zeros(mesh.n_dofs)
    _core.assemble_area(v, p, bvec, a0)
    _core.assemble_area(moved, p, bvec, a1)
    geometric = (a1 - a0) / dt

    vtq = vel.at_quadrature(qx)
    rhs = np.zeros(mesh.n_dofs)
    _core.assemble_grad_func(p, qw, dmat, vtq, rhs)
    rhs = -rhs
    rhs[0] -= vel.vertex_values[0]
    rhs[-1] += vel.vertex_values[-1]
    return float(np.max(np.abs(geometric - rhs)))
