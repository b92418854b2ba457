"""Problem descriptors: weak-form data, boundary conditions and reference
solutions for the three built-in moving boundary problems.

* ``stefan``      -- two-phase linear diffusion with a phase-change interface.
* ``crank_gupta`` -- linear diffusion with a unit sink and a shrinking domain.
* ``pme``         -- nonlinear porous-medium flow with moving support.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from . import _core
from .errors import ConfigError

# ---------------------------------------------------------------------------
# Special functions
# ---------------------------------------------------------------------------


def erf(x):
    """Error function (scalar or array)."""
    if np.isscalar(x):
        return math.erf(x)
    return special.erf(np.asarray(x))


def erfc(x):
    """Complementary error function (scalar or array)."""
    if np.isscalar(x):
        return math.erfc(x)
    return special.erfc(np.asarray(x))


# ---------------------------------------------------------------------------
# Two-phase interface problem
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StefanParameters:
    """Physical constants of the two-phase problem.

    conductivity_* are thermal conductivities, capacity_* volumetric heat
    capacities, latent_heat the heat of phase change per unit volume.
    u_wall is the fixed Dirichlet value at x = 0, u_far the far-field value
    feeding the right-boundary flux.
    """

    conductivity_solid: float = 2.22
    conductivity_liquid: float = 0.556
    capacity_solid: float = 1.762
    capacity_liquid: float = 4.226
    latent_heat: float = 338.0
    u_wall: float = -20.0
    u_far: float = 10.0
    t0: float = 0.0012
    phi: float = 0.0  # transcendental root, filled in by the factory

    @property
    def kappa_solid(self) -> float:
        return self.conductivity_solid / self.capacity_solid

    @property
    def kappa_liquid(self) -> float:
        return self.conductivity_liquid / self.capacity_liquid

    def interface_position(self, t: float) -> float:
        return 2.0 * self.phi * math.sqrt(self.kappa_solid * t)

    def interface_speed(self, t: float) -> float:
        return self.phi * math.sqrt(self.kappa_solid / t)


def _phi_residual(phi: float, pr: StefanParameters) -> float:
    ks, kl = pr.conductivity_solid, pr.conductivity_liquid
    kaps, kapl = pr.kappa_solid, pr.kappa_liquid
    zc = phi * math.sqrt(kaps / kapl)
    return (
        math.exp(-phi * phi) / math.erf(phi)
        + (kl / ks) * math.sqrt(kaps / kapl) * pr.u_far
        * math.exp(-kaps * phi * phi / kapl) / (pr.u_wall * math.erfc(zc))
        + phi * pr.latent_heat * math.sqrt(math.pi) / (pr.capacity_solid * pr.u_wall)
    )


def _phi_residual_prime(phi: float, pr: StefanParameters) -> float:
    ks, kl = pr.conductivity_solid, pr.conductivity_liquid
    kaps, kapl = pr.kappa_solid, pr.kappa_liquid
    two_rpi = 2.0 / math.sqrt(math.pi)
    e = math.erf(phi)
    g = math.exp(-phi * phi)
    d_a = (-2.0 * phi * g * e - g * two_rpi * g) / (e * e)
    delta = math.sqrt(kaps / kapl)
    beta = (kl / ks) * delta * pr.u_far / pr.u_wall
    ec = math.erfc(delta * phi)
    gg = math.exp(-kaps * phi * phi / kapl)
    d_b = beta * (
        -2.0 * (kaps / kapl) * phi * gg * ec
        + gg * two_rpi * delta * math.exp(-delta * delta * phi * phi)
    ) / (ec * ec)
    d_c = pr.latent_heat * math.sqrt(math.pi) / (pr.capacity_solid * pr.u_wall)
    return d_a + d_b + d_c


def stefan_phi_root(params: StefanParameters | None = None,
                    bracket: tuple[float, float] = (0.05, 0.5)) -> float:
    """Root of the interface transcendental equation.

    Safeguarded Newton: steps falling outside the sign-change bracket (or
    failing to shrink the residual) are replaced by bisection. Converges to
    |residual| <= 1e-14.
    """
    pr = params if params is not None else StefanParameters()
    a, b = bracket
    fa, fb = _phi_residual(a, pr), _phi_residual(b, pr)
    if fa == 0.0:
        return a
    if fb == 0.0:
        return b
    if fa * fb > 0.0:
        raise ConfigError(f"no sign change for the interface root in [{a}, {b}]")
    x = 0.5 * (a + b)
    fx = _phi_residual(x, pr)
    for _ in range(200):
        if abs(fx) <= 1e-14:
            return x
        dfx = _phi_residual_prime(x, pr)
        step_ok = dfx != 0.0
        if step_ok:
            xn = x - fx / dfx
            step_ok = a < xn < b
        if not step_ok:
            xn = 0.5 * (a + b)
        fn = _phi_residual(xn, pr)
        if fa * fn <= 0.0:
            b, fb = xn, fn
        else:
            a, fa = xn, fn
        x, fx = xn, fn
        if b - a <= 4e-17 * max(1.0, abs(x)):
            break
    return x


def stefan_default_parameters() -> StefanParameters:
    pr = StefanParameters()
    return StefanParameters(phi=stefan_phi_root(pr),
                            **{k: getattr(pr, k) for k in (
                                "conductivity_solid", "conductivity_liquid",
                                "capacity_solid", "capacity_liquid",
                                "latent_heat", "u_wall", "u_far", "t0")})


def stefan_exact(x, t, params: StefanParameters):
    """Two-branch closed-form temperature; zero on the interface."""
    pf = _pf_stefan(params)
    if np.isscalar(x):
        return _core.stefan_exact(float(x), float(t), pf)
    xs = np.asarray(x, dtype=float)
    out = np.empty(xs.shape)
    flat = xs.ravel()
    oflat = out.ravel()
    for i in range(flat.size):
        oflat[i] = _core.stefan_exact(flat[i], float(t), pf)
    return out


def stefan_right_flux(t: float, params: StefanParameters) -> float:
    """Gradient of the liquid branch at the fixed boundary x = 1."""
    return _core.stefan_right_flux(float(t), _pf_stefan(params))


# ---------------------------------------------------------------------------
# Absorption-diffusion problem
# ---------------------------------------------------------------------------


def cg_exact(x, t):
    """Closed form: u and u_x both vanish at the moving boundary x = 1 - t."""
    if np.isscalar(x):
        return _core.cg_exact(float(x), float(t))
    xs = np.asarray(x, dtype=float)
    return np.where(xs <= 1.0 - t, -xs - t + np.exp(xs + t - 1.0), 0.0)


def cg_fixed_flux(t: float) -> float:
    """Neumann datum at the fixed boundary x = 0."""
    return -1.0 + math.exp(t - 1.0)


def cg_boundary(t: float) -> float:
    return 1.0 - t


# ---------------------------------------------------------------------------
# Porous-medium flow
# ---------------------------------------------------------------------------


def pme_reference_time(m: int, x0: float) -> float:
    """Reference time at which the similarity profile has unit half-width scale."""
    return 0.5 * m * x0 * x0 / (m + 2)


def pme_scale(t: float, m: int, x0: float) -> float:
    return (t / pme_reference_time(m, x0)) ** (1.0 / (2.0 + m))


def pme_similarity(x, t, m: int = 1, x0: float = 0.5):
    """Compactly supported similarity profile; support is |x| <= x0 * scale."""
    pf = np.zeros(_core.NPF)
    pf[_core.PF_M] = float(m)
    pf[_core.PF_X0] = x0
    pf[_core.PF_T0S] = pme_reference_time(m, x0)
    if np.isscalar(x):
        return _core.pme_exact(float(x), float(t), pf)
    xs = np.asarray(x, dtype=float)
    out = np.empty(xs.shape)
    flat = xs.ravel()
    oflat = out.ravel()
    for i in range(flat.size):
        oflat[i] = _core.pme_exact(flat[i], float(t), pf)
    return out


def pme_boundary(t: float, m: int = 1, x0: float = 0.5) -> float:
    """Right moving-boundary position (the left one is its negative)."""
    return x0 * pme_scale(t, m, x0)


# ---------------------------------------------------------------------------
# Problem descriptor
# ---------------------------------------------------------------------------

KIND_CODES = {"stefan": _core.K_STEFAN, "crank_gupta": _core.K_CG, "pme": _core.K_PME}


@dataclass(frozen=True)
class ProblemSpec:
    """Everything the engine needs to know about one problem instance."""

    kind: str
    t0: float
    span: float  # default simulation length, horizon = t0 + span
    domain: tuple[float, float]
    stefan: StefanParameters | None = None
    pme_exponent: int = 1
    pme_initial: str = "similarity"  # or "cos"

    def __post_init__(self):
        if self.kind not in KIND_CODES:
            raise ConfigError(f"unknown problem kind {self.kind!r}")
        if self.kind == "pme" and self.pme_exponent < 1:
            raise ConfigError("porous-medium exponent must be a positive integer")

    @property
    def kind_code(self) -> int:
        return KIND_CODES[self.kind]

    @property
    def monitor(self) -> str:
        """Monitor routing: interior motion driver."""
        return "area" if self.kind == "stefan" else "mass"

    @property
    def has_exact(self) -> bool:
        return not (self.kind == "pme" and self.pme_initial == "cos")

    @property
    def exact_kind_code(self) -> int:
        if not self.has_exact:
            return _core.EX_NONE
        return {"stefan": _core.EX_STEFAN, "crank_gupta": _core.EX_CG,
                "pme": _core.EX_PME_SIM}[self.kind]

    def pf_array(self) -> np.ndarray:
        if self.kind == "stefan":
            return _pf_stefan(self.stefan)
        pf = np.zeros(_core.NPF)
        if self.kind == "pme":
            pf[_core.PF_M] = float(self.pme_exponent)
            pf[_core.PF_X0] = 0.5
            pf[_core.PF_T0S] = pme_reference_time(self.pme_exponent, 0.5)
        return pf

    def initial_values(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "stefan":
            return stefan_exact(x, self.t0, self.stefan)
        if self.kind == "crank_gupta":
            return cg_exact(x, self.t0)
        if self.pme_initial == "cos":
            return np.cos(np.pi * np.asarray(x, dtype=float))
        return pme_similarity(x, self.t0, self.pme_exponent)

    def exact(self, x, t):
        if self.kind == "stefan":
            return stefan_exact(x, t, self.stefan)
        if self.kind == "crank_gupta":
            return cg_exact(x, t)
        if not self.has_exact:
            raise ConfigError("this problem instance has no reference solution")
        return pme_similarity(x, t, self.pme_exponent)

    def exact_boundaries(self, t: float) -> tuple[float, ...]:
        """Tracked boundary/interface positions of the reference solution."""
        if self.kind == "stefan":
            return (self.stefan.interface_position(t),)
        if self.kind == "crank_gupta":
            return (cg_boundary(t),)
        b = pme_boundary(t, self.pme_exponent)
        return (-b, b)

    def dirichlet_dofs(self, n_dofs: int, interface_dof: int | None) -> dict[int, float]:
        """Strongly imposed values, keyed by global DOF index."""
        if self.kind == "stefan":
            return {0: self.stefan.u_wall, interface_dof: 0.0}
        if self.kind == "crank_gupta":
            return {n_dofs - 1: 0.0}
        return {0: 0.0, n_dofs - 1: 0.0}


def _pf_stefan(pr: StefanParameters) -> np.ndarray:
    pf = np.zeros(_core.NPF)
    pf[_core.PF_KS] = pr.conductivity_solid
    pf[_core.PF_KL] = pr.conductivity_liquid
    pf[_core.PF_CS] = pr.capacity_solid
    pf[_core.PF_CL] = pr.capacity_liquid
    pf[_core.PF_LAMBDA] = pr.latent_heat
    pf[_core.PF_USTAR] = pr.u_wall
    pf[_core.PF_U0] = pr.u_far
    pf[_core.PF_KAPS] = pr.kappa_solid
    pf[_core.PF_KAPL] = pr.kappa_liquid
    pf[_core.PF_PHI] = pr.phi
    return pf


def stefan_problem(params: StefanParameters | None = None, span: float = 0.01) -> ProblemSpec:
    pr = params if params is not None else stefan_default_parameters()
    if pr.phi == 0.0:
        pr = StefanParameters(phi=stefan_phi_root(pr), **{
            k: getattr(pr, k) for k in (
                "conductivity_solid", "conductivity_liquid", "capacity_solid",
                "capacity_liquid", "latent_heat", "u_wall", "u_far", "t0")})
    return ProblemSpec(kind="stefan", t0=pr.t0, span=span, domain=(0.0, 1.0),
                       stefan=pr)


def crank_gupta_problem(span: float = 0.3) -> ProblemSpec:
    return ProblemSpec(kind="crank_gupta", t0=0.0, span=span, domain=(0.0, 1.0))


def pme_similarity_problem(m: int = 1, x0: float = 0.5, span: float = 0.01) -> ProblemSpec:
    t0 = pme_reference_time(m, x0)
    return ProblemSpec(kind="pme", t0=t0, span=span, domain=(-x0, x0),
                       pme_exponent=m, pme_initial="similarity")


def pme_cos_problem(span: float = 0.01) -> ProblemSpec:
    return ProblemSpec(kind="pme", t0=0.0, span=span, domain=(-0.5, 0.5),
                       pme_exponent=1, pme_initial="cos")


# ---------------------------------------------------------------------------
# Weak-form callbacks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WeakForms:
    """Per-problem pieces consumed by the engine's pipeline.

    ``diffusive_flux`` maps pointwise (u, u_x) samples to the flux entering
    the volume term against test-function gradients (per phase for the
    two-phase problem). ``sink`` adds -sink * integral(w_i) to every mass
    rate. ``neumann`` returns the prescribed outward-signed gradient datum at
    a fixed end, or None where the end is not a Neumann boundary.
    """

    spec: ProblemSpec

    def diffusive_flux(self, u: np.ndarray, ux: np.ndarray, phase: int = 0) -> np.ndarray:
        if self.spec.kind == "stefan":
            kap = self.spec.stefan.kappa_solid if phase == 0 else self.spec.stefan.kappa_liquid
            return kap * ux
        if self.spec.kind == "crank_gupta":
            return np.asarray(ux, dtype=float)
        return np.asarray(u, dtype=float) ** self.spec.pme_exponent * ux

    @property
    def sink(self) -> float:
        return 1.0 if self.spec.kind == "crank_gupta" else 0.0

    def neumann(self, side: str, t: float) -> float | None:
        """Prescribed u_x at a fixed boundary (unsigned; callers apply n)."""
        if self.spec.kind == "crank_gupta" and side == "left":
            return cg_fixed_flux(t)
        if self.spec.kind == "stefan" and side == "right":
            return stefan_right_flux(t, self.spec.stefan)
        return None

    def interface_velocity(self, grad_solid: float, grad_liquid: float) -> float:
        pr = self.spec.stefan
        return (pr.conductivity_solid * grad_solid
                - pr.conductivity_liquid * grad_liquid) / pr.latent_heat

    def theta_dot(self, t: float, domain_length: float) -> float:
        """Total-mass rate for the single-domain problems."""
        if self.spec.kind == "pme":
            return 0.0
        if self.spec.kind == "crank_gupta":
            return -cg_fixed_flux(t) - domain_length
        raise ConfigError("two-phase mass totals are tracked per phase")


def problem_weak_forms(spec: ProblemSpec) -> WeakForms:
    return WeakForms(spec)
