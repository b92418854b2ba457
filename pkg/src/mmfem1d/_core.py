"""Low-level numerical kernels (JIT-compiled unless MMFEM1D_BACKEND=numpy).

Everything here works on plain float64/int64 arrays so the same source runs
under numba and as ordinary Python. Conventions:

* Meshes are vertex arrays ``xv`` (n+1 entries, strictly increasing).
* A continuous degree-p Lagrange space on n elements has ``n*p + 1`` global
  DOFs; element ``e`` owns DOFs ``e*p .. e*p+p`` with nodes uniformly spaced
  inside the element. Canonical element is [-1, 1].
* Banded matrices use LAPACK-style storage ``ab[2*bw + i - j, j] = A[i, j]``
  with ``bw`` sub- and superdiagonals; ``ab`` has ``3*bw + 1`` rows, the top
  ``bw`` reserved for pivoting fill-in.
* Problem kinds: 0 = two-phase interface diffusion (Stefan), 1 = absorption-
  diffusion (Crank-Gupta), 2 = nonlinear porous-medium flow.
* ``pf`` is a 10-slot float64 parameter block, see PF_* index constants.
* Status codes returned by kernels: -1/0 = success, 1 = singular mass matrix,
  2 = degenerate monitor, 3 = singular potential system, 4 = singular
  velocity system, 5 = tangled mesh.
"""

import math

import numpy as np

from .backend import jit

# problem kinds
K_STEFAN = 0
K_CG = 1
K_PME = 2

# exact-solution kinds (error accumulation); EX_NONE disables
EX_STEFAN = 0
EX_CG = 1
EX_PME_SIM = 2
EX_NONE = 3

# velocity recovery variants
V_INTERPOLATION = 0
V_PROJECTION = 1

# pf slots
PF_KS = 0
PF_KL = 1
PF_CS = 2  # volumetric heat capacity, solid
PF_CL = 3
PF_LAMBDA = 4
PF_USTAR = 5
PF_U0 = 6
PF_KAPS = 7
PF_KAPL = 8
PF_PHI = 9
PF_M = 0  # porous-medium exponent
PF_X0 = 1  # similarity half-width
PF_T0S = 2  # similarity reference time

NPF = 10


# ---------------------------------------------------------------------------
# Lagrange basis on uniformly spaced nodes of [-1, 1]
# ---------------------------------------------------------------------------

@jit
def lagrange_vals(p, t, out):
    """Evaluate the p+1 nodal basis functions at canonical coordinate t."""
    for i in range(p + 1):
        ti = -1.0 + 2.0 * i / p
        num = 1.0
        for j in range(p + 1):
            if j != i:
                tj = -1.0 + 2.0 * j / p
                num *= (t - tj) / (ti - tj)
        out[i] = num


@jit
def lagrange_ders(p, t, out):
    """Evaluate the basis derivatives (d/dt) at canonical coordinate t."""
    for i in range(p + 1):
        ti = -1.0 + 2.0 * i / p
        acc = 0.0
        for k in range(p + 1):
            if k == i:
                continue
            tk = -1.0 + 2.0 * k / p
            term = 1.0 / (ti - tk)
            for j in range(p + 1):
                if j != i and j != k:
                    tj = -1.0 + 2.0 * j / p
                    term *= (t - tj) / (ti - tj)
            acc += term
        out[i] = acc


# ---------------------------------------------------------------------------
# Banded LU with partial pivoting (bw sub- and superdiagonals)
# ---------------------------------------------------------------------------

@jit
def band_factor(ab, bw, ipiv):
    """Factor A = P L U in place. Returns -1 on success, else the pivot DOF.

    Pivots below a relative threshold (matrix scale times 1e-14) count as
    singular; exact-zero tests would miss rank deficiencies masked by
    rounding, e.g. an unconstrained stiffness matrix.
    """
    n = ab.shape[1]
    m = 2 * bw  # row of the diagonal in band storage
    scale = 0.0
    for j in range(n):
        for r in range(bw):
            ab[r, j] = 0.0  # fill-in workspace
        for r in range(bw, 3 * bw + 1):
            v = abs(ab[r, j])
            if v > scale:
                scale = v
    tol = 1e-14 * scale
    for k in range(n):
        lm = min(bw, n - 1 - k)
        piv = 0
        amax = abs(ab[m, k])
        for i in range(1, lm + 1):
            v = abs(ab[m + i, k])
            if v > amax:
                amax = v
                piv = i
        ipiv[k] = k + piv
        if amax <= tol:
            return k
        jmax = min(k + 2 * bw, n - 1)
        if piv != 0:
            for j in range(k, jmax + 1):
                r1 = m + k - j
                r2 = r1 + piv
                tmp = ab[r1, j]
                ab[r1, j] = ab[r2, j]
                ab[r2, j] = tmp
        pivval = ab[m, k]
        for i in range(1, lm + 1):
            mult = ab[m + i, k] / pivval
            ab[m + i, k] = mult
            for j in range(k + 1, jmax + 1):
                ab[m + i + k - j, j] -= mult * ab[m + k - j, j]
    return -1


@jit
def band_solve(ab, bw, ipiv, b):
    """Solve the factored system in place (b becomes x)."""
    n = ab.shape[1]
    m = 2 * bw
    for k in range(n - 1):
        lm = min(bw, n - 1 - k)
        ip = ipiv[k]
        t = b[ip]
        if ip != k:
            b[ip] = b[k]
            b[k] = t
        for i in range(1, lm + 1):
            b[k + i] -= ab[m + i, k] * t
    for k in range(n - 1, -1, -1):
        jmax = min(k + 2 * bw, n - 1)
        s = b[k]
        for j in range(k + 1, jmax + 1):
            s -= ab[m + k - j, j] * b[j]
        b[k] = s / ab[m, k]


@jit
def apply_dirichlet(ab, bw, b, cidx, cval):
    """Impose x[c] = g by symmetric elimination on an unfactored band."""
    n = ab.shape[1]
    m = 2 * bw
    for ic in range(cidx.shape[0]):
        c = cidx[ic]
        g = cval[ic]
        lo = c - bw
        if lo < 0:
            lo = 0
        hi = c + bw
        if hi > n - 1:
            hi = n - 1
        for i in range(lo, hi + 1):
            if i == c:
                continue
            b[i] -= ab[m + i - c, c] * g
            ab[m + i - c, c] = 0.0
            ab[m + c - i, i] = 0.0
        ab[m, c] = 1.0
        b[c] = g


# ---------------------------------------------------------------------------
# Element assembly
# ---------------------------------------------------------------------------

@jit
def assemble_mass(xv, p, mloc, ab):
    """Add the mass matrix (scaled canonical blocks) into band storage."""
    n = xv.shape[0] - 1
    m = 2 * p
    for e in range(n):
        jac = 0.5 * (xv[e + 1] - xv[e])
        for a in range(p + 1):
            ga = e * p + a
            for b_ in range(p + 1):
                gb = e * p + b_
                ab[m + ga - gb, gb] += jac * mloc[a, b_]


@jit
def assemble_stiff(xv, p, kloc, ab):
    """Add the unit-weight stiffness matrix into band storage."""
    n = xv.shape[0] - 1
    m = 2 * p
    for e in range(n):
        s = 2.0 / (xv[e + 1] - xv[e])
        for a in range(p + 1):
            ga = e * p + a
            for b_ in range(p + 1):
                gb = e * p + b_
                ab[m + ga - gb, gb] += s * kloc[a, b_]


@jit
def assemble_wstiff(xv, p, qw, dmat, wq, ab):
    """Add the stiffness matrix weighted by wq[e, q] into band storage."""
    n = xv.shape[0] - 1
    m = 2 * p
    nq = qw.shape[0]
    for e in range(n):
        s = 2.0 / (xv[e + 1] - xv[e])
        for a in range(p + 1):
            ga = e * p + a
            for b_ in range(p + 1):
                gb = e * p + b_
                acc = 0.0
                for q in range(nq):
                    acc += qw[q] * wq[e, q] * dmat[q, a] * dmat[q, b_]
                ab[m + ga - gb, gb] += s * acc
    return ab


@jit
def assemble_value_func(xv, p, qw, bmat, fq, out):
    """out[i] += integral of basis_i * f, with f sampled as fq[e, q]."""
    n = xv.shape[0] - 1
    nq = qw.shape[0]
    for e in range(n):
        jac = 0.5 * (xv[e + 1] - xv[e])
        for a in range(p + 1):
            acc = 0.0
            for q in range(nq):
                acc += qw[q] * bmat[q, a] * fq[e, q]
            out[e * p + a] += jac * acc


@jit
def assemble_grad_func(p, qw, dmat, fq, out):
    """out[i] += integral of basis_i' * f (the jacobians cancel in 1D)."""
    n = fq.shape[0]
    nq = qw.shape[0]
    for e in range(n):
        for a in range(p + 1):
            acc = 0.0
            for q in range(nq):
                acc += qw[q] * dmat[q, a] * fq[e, q]
            out[e * p + a] += acc


@jit
def assemble_area(xv, p, bvec, out):
    """out[i] += integral of basis_i over the mesh."""
    n = xv.shape[0] - 1
    for e in range(n):
        jac = 0.5 * (xv[e + 1] - xv[e])
        for a in range(p + 1):
            out[e * p + a] += jac * bvec[a]


@jit
def field_at_q(coeffs, p, bmat, nel, out):
    """Sample a degree-p coefficient vector at the quadrature points."""
    nq = bmat.shape[0]
    for e in range(nel):
        for q in range(nq):
            s = 0.0
            for a in range(p + 1):
                s += bmat[q, a] * coeffs[e * p + a]
            out[e, q] = s


@jit
def deriv_at_q(xv, coeffs, p, dmat, out):
    """Sample the spatial derivative of a degree-p field at quadrature points."""
    n = xv.shape[0] - 1
    nq = dmat.shape[0]
    for e in range(n):
        s = 2.0 / (xv[e + 1] - xv[e])
        for q in range(nq):
            acc = 0.0
            for a in range(p + 1):
                acc += dmat[q, a] * coeffs[e * p + a]
            out[e, q] = s * acc


@jit
def elem_deriv_at(xv, coeffs, p, e, t):
    """Spatial derivative of the element-e polynomial at canonical t."""
    der = np.empty(p + 1)
    lagrange_ders(p, t, der)
    acc = 0.0
    base = e * p
    for a in range(p + 1):
        acc += der[a] * coeffs[base + a]
    return acc * 2.0 / (xv[e + 1] - xv[e])


@jit
def interface_gradient(xv, coeffs, p, iface_v, side):
    """One-sided solution gradient at the interface vertex.

    Differentiates the degree-(p+1) interpolant through the p+2 nearest DOF
    values of the requested phase (side 0 = left, 1 = right), exploiting the
    smoothness of the nodal error; the raw element-polynomial derivative is
    one order less accurate. Falls back to the element derivative when the
    phase is too small to supply the stencil.
    """
    n = xv.shape[0] - 1
    base = iface_v * p
    npts = p + 2
    if side == 0 and base - npts + 1 < 0:
        return elem_deriv_at(xv, coeffs, p, iface_v - 1, 1.0)
    if side == 1 and base + npts - 1 > n * p:
        return elem_deriv_at(xv, coeffs, p, iface_v, -1.0)
    s = xv[iface_v]
    xs = np.empty(npts)
    ys = np.empty(npts)
    for j in range(npts):
        g = base - (npts - 1) + j if side == 0 else base + j
        e = g // p
        if e > n - 1:
            e = n - 1
        a = g - e * p
        xs[j] = xv[e] + a * (xv[e + 1] - xv[e]) / p - s
        ys[j] = coeffs[g]
    acc = 0.0
    for i in range(npts):
        w = 0.0
        for k in range(npts):
            if k == i:
                continue
            term = 1.0 / (xs[i] - xs[k])
            for j in range(npts):
                if j != i and j != k:
                    term *= (0.0 - xs[j]) / (xs[i] - xs[j])
            w += term
        acc += w * ys[i]
    return acc


@jit
def locate_element(xv, x):
    """Index of the element containing x (clamped to the mesh)."""
    n = xv.shape[0] - 1
    if x <= xv[0]:
        return 0
    if x >= xv[n]:
        return n - 1
    lo = 0
    hi = n
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if xv[mid] <= x:
            lo = mid
        else:
            hi = mid
    return lo


@jit
def eval_field_at(xv, coeffs, p, x):
    """Point evaluation of a degree-p field (clamped outside the mesh)."""
    e = locate_element(xv, x)
    h = xv[e + 1] - xv[e]
    t = 2.0 * (x - xv[e]) / h - 1.0
    vals = np.empty(p + 1)
    lagrange_vals(p, t, vals)
    acc = 0.0
    base = e * p
    for a in range(p + 1):
        acc += vals[a] * coeffs[base + a]
    return acc


@jit
def eval_field_many(xv, coeffs, p, xs, out):
    for i in range(xs.shape[0]):
        out[i] = eval_field_at(xv, coeffs, p, xs[i])


@jit
def pow_int(x, m):
    r = 1.0
    for _ in range(m):
        r *= x
    return r


@jit
def mesh_monotone(xv):
    for i in range(xv.shape[0] - 1):
        if not (xv[i + 1] > xv[i]):
            return False
    return True


# ---------------------------------------------------------------------------
# Closed-form reference solutions
# ---------------------------------------------------------------------------

@jit
def stefan_interface(t, kaps, phi):
    return 2.0 * phi * math.sqrt(kaps * t)


@jit
def stefan_exact(x, t, pf):
    s = stefan_interface(t, pf[PF_KAPS], pf[PF_PHI])
    if x <= s:
        return pf[PF_USTAR] * (
            1.0 - math.erf(x / (2.0 * math.sqrt(pf[PF_KAPS] * t))) / math.erf(pf[PF_PHI])
        )
    z = x / (2.0 * math.sqrt(pf[PF_KAPL] * t))
    zc = pf[PF_PHI] * math.sqrt(pf[PF_KAPS] / pf[PF_KAPL])
    return pf[PF_U0] * (1.0 - math.erfc(z) / math.erfc(zc))


@jit
def stefan_right_flux(t, pf):
    """Exact solution gradient at the fixed right boundary x = 1."""
    kapl = pf[PF_KAPL]
    zc = pf[PF_PHI] * math.sqrt(pf[PF_KAPS] / kapl)
    return (
        pf[PF_U0]
        * math.exp(-1.0 / (4.0 * kapl * t))
        / (math.sqrt(math.pi * kapl * t) * math.erfc(zc))
    )


@jit
def cg_exact(x, t):
    if x <= 1.0 - t:
        return -x - t + math.exp(x + t - 1.0)
    return 0.0


@jit
def cg_left_flux(t):
    """Neumann datum at the fixed boundary x = 0."""
    return -1.0 + math.exp(t - 1.0)


@jit
def pme_lambda(t, pf):
    m = pf[PF_M]
    return (t / pf[PF_T0S]) ** (1.0 / (2.0 + m))


@jit
def pme_exact(x, t, pf):
    lam = pme_lambda(t, pf)
    half = pf[PF_X0] * lam
    if abs(x) > half:
        return 0.0
    r = 1.0 - (x / half) ** 2
    if r < 0.0:
        r = 0.0
    return r ** (1.0 / pf[PF_M]) / lam


@jit
def exact_value(exact_kind, x, t, pf):
    if exact_kind == EX_STEFAN:
        return stefan_exact(x, t, pf)
    if exact_kind == EX_CG:
        return cg_exact(x, t)
    return pme_exact(x, t, pf)


@jit
def err_sq_integral(exact_kind, xv, u, p, t, qxe, qwe, bmate, pf):
    """Integral of (u_h - u_exact)^2 over the mesh at time t."""
    n = xv.shape[0] - 1
    nq = qxe.shape[0]
    total = 0.0
    for e in range(n):
        h = xv[e + 1] - xv[e]
        part = 0.0
        for q in range(nq):
            uh = 0.0
            for a in range(p + 1):
                uh += bmate[q, a] * u[e * p + a]
            x = xv[e] + 0.5 * (qxe[q] + 1.0) * h
            d = uh - exact_value(exact_kind, x, t, pf)
            part += qwe[q] * d * d
        total += 0.5 * h * part
    return total


@jit
def boundary_sq_err(exact_kind, xv, iface_v, t, pf):
    """Squared distance between tracked and exact boundary points at time t."""
    n = xv.shape[0] - 1
    if exact_kind == EX_STEFAN:
        d = xv[iface_v] - stefan_interface(t, pf[PF_KAPS], pf[PF_PHI])
        return d * d
    if exact_kind == EX_CG:
        d = xv[n] - (1.0 - t)
        return d * d
    half = pf[PF_X0] * pme_lambda(t, pf)
    dl = xv[0] + half
    dr = xv[n] - half
    return dl * dl + dr * dr


# ---------------------------------------------------------------------------
# Solution recovery from mass distributions
# ---------------------------------------------------------------------------

@jit
def recover_u(kind, xv, mu, p, iface_v, pf, mloc):
    """Recover global nodal coefficients from per-test-function masses.

    Returns (coeffs, status); status is -1 on success, else the failing DOF.
    Dirichlet values are imposed strongly per problem kind; the two-phase
    problem is recovered independently on each side of the interface.
    """
    n = xv.shape[0] - 1
    ng = n * p + 1
    u = np.zeros(ng)
    if kind == K_STEFAN:
        ns = iface_v * p + 1
        abm = np.zeros((3 * p + 1, ns))
        assemble_mass(xv[: iface_v + 1], p, mloc, abm)
        b = mu[:ns].copy()
        cidx = np.empty(2, np.int64)
        cval = np.empty(2)
        cidx[0] = 0
        cval[0] = pf[PF_USTAR]
        cidx[1] = ns - 1
        cval[1] = 0.0
        apply_dirichlet(abm, p, b, cidx, cval)
        ipiv = np.empty(ns, np.int64)
        st = band_factor(abm, p, ipiv)
        if st >= 0:
            return u, st
        band_solve(abm, p, ipiv, b)
        for i in range(ns):
            u[i] = b[i]

        nl = (n - iface_v) * p + 1
        abl = np.zeros((3 * p + 1, nl))
        assemble_mass(xv[iface_v:], p, mloc, abl)
        bl = mu[ns:].copy()
        cidx1 = np.empty(1, np.int64)
        cval1 = np.empty(1)
        cidx1[0] = 0
        cval1[0] = 0.0
        apply_dirichlet(abl, p, bl, cidx1, cval1)
        ipivl = np.empty(nl, np.int64)
        st = band_factor(abl, p, ipivl)
        if st >= 0:
            return u, st
        band_solve(abl, p, ipivl, bl)
        for i in range(nl):
            u[ns - 1 + i] = bl[i]
        return u, -1

    abm = np.zeros((3 * p + 1, ng))
    assemble_mass(xv, p, mloc, abm)
    b = mu.copy()
    if kind == K_CG:
        cidx = np.empty(1, np.int64)
        cval = np.empty(1)
        cidx[0] = ng - 1
        cval[0] = 0.0
    else:
        cidx = np.empty(2, np.int64)
        cval = np.empty(2)
        cidx[0] = 0
        cval[0] = 0.0
        cidx[1] = ng - 1
        cval[1] = 0.0
    apply_dirichlet(abm, p, b, cidx, cval)
    ipiv = np.empty(ng, np.int64)
    st = band_factor(abm, p, ipiv)
    if st >= 0:
        return u, st
    band_solve(abm, p, ipiv, b)
    for i in range(ng):
        u[i] = b[i]
    return u, -1


@jit
def mass_from_field(kind, xv, u, p, iface_v, qw, bmat):
    """Assemble per-test-function masses of a nodal field (per phase when split)."""
    n = xv.shape[0] - 1
    nq = qw.shape[0]
    uq = np.empty((n, nq))
    field_at_q(u, p, bmat, n, uq)
    if kind == K_STEFAN:
        ns = iface_v * p + 1
        nl = (n - iface_v) * p + 1
        mu = np.zeros(ns + nl)
        assemble_value_func(xv[: iface_v + 1], p, qw, bmat, uq[:iface_v], mu[:ns])
        assemble_value_func(xv[iface_v:], p, qw, bmat, uq[iface_v:], mu[ns:])
        return mu
    mu = np.zeros(n * p + 1)
    assemble_value_func(xv, p, qw, bmat, uq, mu)
    return mu


# ---------------------------------------------------------------------------
# Right-hand side of the mesh/mass ODE system (one evaluation per RK stage)
# ---------------------------------------------------------------------------

@jit
def solve_velocity(xv, p, variant, phid, qw, bmat, b1mat, qx, mloc, mloc1,
                   cidx, cval, cvert, xdot):
    """Project a potential gradient onto mesh-vertex velocities.

    The degree-p projection is sampled at the vertices (interpolation
    variant); the alternative projects straight onto the piecewise linear
    space. Constraints are (DOF, value) for degree p and (vertex, value)
    pairs; both index lists describe the same vertices.
    """
    n = xv.shape[0] - 1
    ng = n * p + 1
    if variant == V_INTERPOLATION:
        vb = np.zeros(ng)
        assemble_value_func(xv, p, qw, bmat, phid, vb)
        abm = np.zeros((3 * p + 1, ng))
        assemble_mass(xv, p, mloc, abm)
        apply_dirichlet(abm, p, vb, cidx, cval)
        ipiv = np.empty(ng, np.int64)
        if band_factor(abm, p, ipiv) >= 0:
            return 4
        band_solve(abm, p, ipiv, vb)
        for k in range(n + 1):
            xdot[k] = vb[k * p]
        return 0
    vb = np.zeros(n + 1)
    assemble_value_func(xv, 1, qw, b1mat, phid, vb)
    ab1 = np.zeros((4, n + 1))
    assemble_mass(xv, 1, mloc1, ab1)
    apply_dirichlet(ab1, 1, vb, cvert, cval)
    ipiv = np.empty(n + 1, np.int64)
    if band_factor(ab1, 1, ipiv) >= 0:
        return 4
    band_solve(ab1, 1, ipiv, vb)
    for k in range(n + 1):
        xdot[k] = vb[k]
    return 0


@jit
def rhs_cg(variant, xv, mu, t, p, pf, qx, qw, bmat, dmat, b1mat,
           mloc, mloc1, kloc, bvec, xdot, mudot):
    n = xv.shape[0] - 1
    ng = n * p + 1
    nq = qx.shape[0]

    u, st = recover_u(K_CG, xv, mu, p, -1, pf, mloc)
    if st >= 0:
        return 1
    uq = np.empty((n, nq))
    field_at_q(u, p, bmat, n, uq)
    udq = np.empty((n, nq))
    deriv_at_q(xv, u, p, dmat, udq)

    # mass-monitor distribution
    c = np.zeros(ng)
    assemble_value_func(xv, p, qw, bmat, uq, c)
    theta = 0.0
    for i in range(ng):
        theta += c[i]
    if abs(theta) < 1e-300:
        return 2

    # velocity potential; total-mass rate has a fixed-boundary flux and a sink
    g = cg_left_flux(t)
    theta_dot = -g - (xv[n] - xv[0])
    area = np.zeros(ng)
    assemble_area(xv, p, bvec, area)
    pot = np.zeros(ng)
    assemble_grad_func(p, qw, dmat, udq, pot)
    for i in range(ng):
        pot[i] = -pot[i] - area[i] - (c[i] / theta) * theta_dot
    pot[0] -= g
    abk = np.zeros((3 * p + 1, ng))
    assemble_wstiff(xv, p, qw, dmat, uq, abk)
    pin_i = np.empty(1, np.int64)
    pin_v = np.empty(1)
    pin_i[0] = 0
    pin_v[0] = 0.0
    apply_dirichlet(abk, p, pot, pin_i, pin_v)
    ipiv = np.empty(ng, np.int64)
    if band_factor(abk, p, ipiv) >= 0:
        return 3
    band_solve(abk, p, ipiv, pot)

    # recover mesh velocities; the fixed end x=0 does not move
    phid = np.empty((n, nq))
    deriv_at_q(xv, pot, p, dmat, phid)
    cidx = np.empty(1, np.int64)
    cval = np.empty(1)
    cidx[0] = 0
    cval[0] = 0.0
    st = solve_velocity(xv, p, variant, phid, qw, bmat, b1mat, qx, mloc, mloc1,
                        cidx, cval, cidx, xdot)
    if st != 0:
        return st

    # mass rates
    f = np.empty((n, nq))
    for e in range(n):
        for q in range(nq):
            vt = xdot[e] + (xdot[e + 1] - xdot[e]) * 0.5 * (qx[q] + 1.0)
            f[e, q] = udq[e, q] + uq[e, q] * vt
    for i in range(ng):
        mudot[i] = 0.0
    assemble_grad_func(p, qw, dmat, f, mudot)
    for i in range(ng):
        mudot[i] = -mudot[i] - area[i]
    mudot[0] -= g
    return 0


@jit
def rhs_pme(variant, xv, mu, t, p, pf, qx, qw, bmat, dmat, b1mat,
            mloc, mloc1, kloc, bvec, xdot, mudot):
    n = xv.shape[0] - 1
    ng = n * p + 1
    nq = qx.shape[0]
    m = int(pf[PF_M])

    u, st = recover_u(K_PME, xv, mu, p, -1, pf, mloc)
    if st >= 0:
        return 1
    uq = np.empty((n, nq))
    field_at_q(u, p, bmat, n, uq)
    udq = np.empty((n, nq))
    deriv_at_q(xv, u, p, dmat, udq)

    # total mass is conserved: no monitor distribution term needed
    diff = np.empty((n, nq))
    for e in range(n):
        for q in range(nq):
            diff[e, q] = pow_int(uq[e, q], m) * udq[e, q]
    pot = np.zeros(ng)
    assemble_grad_func(p, qw, dmat, diff, pot)
    for i in range(ng):
        pot[i] = -pot[i]
    abk = np.zeros((3 * p + 1, ng))
    assemble_wstiff(xv, p, qw, dmat, uq, abk)
    pin_i = np.empty(1, np.int64)
    pin_v = np.empty(1)
    pin_i[0] = 0
    pin_v[0] = 0.0
    apply_dirichlet(abk, p, pot, pin_i, pin_v)
    ipiv = np.empty(ng, np.int64)
    if band_factor(abk, p, ipiv) >= 0:
        return 3
    band_solve(abk, p, ipiv, pot)

    # moving-end velocities: for the linear-contact exponent the kinematic
    # relation v = -u_x is imposed strongly from one-sided nodal gradients
    # (the projected potential gradient loses an order at the contact);
    # higher exponents keep the free conservation-driven endpoints
    phid = np.empty((n, nq))
    deriv_at_q(xv, pot, p, dmat, phid)
    if m == 1:
        cidx = np.empty(2, np.int64)
        cval = np.empty(2)
        cidx[0] = 0
        cval[0] = -interface_gradient(xv, u, p, 0, 1)
        cidx[1] = ng - 1
        cval[1] = -interface_gradient(xv, u, p, n, 0)
        cvert = np.empty(2, np.int64)
        cvert[0] = 0
        cvert[1] = n
    else:
        cidx = np.empty(0, np.int64)
        cval = np.empty(0)
        cvert = cidx
    st = solve_velocity(xv, p, variant, phid, qw, bmat, b1mat, qx, mloc, mloc1,
                        cidx, cval, cvert, xdot)
    if st != 0:
        return st

    f = np.empty((n, nq))
    for e in range(n):
        for q in range(nq):
            vt = xdot[e] + (xdot[e + 1] - xdot[e]) * 0.5 * (qx[q] + 1.0)
            f[e, q] = diff[e, q] + uq[e, q] * vt
    for i in range(ng):
        mudot[i] = 0.0
    assemble_grad_func(p, qw, dmat, f, mudot)
    for i in range(ng):
        mudot[i] = -mudot[i]
    return 0


@jit
def rhs_stefan(variant, xv, mu, t, p, iface_v, pf, qx, qw, bmat, dmat, b1mat,
               mloc, mloc1, kloc, bvec, xdot, mudot):
    n = xv.shape[0] - 1
    ng = n * p + 1
    nq = qx.shape[0]
    ns = iface_v * p + 1
    nl = (n - iface_v) * p + 1
    ks = pf[PF_KS]
    kl = pf[PF_KL]
    lam = pf[PF_LAMBDA]
    kaps = pf[PF_KAPS]
    kapl = pf[PF_KAPL]

    u, st = recover_u(K_STEFAN, xv, mu, p, iface_v, pf, mloc)
    if st >= 0:
        return 1
    uq = np.empty((n, nq))
    field_at_q(u, p, bmat, n, uq)
    udq = np.empty((n, nq))
    deriv_at_q(xv, u, p, dmat, udq)

    # one-sided gradients at the interface drive its normal velocity
    usx = interface_gradient(xv, u, p, iface_v, 0)
    ulx = interface_gradient(xv, u, p, iface_v, 1)
    vi = (ks * usx - kl * ulx) / lam

    # per-phase velocity potentials with the area monitor: the interface flux
    # grows/shrinks each phase while interior elements keep relative lengths
    xs = xv[: iface_v + 1]
    areas = np.zeros(ns)
    assemble_area(xs, p, bvec, areas)
    ths = xs[iface_v] - xs[0]
    bs = np.empty(ns)
    for i in range(ns):
        bs[i] = -(areas[i] / ths) * vi
    bs[ns - 1] += vi
    abs_ = np.zeros((3 * p + 1, ns))
    assemble_stiff(xs, p, kloc, abs_)
    pin_i = np.empty(1, np.int64)
    pin_v = np.empty(1)
    pin_i[0] = 0
    pin_v[0] = 0.0
    apply_dirichlet(abs_, p, bs, pin_i, pin_v)
    ipivs = np.empty(ns, np.int64)
    if band_factor(abs_, p, ipivs) >= 0:
        return 3
    band_solve(abs_, p, ipivs, bs)

    xl = xv[iface_v:]
    areal = np.zeros(nl)
    assemble_area(xl, p, bvec, areal)
    thl = xl[n - iface_v] - xl[0]
    bl = np.empty(nl)
    for i in range(nl):
        bl[i] = (areal[i] / thl) * vi
    bl[0] -= vi
    abl = np.zeros((3 * p + 1, nl))
    assemble_stiff(xl, p, kloc, abl)
    apply_dirichlet(abl, p, bl, pin_i, pin_v)
    ipivl = np.empty(nl, np.int64)
    if band_factor(abl, p, ipivl) >= 0:
        return 3
    band_solve(abl, p, ipivl, bl)

    # single velocity system over both phases; fixed ends pinned, interface
    # velocity imposed strongly
    phid = np.empty((n, nq))
    for e in range(n):
        s = 2.0 / (xv[e + 1] - xv[e])
        for q in range(nq):
            acc = 0.0
            if e < iface_v:
                for a in range(p + 1):
                    acc += dmat[q, a] * bs[e * p + a]
            else:
                for a in range(p + 1):
                    acc += dmat[q, a] * bl[(e - iface_v) * p + a]
            phid[e, q] = s * acc
    cidx = np.empty(3, np.int64)
    cval = np.empty(3)
    cidx[0] = 0
    cval[0] = 0.0
    cidx[1] = iface_v * p
    cval[1] = vi
    cidx[2] = ng - 1
    cval[2] = 0.0
    cvert = np.empty(3, np.int64)
    cvert[0] = 0
    cvert[1] = iface_v
    cvert[2] = n
    st = solve_velocity(xv, p, variant, phid, qw, bmat, b1mat, qx, mloc, mloc1,
                        cidx, cval, cvert, xdot)
    if st != 0:
        return st

    # per-phase mass rates; fixed-end fluxes keep the quadrature-level
    # totals consistent with the diffusive fluxes
    u0x = elem_deriv_at(xv, u, p, 0, -1.0)
    gr = stefan_right_flux(t, pf)
    f = np.empty((n, nq))
    for e in range(n):
        kap = kaps if e < iface_v else kapl
        for q in range(nq):
            vt = xdot[e] + (xdot[e + 1] - xdot[e]) * 0.5 * (qx[q] + 1.0)
            f[e, q] = kap * udq[e, q] + uq[e, q] * vt
    for i in range(ns + nl):
        mudot[i] = 0.0
    assemble_grad_func(p, qw, dmat, f[:iface_v], mudot[:ns])
    assemble_grad_func(p, qw, dmat, f[iface_v:], mudot[ns:])
    for i in range(ns + nl):
        mudot[i] = -mudot[i]
    mudot[ns - 1] += kaps * usx
    mudot[0] -= kaps * u0x
    mudot[ns] -= kapl * ulx
    mudot[ns + nl - 1] += kapl * gr
    return 0


@jit
def rhs_eval(kind, variant, xv, mu, t, p, iface_v, pf, qx, qw, bmat, dmat,
             b1mat, mloc, mloc1, kloc, bvec, xdot, mudot):
    if kind == K_STEFAN:
        return rhs_stefan(variant, xv, mu, t, p, iface_v, pf, qx, qw, bmat,
                          dmat, b1mat, mloc, mloc1, kloc, bvec, xdot, mudot)
    if kind == K_CG:
        return rhs_cg(variant, xv, mu, t, p, pf, qx, qw, bmat, dmat, b1mat,
                      mloc, mloc1, kloc, bvec, xdot, mudot)
    return rhs_pme(variant, xv, mu, t, p, pf, qx, qw, bmat, dmat, b1mat,
                   mloc, mloc1, kloc, bvec, xdot, mudot)


# ---------------------------------------------------------------------------
# Time integration (strong-stability-preserving Runge-Kutta, orders 1-3)
# ---------------------------------------------------------------------------

@jit
def advance(kind, variant, rk, xv, mu, t0, p, iface_v, pf, dt, nsteps,
            qx, qw, bmat, dmat, b1mat, mloc, mloc1, kloc, bvec,
            exact_kind, qxe, qwe, bmate,
            stride, snap_t, snap_x, snap_u, errs):
    """March nsteps of length dt, updating xv and mu in place.

    Snapshots (vertex coordinates and recovered nodal values) are written
    whenever ``stride > 0`` and the step count is a multiple of it, row 0
    holding the initial state. When ``exact_kind != EX_NONE`` the squared
    space-time errors are accumulated into ``errs`` (solution, boundary).

    Returns (status, step, stage): status 0 on success, 5 on mesh tangling,
    otherwise the failing kernel's code; step/stage locate the failure.
    """
    nx = xv.shape[0]
    nm = mu.shape[0]
    x0 = np.empty(nx)
    m0 = np.empty(nm)
    x1 = np.empty(nx)
    m1 = np.empty(nm)
    fx = np.empty(nx)
    fm = np.empty(nm)

    if stride > 0 and snap_t.shape[0] > 0:
        u, st = recover_u(kind, xv, mu, p, iface_v, pf, mloc)
        if st >= 0:
            return 1, -1, -1
        snap_t[0] = t0
        for i in range(nx):
            snap_x[0, i] = xv[i]
        for i in range(u.shape[0]):
            snap_u[0, i] = u[i]

    for step in range(nsteps):
        t = t0 + step * dt
        for i in range(nx):
            x0[i] = xv[i]
        for i in range(nm):
            m0[i] = mu[i]

        st = rhs_eval(kind, variant, xv, mu, t, p, iface_v, pf, qx, qw, bmat,
                      dmat, b1mat, mloc, mloc1, kloc, bvec, fx, fm)
        if st != 0:
            return st, step, 0
        for i in range(nx):
            x1[i] = x0[i] + dt * fx[i]
        for i in range(nm):
            m1[i] = m0[i] + dt * fm[i]
        if not mesh_monotone(x1):
            return 5, step, 0

        if rk == 1:
            for i in range(nx):
                xv[i] = x1[i]
            for i in range(nm):
                mu[i] = m1[i]
        elif rk == 2:
            st = rhs_eval(kind, variant, x1, m1, t + dt, p, iface_v, pf, qx,
                          qw, bmat, dmat, b1mat, mloc, mloc1, kloc, bvec, fx, fm)
            if st != 0:
                return st, step, 1
            for i in range(nx):
                xv[i] = 0.5 * x0[i] + 0.5 * (x1[i] + dt * fx[i])
            for i in range(nm):
                mu[i] = 0.5 * m0[i] + 0.5 * (m1[i] + dt * fm[i])
            if not mesh_monotone(xv):
                return 5, step, 1
        else:
            st = rhs_eval(kind, variant, x1, m1, t + dt, p, iface_v, pf, qx,
                          qw, bmat, dmat, b1mat, mloc, mloc1, kloc, bvec, fx, fm)
            if st != 0:
                return st, step, 1
            for i in range(nx):
                x1[i] = 0.75 * x0[i] + 0.25 * (x1[i] + dt * fx[i])
            for i in range(nm):
                m1[i] = 0.75 * m0[i] + 0.25 * (m1[i] + dt * fm[i])
            if not mesh_monotone(x1):
                return 5, step, 1
            st = rhs_eval(kind, variant, x1, m1, t + 0.5 * dt, p, iface_v, pf,
                          qx, qw, bmat, dmat, b1mat, mloc, mloc1, kloc, bvec,
                          fx, fm)
            if st != 0:
                return st, step, 2
            third = 1.0 / 3.0
            for i in range(nx):
                xv[i] = third * x0[i] + (2.0 * third) * (x1[i] + dt * fx[i])
            for i in range(nm):
                mu[i] = third * m0[i] + (2.0 * third) * (m1[i] + dt * fm[i])
            if not mesh_monotone(xv):
                return 5, step, 2

        tn = t0 + (step + 1) * dt
        at_sample = stride > 0 and (step + 1) % stride == 0
        if exact_kind != EX_NONE or at_sample:
            u, st = recover_u(kind, xv, mu, p, iface_v, pf, mloc)
            if st >= 0:
                return 1, step, 3
            if exact_kind != EX_NONE:
                errs[0] += dt * err_sq_integral(exact_kind, xv, u, p, tn,
                                                qxe, qwe, bmate, pf)
                errs[1] += dt * boundary_sq_err(exact_kind, xv, iface_v, tn, pf)
            if at_sample:
                row = (step + 1) // stride
                if row < snap_t.shape[0]:
                    snap_t[row] = tn
                    for i in range(nx):
                        snap_x[row, i] = xv[i]
                    for i in range(u.shape[0]):
                        snap_u[row, i] = u[i]
    return 0, -1, -1
