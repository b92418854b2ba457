"""Space-time error norms, self-convergence differences and rate tables."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _core
from .fem import canonical_tables, gauss_rule

# Error plateaus caused by accumulated rounding; levels below them carry no
# usable order information.
SOLUTION_FLOOR = 1e-8
BOUNDARY_FLOOR = 1e-11


@dataclass
class ErrorRecord:
    """One refinement level of a convergence study."""

    level: int
    n_elements: int
    dt: float
    error_u: float
    error_x: float
    order_u: float = math.nan  # observed order w.r.t. the previous level
    order_x: float = math.nan
    floored_u: bool = False
    floored_x: bool = False

    @property
    def floored(self) -> bool:
        return self.floored_u or self.floored_x


@dataclass(frozen=True)
class RunSnapshots:
    """Sampled trajectory of one run: times, vertices and nodal values."""

    degree: int
    times: np.ndarray       # (ns,)
    vertices: np.ndarray    # (ns, n+1)
    coeffs: np.ndarray      # (ns, n*p+1)
    interface_index: int | None = None

    @property
    def n_samples(self) -> int:
        return self.times.size

    def boundary_positions(self, row: int) -> tuple[float, ...]:
        if self.interface_index is not None:
            return (self.vertices[row, self.interface_index],)
        return (self.vertices[row, 0], self.vertices[row, -1])


def mesh_error_sq(vertices: np.ndarray, coeffs: np.ndarray, p: int,
                  exact, t: float, q: int) -> float:
    """Integral of (u_h - exact)^2 over one mesh at one time."""
    qx, qw, bmat, _, _, _, _, _ = canonical_tables(p, q)
    n = vertices.size - 1
    h = np.diff(vertices)
    xq = vertices[:-1, None] + 0.5 * (qx[None, :] + 1.0) * h[:, None]
    uh = np.einsum("qa,ea->eq", bmat,
                   np.lib.stride_tricks.sliding_window_view(coeffs, p + 1)[::p])
    diff = uh - exact(xq, t)
    return float(np.einsum("e,q,eq->", 0.5 * h, qw, diff * diff))


def spacetime_solution_error(snaps: RunSnapshots, exact, dt: float,
                             q: int | None = None) -> float:
    """Mixed discrete/continuous L2 norm of u - u_h over the sampled steps.

    The sum starts at the first sample after the initial state; ``exact`` is
    a callable of (x, t). Snapshots must cover every accepted step when the
    strict per-step norm is wanted.
    """
    if snaps.n_samples < 2:
        raise ValueError("need snapshots beyond the initial state")
    p = snaps.degree
    if q is None:
        q = p + 5
    total = 0.0
    for row in range(1, snaps.n_samples):
        total += dt * mesh_error_sq(snaps.vertices[row], snaps.coeffs[row], p,
                                    exact, float(snaps.times[row]), q)
    return math.sqrt(total)


def boundary_position_error(snaps: RunSnapshots, exact_boundaries,
                            dt: float) -> float:
    """Mixed norm of the tracked-point position errors.

    ``exact_boundaries(t)`` returns the exact positions matching
    ``snaps.boundary_positions`` (one point for an interface, two moving
    endpoints otherwise); every tracked point contributes.
    """
    total = 0.0
    for row in range(1, snaps.n_samples):
        t = float(snaps.times[row])
        got = snaps.boundary_positions(row)
        want = exact_boundaries(t)
        for g, w in zip(got, want):
            total += dt * (g - w) ** 2
    return math.sqrt(total)


def _overlap_error_sq_at(row_a, row_b, snaps_a: RunSnapshots,
                         snaps_b: RunSnapshots, q: int) -> float:
    """Integral of (u_a - u_b)^2 over the intersection of the two domains."""
    va = snaps_a.vertices[row_a]
    vb = snaps_b.vertices[row_b]
    lo = max(va[0], vb[0])
    hi = min(va[-1], vb[-1])
    if hi <= lo:
        return 0.0
    cuts = np.concatenate((va[(va > lo) & (va < hi)],
                           vb[(vb > lo) & (vb < hi)], [lo, hi]))
    cuts = np.unique(cuts)
    rule = gauss_rule(q)
    mids = 0.5 * (cuts[:-1] + cuts[1:])
    half = 0.5 * np.diff(cuts)
    xq = (mids[:, None] + half[:, None] * rule.points[None, :]).ravel()
    ua = np.empty(xq.size)
    ub = np.empty(xq.size)
    _core.eval_field_many(va, snaps_a.coeffs[row_a], snaps_a.degree, xq, ua)
    _core.eval_field_many(vb, snaps_b.coeffs[row_b], snaps_b.degree, xq, ub)
    d2 = ((ua - ub) ** 2).reshape(-1, rule.n)
    return float(np.einsum("e,q,eq->", half, rule.weights, d2))


def self_convergence_error(snaps_fine: RunSnapshots, snaps_coarse: RunSnapshots,
                           dt_sample: float, n_samples: int,
                           q: int | None = None) -> tuple[float, float]:
    """Difference norms between runs at successive refinement levels.

    Both runs must have persisted snapshots at the shared sample times
    (t0 + k * dt_sample, k = 1..n_samples). Fields are point-located in their
    own mesh and integrated over the overlap of the two domains; boundary
    differences pair corresponding endpoints.
    """
    if q is None:
        q = max(snaps_fine.degree, snaps_coarse.degree) + 5
    tol = 1e-9 * max(1.0, abs(float(snaps_fine.times[-1])))

    def row_at(snaps: RunSnapshots, t: float) -> int:
        idx = int(np.argmin(np.abs(snaps.times - t)))
        if abs(float(snaps.times[idx]) - t) > tol:
            raise ValueError(f"sample time {t} missing from run snapshots")
        return idx

    t0 = float(snaps_fine.times[0])
    err_u_sq = 0.0
    err_x_sq = 0.0
    for k in range(1, n_samples + 1):
        t = t0 + k * dt_sample
        ra = row_at(snaps_fine, t)
        rb = row_at(snaps_coarse, t)
        err_u_sq += dt_sample * _overlap_error_sq_at(ra, rb, snaps_fine,
                                                     snaps_coarse, q)
        for gf, gc in zip(snaps_fine.boundary_positions(ra),
                          snaps_coarse.boundary_positions(rb)):
            err_x_sq += dt_sample * (gf - gc) ** 2
    return math.sqrt(err_u_sq), math.sqrt(err_x_sq)


def convergence_rates(records: list[ErrorRecord],
                      solution_floor: float = SOLUTION_FLOOR,
                      boundary_floor: float = BOUNDARY_FLOOR) -> list[ErrorRecord]:
    """Fill observed orders between consecutive levels and flag floored ones.

    Floored levels sit at the rounding plateau; they are excluded from
    acceptance checks but kept in the table.
    """
    if len(records) < 2:
        raise ValueError("need at least two refinement levels")
    out = sorted(records, key=lambda r: r.level)
    for rec in out:
        rec.floored_u = rec.error_u < solution_floor
        rec.floored_x = rec.error_x < boundary_floor
    for prev, cur in zip(out, out[1:]):
        if cur.error_u > 0.0 and prev.error_u > 0.0:
            cur.order_u = math.log2(prev.error_u / cur.error_u)
        if cur.error_x > 0.0 and prev.error_x > 0.0:
            cur.order_x = math.log2(prev.error_x / cur.error_x)
    return out


RATES_CSV_SCHEMA = "level,n_elements,dt,error_u,error_x,order_u,order_x,floored"


def write_rates_csv(records: list[ErrorRecord], path) -> None:
    with open(path, "w") as fh:
        fh.write("# mmfem1d rates csv v1\n")
        fh.write(RATES_CSV_SCHEMA + "\n")
        for r in records:
            fh.write(f"{r.level},{r.n_elements},{float(r.dt)!r},"
                     f"{float(r.error_u)!r},{float(r.error_x)!r},"
                     f"{float(r.order_u)!r},{float(r.order_x)!r},"
                     f"{int(r.floored)}\n")
