"""Run orchestration: configurations, simulations, convergence studies, CSVs."""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import _core, engine, mesh as mesh_mod, metrics, problems
from .errors import (ConfigError, DegenerateMonitorError, DegenerateWeightError,
                     MeshTanglingError, NumericalError, SingularSystemError)
from .fem import canonical_tables
from .metrics import ErrorRecord, RunSnapshots

PROBLEM_NAMES = ("stefan", "crank_gupta", "pme_similarity", "pme_cos")
MESH_FAMILIES = ("uniform", "stefan_bisection", "stefan_geometric")

DEFAULT_DT0 = {"stefan": 8e-7, "crank_gupta": 1.25e-5,
               "pme_similarity": 1e-4, "pme_cos": 1e-4}
DEFAULT_SPAN = {"stefan": 0.01, "crank_gupta": 0.3,
                "pme_similarity": 0.01, "pme_cos": 0.01}

# time-stepping order chosen so temporal error keeps up with dt ~ h^2 refinement
DEFAULT_RK = {1: 1, 2: 2, 3: 2, 4: 3}


@dataclass(frozen=True)
class StudyConfig:
    """Everything needed to reproduce one study (or one of its runs)."""

    problem: str
    degree: int = 1
    rk_order: int = 0          # 0 = default for the degree
    n_elements: int = 10
    dt0: float = 0.0           # 0 = problem default
    levels: int = 1
    span: float = 0.0          # simulation length, 0 = problem default
    mesh_family: str = ""      # "" = default for the problem
    variant: str = "interpolation"
    sample_dt: float = 0.0     # snapshot interval, 0 = dt0
    perturb_amplitude: float = 0.0
    seed: int = 0
    pme_exponent: int = 1
    out_dir: str | None = None
    jobs: int = 1

    def __post_init__(self):
        if self.problem not in PROBLEM_NAMES:
            raise ConfigError(f"unknown problem {self.problem!r}; "
                              f"choose from {PROBLEM_NAMES}")
        if self.degree < 1:
            raise ConfigError("degree must be >= 1")
        if self.rk_order not in (0, 1, 2, 3):
            raise ConfigError("rk_order must be 1, 2 or 3 (0 = default)")
        if self.levels < 1:
            raise ConfigError("levels must be >= 1")
        if self.n_elements < 1:
            raise ConfigError("n_elements must be >= 1")
        if self.variant not in engine.VARIANTS:
            raise ConfigError(f"variant must be one of {tuple(engine.VARIANTS)}")
        fam = self.resolved_mesh_family
        if fam not in MESH_FAMILIES:
            raise ConfigError(f"mesh_family must be one of {MESH_FAMILIES}")
        if fam.startswith("stefan") != (self.problem == "stefan"):
            raise ConfigError(f"mesh family {fam!r} does not fit {self.problem!r}")
        if not 0.0 <= self.perturb_amplitude < 0.5:
            raise ConfigError("perturb_amplitude must lie in [0, 0.5)")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")

    @property
    def resolved_mesh_family(self) -> str:
        if self.mesh_family:
            return self.mesh_family
        return "stefan_bisection" if self.problem == "stefan" else "uniform"

    @property
    def resolved_dt0(self) -> float:
        return self.dt0 if self.dt0 > 0.0 else DEFAULT_DT0[self.problem]

    @property
    def resolved_span(self) -> float:
        return self.span if self.span > 0.0 else DEFAULT_SPAN[self.problem]

    @property
    def resolved_rk(self) -> int:
        if self.rk_order:
            return self.rk_order
        return DEFAULT_RK.get(self.degree, 3)

    @property
    def resolved_sample_dt(self) -> float:
        return self.sample_dt if self.sample_dt > 0.0 else self.resolved_dt0

    def make_problem(self) -> problems.ProblemSpec:
        span = self.resolved_span
        if self.problem == "stefan":
            return problems.stefan_problem(span=span)
        if self.problem == "crank_gupta":
            return problems.crank_gupta_problem(span=span)
        if self.problem == "pme_similarity":
            return problems.pme_similarity_problem(m=self.pme_exponent, span=span)
        return problems.pme_cos_problem(span=span)


@dataclass
class RunResult:
    level: int
    n_elements: int
    dt: float
    n_steps: int
    error_u: float
    error_x: float
    theta_initial: float
    theta_final: float
    snapshots: RunSnapshots
    gcl_max: float = math.nan
    elapsed: float = 0.0
    dt_adjusted: bool = False


def _step_counts(span: float, dt: float) -> tuple[int, float, bool]:
    """Number of fixed steps covering span exactly; dt shrinks if needed."""
    n = round(span / dt)
    if n >= 1 and abs(span - n * dt) <= 1e-12 * span:
        return n, dt, False
    n = int(math.ceil(span / dt - 1e-12))
    return n, span / n, True


def build_initial_mesh(config: StudyConfig, level: int) -> mesh_mod.Mesh1D:
    """Coarsest mesh of the family (perturbed when asked), refined ``level``
    times; perturbing before refinement keeps the levels nested so mesh
    irregularity is consistent across a study."""
    fam = config.resolved_mesh_family
    p = config.degree
    if fam == "stefan_bisection":
        m = mesh_mod.build_stefan_bisection(p)
    elif fam == "stefan_geometric":
        m = mesh_mod.build_stefan_geometric(p)
    else:
        prob = config.make_problem()
        a, b = prob.domain
        m = mesh_mod.build_uniform(a, b, config.n_elements, p)
    if config.perturb_amplitude > 0.0:
        m = mesh_mod.perturb_interior(m, config.perturb_amplitude,
                                      seed=config.seed)
    for _ in range(level):
        m = mesh_mod.refine_uniform(m)
    return m


_STATUS_WHAT = {1: "mass matrix", 3: "velocity potential system",
                4: "velocity projection system"}


def _raise_for_status(status: int, step: int, stage: int, n_steps: int):
    ctx = f"(step {step + 1}/{n_steps}, stage {stage + 1})" if step >= 0 else ""
    if status == 5:
        raise MeshTanglingError(f"mesh tangled {ctx}")
    if status == 2:
        raise DegenerateMonitorError(f"monitor integral vanished {ctx}")
    if status == 3:
        raise DegenerateWeightError(f"velocity potential system singular {ctx}")
    what = _STATUS_WHAT.get(status, "linear system")
    raise SingularSystemError(-1, f"{what} {ctx}")


def run_simulation(config: StudyConfig, level: int = 0,
                   collect_gcl: bool = False,
                   snapshot_every_step: bool = False) -> RunResult:
    """Fixed-step integration of one refinement level.

    Snapshots are stored at every multiple of the sample interval (every step
    with ``snapshot_every_step``); space-time error norms against the
    reference solution accumulate every accepted step when one exists.
    """
    started = time.perf_counter()
    prob = config.make_problem()
    p = config.degree
    msh = build_initial_mesh(config, level)
    n = msh.n_elements

    dt_req = config.resolved_dt0 / 4.0 ** level
    n_steps, dt, adjusted = _step_counts(config.resolved_span, dt_req)

    if snapshot_every_step:
        stride = 1
    else:
        ratio = config.resolved_sample_dt / dt
        stride = max(1, round(ratio))
        if abs(ratio - stride) > 1e-9 * max(1.0, stride):
            raise ConfigError(
                f"sample interval {config.resolved_sample_dt} is not a "
                f"multiple of dt={dt}")

    q = engine.quadrature_order(prob, p)
    qx, qw, bmat, dmat, mloc, kloc, bvec, b1mat = canonical_tables(p, q)
    qe = p + engine.ERROR_EXTRA_POINTS
    qxe, qwe, bmate, _, _, _, _, _ = canonical_tables(p, qe)

    state = engine.initial_state(prob, msh)
    xv = state.mesh.vertices.copy()
    mu = state.mass.mu.copy()
    theta0 = state.mass.theta
    iface = msh.interface_index if msh.interface_index is not None else -1
    pf = prob.pf_array()

    n_snaps = n_steps // stride + 1
    snap_t = np.zeros(n_snaps)
    snap_x = np.zeros((n_snaps, n + 1))
    snap_u = np.zeros((n_snaps, msh.n_dofs))
    errs = np.zeros(2)

    status, fstep, fstage = _core.advance(
        prob.kind_code, engine.VARIANTS[config.variant], config.resolved_rk,
        xv, mu, prob.t0, p, iface, pf, dt, n_steps,
        qx, qw, bmat, dmat, b1mat, mloc, mloc1_for(q), kloc, bvec,
        prob.exact_kind_code, qxe, qwe, bmate,
        stride, snap_t, snap_x, snap_u, errs)
    if status != 0:
        _raise_for_status(status, fstep, fstage, n_steps)

    snaps = RunSnapshots(degree=p, times=snap_t, vertices=snap_x,
                         coeffs=snap_u,
                         interface_index=msh.interface_index)
    err_u = math.sqrt(errs[0]) if prob.has_exact else math.nan
    err_x = math.sqrt(errs[1]) if prob.has_exact else math.nan

    gcl = math.nan
    if collect_gcl:
        gcl = 0.0
        for row in range(n_snaps):
            row_mesh = mesh_mod.Mesh1D(snap_x[row].copy(), p,
                                       msh.interface_index)
            u = engine.ScalarField(row_mesh, snap_u[row].copy())
            vel = engine.velocity_from_solution(row_mesh, u, prob,
                                                float(snap_t[row]),
                                                config.variant)
            gcl = max(gcl, engine.gcl_residual(row_mesh, vel, dt))

    return RunResult(level=level, n_elements=n, dt=dt, n_steps=n_steps,
                     error_u=err_u, error_x=err_x,
                     theta_initial=theta0, theta_final=float(mu.sum()),
                     snapshots=snaps, gcl_max=gcl,
                     elapsed=time.perf_counter() - started,
                     dt_adjusted=adjusted)


def mloc1_for(q: int) -> np.ndarray:
    return canonical_tables(1, q)[4]


def run_convergence_study(config: StudyConfig,
                          collect_gcl: bool = False
                          ) -> tuple[list[ErrorRecord], list[RunResult]]:
    """Run all refinement levels and build the rate table.

    Exact-solution problems use the accumulated space-time norms; the
    cos-start porous-medium study differences successive levels at the shared
    sample times instead. A failed level is reported but does not abort the
    others.
    """
    prob = config.make_problem()
    if config.levels < 2:
        raise ConfigError("a convergence study needs at least 2 levels")

    results: list[RunResult | None] = [None] * config.levels
    failures: list[tuple[int, Exception]] = []

    def _one(level: int):
        return run_simulation(config, level, collect_gcl=collect_gcl)

    if config.jobs > 1:
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            futs = {pool.submit(_one, lv): lv for lv in range(config.levels)}
            for fut, lv in futs.items():
                try:
                    results[lv] = fut.result()
                except NumericalError as exc:
                    failures.append((lv, exc))
    else:
        for lv in range(config.levels):
            try:
                results[lv] = _one(lv)
            except NumericalError as exc:
                failures.append((lv, exc))

    records: list[ErrorRecord] = []
    if prob.has_exact:
        for res in results:
            if res is None:
                continue
            records.append(ErrorRecord(level=res.level, n_elements=res.n_elements,
                                       dt=res.dt, error_u=res.error_u,
                                       error_x=res.error_x))
    else:
        n_samples = round(config.resolved_span / config.resolved_sample_dt)
        for lv in range(1, config.levels):
            fine, coarse = results[lv], results[lv - 1]
            if fine is None or coarse is None:
                continue
            eu, ex = metrics.self_convergence_error(
                fine.snapshots, coarse.snapshots,
                config.resolved_sample_dt, n_samples)
            records.append(ErrorRecord(level=lv, n_elements=fine.n_elements,
                                       dt=fine.dt, error_u=eu, error_x=ex))
    if len(records) >= 2:
        records = metrics.convergence_rates(records)
    for lv, exc in failures:
        print(f"level {lv} failed: {exc}")

    done = [r for r in results if r is not None]
    if config.out_dir:
        emit_outputs(config, records, done)
    return records, done


# ---------------------------------------------------------------------------
# Output files
# ---------------------------------------------------------------------------

TRAJECTORY_CSV_SCHEMA = "time,vertex_index,coordinate,is_interface"
SOLUTION_CSV_SCHEMA = "time,coordinate,value"


def _run_tag(config: StudyConfig) -> str:
    return f"{config.problem}_p{config.degree}_k{config.resolved_rk}"


def write_trajectory_csv(snaps: RunSnapshots, path) -> None:
    with open(path, "w") as fh:
        fh.write("# mmfem1d trajectory csv v1\n")
        fh.write(TRAJECTORY_CSV_SCHEMA + "\n")
        for row in range(snaps.n_samples):
            t = float(snaps.times[row])
            for i, x in enumerate(snaps.vertices[row]):
                flag = 1 if snaps.interface_index == i else 0
                fh.write(f"{t!r},{i},{float(x)!r},{flag}\n")


def write_solution_csv(snaps: RunSnapshots, path) -> None:
    p = snaps.degree
    with open(path, "w") as fh:
        fh.write("# mmfem1d solution csv v1\n")
        fh.write(SOLUTION_CSV_SCHEMA + "\n")
        for row in range(snaps.n_samples):
            t = float(snaps.times[row])
            verts = snaps.vertices[row]
            n = verts.size - 1
            for e in range(n):
                h = verts[e + 1] - verts[e]
                for j in range(p):
                    x = float(verts[e] + j * h / p)
                    fh.write(f"{t!r},{x!r},{float(snaps.coeffs[row, e * p + j])!r}\n")
            fh.write(f"{t!r},{float(verts[-1])!r},{float(snaps.coeffs[row, -1])!r}\n")


def emit_outputs(config: StudyConfig, records: list[ErrorRecord],
                 results: list[RunResult]) -> list[Path]:
    """Write the rate table and per-level snapshot CSVs."""
    out = Path(config.out_dir or ".")
    out.mkdir(parents=True, exist_ok=True)  # OSError -> I/O failure exit code
    tag = _run_tag(config)
    written: list[Path] = []
    if records:
        path = out / f"{tag}_rates.csv"
        metrics.write_rates_csv(records, path)
        written.append(path)
    for res in results:
        sol = out / f"{tag}_L{res.level}.csv"
        write_solution_csv(res.snapshots, sol)
        written.append(sol)
        traj = out / f"{tag}_L{res.level}_trajectory.csv"
        write_trajectory_csv(res.snapshots, traj)
        written.append(traj)
    return written


PLOT_RATES = """\
#!/usr/bin/env python3
# log-log error vs DOF count, generated by mmfem1d
import csv
import math
import matplotlib.pyplot as plt

levels, ndofs, err_u, err_x = [], [], [], []
with open({csv!r}) as fh:
    for row in csv.reader(line for line in fh if not line.startswith("#")):
        if row[0] == "level":
            continue
        levels.append(int(row[0]))
        ndofs.append(int(row[1]) * {degree} + 1)
        err_u.append(float(row[3]))
        err_x.append(float(row[4]))
fig, ax = plt.subplots()
ax.loglog(ndofs, err_u, "o-", label="solution error")
ax.loglog(ndofs, err_x, "s--", label="boundary error")
ax.set_xlabel("degrees of freedom")
ax.set_ylabel("space-time error")
ax.legend()
ax.grid(True, which="both", alpha=0.3)
fig.savefig({png!r}, dpi=150)
print("wrote", {png!r})
"""

PLOT_TRAJECTORY = """\
#!/usr/bin/env python3
# node-trajectory fan plot, generated by mmfem1d
import csv
from collections import defaultdict
import matplotlib.pyplot as plt

paths = defaultdict(list)
with open({csv!r}) as fh:
    for row in csv.reader(line for line in fh if not line.startswith("#")):
        if row[0] == "time":
            continue
        paths[int(row[1])].append((float(row[0]), float(row[2])))
fig, ax = plt.subplots()
for idx in sorted(paths):
    pts = paths[idx]
    ax.plot([x for _, x in pts], [t for t, _ in pts], "k-", lw=0.6)
ax.set_xlabel("x")
ax.set_ylabel("t")
fig.savefig({png!r}, dpi=150)
print("wrote", {png!r})
"""


def emit_plot_scripts(config: StudyConfig, out_dir: str) -> list[Path]:
    """Write plain-text matplotlib scripts referencing the emitted CSVs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tag = _run_tag(config)
    written = []
    rates_csv = out / f"{tag}_rates.csv"
    script = out / f"plot_{tag}_rates.py"
    script.write_text(PLOT_RATES.format(csv=str(rates_csv), degree=config.degree,
                                        png=str(out / f"{tag}_rates.png")))
    written.append(script)
    traj_csv = out / f"{tag}_L0_trajectory.csv"
    script = out / f"plot_{tag}_trajectory.py"
    script.write_text(PLOT_TRAJECTORY.format(csv=str(traj_csv),
                                             png=str(out / f"{tag}_trajectory.png")))
    written.append(script)
    return written
