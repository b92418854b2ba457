"""Command line harness.

Subcommands: ``run`` one simulation level, ``converge`` a refinement study
against the reference solution, ``compare`` a self-convergence study,
``plot`` emission of plotting scripts for previously written CSVs.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 output I/O error.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from . import harness, metrics
from .errors import ConfigError, NumericalError

CONFIG_DOC = """\
Config files are flat key = value text; '#' starts a comment. Keys match
StudyConfig fields:

  problem            stefan | crank_gupta | pme_similarity | pme_cos
  degree             polynomial degree p >= 1
  rk_order           1 | 2 | 3 (0 or absent: default for the degree)
  n_elements         coarsest element count (uniform family)
  dt0                coarsest time step (0: problem default)
  levels             number of refinement levels
  span               simulated time length (0: problem default)
  mesh_family        uniform | stefan_bisection | stefan_geometric
  variant            interpolation | projection
  sample_dt          snapshot interval (0: dt0)
  perturb_amplitude  interior-vertex perturbation fraction (0: off)
  seed               perturbation seed
  pme_exponent       porous-medium exponent m
  out_dir            output directory
  jobs               concurrent levels in studies
"""

_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(harness.StudyConfig)}


def parse_config_file(path: str) -> dict:
    """Flat key = value parser for StudyConfig fields."""
    values: dict = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key not in _FIELD_TYPES:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        kind = _FIELD_TYPES[key]
        try:
            if kind == "int":
                values[key] = int(val)
            elif kind == "float":
                values[key] = float(val)
            else:
                values[key] = val
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {val!r}"
                              ) from exc
    return values


def _add_common(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--config", help="config file (flat key = value lines)")
    sp.add_argument("--problem", choices=harness.PROBLEM_NAMES)
    sp.add_argument("--degree", type=int)
    sp.add_argument("--rk-order", type=int, dest="rk_order")
    sp.add_argument("--levels", type=int)
    sp.add_argument("--n-elements", type=int, dest="n_elements")
    sp.add_argument("--dt0", type=float)
    sp.add_argument("--span", type=float)
    sp.add_argument("--sample-dt", type=float, dest="sample_dt")
    sp.add_argument("--mesh-family", choices=harness.MESH_FAMILIES,
                    dest="mesh_family")
    sp.add_argument("--variant", choices=("interpolation", "projection"))
    sp.add_argument("--perturb", type=float, dest="perturb_amplitude")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--pme-exponent", type=int, dest="pme_exponent")
    sp.add_argument("--jobs", type=int)
    sp.add_argument("--out", dest="out_dir")


def build_config(args: argparse.Namespace) -> harness.StudyConfig:
    values = parse_config_file(args.config) if args.config else {}
    for name in _FIELD_TYPES:
        got = getattr(args, name, None)
        if got is not None:
            values[name] = got
    if "problem" not in values:
        raise ConfigError("a problem must be given (--problem or config file)")
    return harness.StudyConfig(**values)


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mmfem1d",
        description="Moving-mesh finite elements for 1D moving boundary problems",
        epilog=CONFIG_DOC,
        formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one refinement level")
    _add_common(run)
    run.add_argument("--level", type=int, default=0)
    run.add_argument("--gcl", action="store_true",
                     help="report the geometric-conservation diagnostic")

    conv = sub.add_parser("converge",
                          help="refinement study against the exact solution")
    _add_common(conv)

    comp = sub.add_parser("compare",
                          help="self-convergence study (successive levels)")
    _add_common(comp)

    plot = sub.add_parser("plot", help="emit plotting scripts for study CSVs")
    _add_common(plot)
    return parser


def cmd_run(args) -> int:
    config = build_config(args)
    res = harness.run_simulation(config, level=args.level, collect_gcl=args.gcl)
    print(f"problem={config.problem} p={config.degree} k={config.resolved_rk} "
          f"level={args.level}: {res.n_steps} steps of dt={res.dt:.6g}"
          f"{' (adjusted)' if res.dt_adjusted else ''}")
    print(f"theta: {res.theta_initial:.12g} -> {res.theta_final:.12g}")
    if res.error_u == res.error_u:  # not NaN
        print(f"error_u={res.error_u:.6e} error_x={res.error_x:.6e}")
    if args.gcl:
        print(f"gcl_max={res.gcl_max:.3e}")
    if config.out_dir:
        files = harness.emit_outputs(config, [], [res])
        for f in files:
            print(f"wrote {f}")
    return 0


def _print_records(records) -> None:
    print("level  n_el        dt       error_u      error_x   order_u order_x floored")
    for r in records:
        print(f"{r.level:5d} {r.n_elements:5d} {r.dt:10.3e} {r.error_u:.6e} "
              f"{r.error_x:.6e} {r.order_u:7.3f} {r.order_x:7.3f} "
              f"{'*' if r.floored else ''}")


def cmd_study(args, self_convergence: bool) -> int:
    config = build_config(args)
    if self_convergence and config.problem != "pme_cos":
        print("note: self-convergence differencing is meant for runs without "
              "a reference solution", file=sys.stderr)
    if not self_convergence and config.problem == "pme_cos":
        raise ConfigError("pme_cos has no reference solution; use 'compare'")
    records, results = harness.run_convergence_study(config)
    _print_records(records)
    if config.out_dir:
        print(f"outputs in {config.out_dir}")
    return 0 if len(results) == config.levels else 3


def cmd_plot(args) -> int:
    config = build_config(args)
    if not config.out_dir:
        raise ConfigError("plot needs --out pointing at the study directory")
    for f in harness.emit_plot_scripts(config, config.out_dir):
        print(f"wrote {f}")
    return 0


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "converge":
            return cmd_study(args, self_convergence=False)
        if args.command == "compare":
            return cmd_study(args, self_convergence=True)
        return cmd_plot(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
