"""Benchmark the JIT kernels against the pure-NumPy fallback.

Runs the same mid-size simulation under the current backend and in a
subprocess with ``MMFEM1D_BACKEND=numpy``, reports wall times and checks the
two backends agree. Invoke with ``python -m mmfem1d.benchmark``.
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time

CHILD_SNIPPET = """\
import json, sys, time
from mmfem1d import backend, harness
cfg = harness.StudyConfig(**json.loads(sys.argv[1]))
level = int(sys.argv[2])
harness.run_simulation(cfg, level=0)  # warm the JIT cache / code paths
t0 = time.perf_counter()
res = harness.run_simulation(cfg, level=level)
elapsed = time.perf_counter() - t0
print(json.dumps({
    "backend": backend.backend_name(),
    "elapsed": elapsed,
    "n_steps": res.n_steps,
    "theta_final": res.theta_final,
    "error_u": None if res.error_u != res.error_u else res.error_u,
    "boundary": list(res.snapshots.boundary_positions(res.snapshots.n_samples - 1)),
}))
"""


def run_case(config_kwargs: dict, level: int, backend_env: str | None) -> dict:
    env = dict(os.environ)
    if backend_env:
        env["MMFEM1D_BACKEND"] = backend_env
    out = subprocess.run(
        [sys.executable, "-c", CHILD_SNIPPET, json.dumps(config_kwargs),
         str(level)],
        env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout.splitlines()[-1])


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        description="compare the numba and numpy kernel backends")
    parser.add_argument("--problem", default="crank_gupta")
    parser.add_argument("--degree", type=int, default=2)
    parser.add_argument("--span", type=float, default=0.002)
    parser.add_argument("--level", type=int, default=1)
    args = parser.parse_args(argv)

    kwargs = dict(problem=args.problem, degree=args.degree, span=args.span,
                  levels=args.level + 1)

    fast = run_case(kwargs, args.level, "numba")
    slow = run_case(kwargs, args.level, "numpy")

    print(f"case: {args.problem} p={args.degree} level={args.level} "
          f"({fast['n_steps']} steps)")
    for r in (fast, slow):
        rate = r["n_steps"] / r["elapsed"]
        print(f"  {r['backend']:>5}: {r['elapsed']:8.3f} s "
              f"({rate:10.1f} steps/s)")
    print(f"  speedup: {slow['elapsed'] / fast['elapsed']:.1f}x")

    dev = abs(fast["theta_final"] - slow["theta_final"])
    bdev = max(abs(a - b) for a, b in zip(fast["boundary"], slow["boundary"]))
    print(f"  agreement: |dtheta|={dev:.3e} |dboundary|={bdev:.3e}")
    ok = dev < 1e-12 and bdev < 1e-12
    print("  backends agree" if ok else "  BACKENDS DISAGREE")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
