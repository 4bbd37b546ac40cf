"""Benchmark the hot kernels under both backends.

Runs each kernel on a range of problem sizes and prints a timing table for
the active backend.  Compare backends by running twice:

    python3 benchmarks/bench_kernels.py
    QKSDP_NO_NUMBA=1 python3 benchmarks/bench_kernels.py

or pass --both to fork a subprocess with the flag set and print a combined
speedup table.
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np

from qksdp import kernels

SIZES = [(1_000, 10), (10_000, 20), (100_000, 20)]
REPEATS = 20


def _setup(n, r, seed=0):
    rng = np.random.default_rng(seed)
    R = rng.standard_normal((n, r)) / np.sqrt(r)
    a = rng.uniform(0.1, 1.0, n)
    tau = 0.4 * a.sum()
    G = rng.standard_normal((n, r))
    return R, a, tau, G


def _time(fn, *args, repeats=REPEATS):
    fn(*args)  # warm-up (JIT compile on the numba path)
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn(*args)
    return (time.perf_counter() - t0) / repeats


def run_suite():
    rows = []
    for n, r in SIZES:
        R, a, tau, G = _setup(n, r)
        d, b, gamma, w = kernels.arrow_system(R, a, tau)
        rhs, rhs_l = kernels.proj_rhs(R, a, G, w)
        rows.append({
            "n": n, "r": r,
            "constraint_parts": _time(kernels.constraint_parts, R, a, tau),
            "arrow_system": _time(kernels.arrow_system, R, a, tau),
            "arrow_solve": _time(kernels.arrow_solve, d, b, gamma, rhs, rhs_l, 1e-14),
            "proj_rhs": _time(kernels.proj_rhs, R, a, G, w),
            "apply_correction": _time(
                kernels.apply_correction, R, a, w, rhs / np.maximum(d, 1e-12), 0.1
            ),
        })
    return rows


def print_table(rows, label):
    names = [k for k in rows[0] if k not in ("n", "r")]
    print(f"\nbackend: {label}")
    print(f"{'n':>8} {'r':>3} " + " ".join(f"{k:>18}" for k in names))
    for row in rows:
        print(f"{row['n']:>8} {row['r']:>3} "
              + " ".join(f"{row[k] * 1e3:>15.3f} ms" for k in names))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--both", action="store_true",
                    help="also run the pure-numpy path and print speedups")
    ap.add_argument("--json", action="store_true", help="emit JSON rows only")
    args = ap.parse_args()

    rows = run_suite()
    if args.json:
        print(json.dumps(rows))
        return
    print_table(rows, kernels.backend())

    if args.both and kernels.backend() == "numba":
        env = dict(os.environ, QKSDP_NO_NUMBA="1")
        out = subprocess.run(
            [sys.executable, __file__, "--json"], env=env,
            capture_output=True, text=True, check=True,
        )
        np_rows = json.loads(out.stdout)
        print_table(np_rows, "numpy")
        names = [k for k in rows[0] if k not in ("n", "r")]
        print("\nspeedup (numpy time / numba time)")
        for fast, slow in zip(rows, np_rows):
            ratios = " ".join(f"{slow[k] / max(fast[k], 1e-12):>15.2f} x " for k in names)
            print(f"{fast['n']:>8} {fast['r']:>3} {ratios}")


if __name__ == "__main__":
    main()
