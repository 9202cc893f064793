"""Compare the compiled and numpy field kernels, alone and inside full solves.

    python3 benchmarks/bench_field.py [--repeat N]
"""
import argparse
import os
import subprocess
import sys
import time
import timeit

import numpy as np

from switched_kkt import backend

SOLVE_SNIPPET = """
import time
from switched_kkt import builtin_problem, solve
from switched_kkt.backend import BACKEND
t0 = time.perf_counter()
solve(builtin_problem({name!r}), {z0!r})
print(BACKEND, time.perf_counter() - t0)
"""

STARTS = {"qp-paper": (-0.25, 0.0), "rosenbrock": (1.0, -1.0), "hvac-paper": (23.0, 23.0, 1.0)}


def kernel_case(rng, n, k):
    J = rng.normal(size=(k, n))
    A = J + 0.1 * rng.normal(size=(k, n))
    return rng.normal(size=n), A, J, rng.normal(size=k)


def bench_kernels(repeat):
    rng = np.random.default_rng(0)
    names = ["python"] + (["cython"] if backend.BACKEND == "cython" else [])
    print(f"{'n':>3} {'k':>3} " + " ".join(f"{nm + ' us':>12}" for nm in names))
    for n, k in [(2, 1), (3, 2), (4, 2), (6, 3), (10, 5)]:
        args = kernel_case(rng, n, k)
        row = []
        for nm in names:
            field = backend.get_field(nm)
            per = min(timeit.repeat(lambda: field(*args, 1.0, 1.0), number=repeat, repeat=3)) / repeat
            row.append(per * 1e6)
        print(f"{n:>3} {k:>3} " + " ".join(f"{v:12.2f}" for v in row))


def bench_solves():
    # each backend runs in a fresh interpreter since the choice is made at import
    for name, z0 in STARTS.items():
        for forced in ("python", "cython"):
            env = dict(os.environ, SWITCHED_KKT_BACKEND=forced)
            out = subprocess.run([sys.executable, "-c", SOLVE_SNIPPET.format(name=name, z0=z0)],
                                 env=env, capture_output=True, text=True, check=True).stdout.split()
            print(f"{name:>11} requested={forced:<7} used={out[0]:<7} {float(out[1]):8.2f} s")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=2000)
    parser.add_argument("--skip-solves", action="store_true")
    args = parser.parse_args()
    print(f"default backend: {backend.BACKEND}")
    start = time.perf_counter()
    bench_kernels(args.repeat)
    if not args.skip_solves:
        bench_solves()
    print(f"total {time.perf_counter() - start:.1f} s")


if __name__ == "__main__":
    main()
