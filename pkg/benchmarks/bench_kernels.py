#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-numpy fallback.

Two views:

* kernel microbenchmark - the fixed-point iteration kernel and the batch
  interpolation kernel on the one-player certification workload shape
  (401 nodes x 201 lattice controls);
* end-to-end - the full one-player solve, run in a subprocess per backend
  so the DIFFGAME_BACKEND selection happens at import time exactly as it
  does for users.

Usage: python benchmarks/bench_kernels.py [--end-to-end] [--repeats N]
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from diffgame import kernels

_SOLVE_SNIPPET = """
import time
import numpy as np
import diffgame as dg

game = dg.lq_one_player(rho=1.0)
grid = dg.Grid.uniform(game.state_domain, 401)
cfg = dg.SolverConfig(control_samples=201, inner_tol=1e-6, outer_tol=1e-4)
ts = dg.make_timestep(1.0, 0.01)
dg.solve_nash(game, grid, ts, cfg)          # warm-up (jit compile, caches)
t0 = time.perf_counter()
sol = dg.solve_nash(game, grid, ts, cfg)
elapsed = time.perf_counter() - t0
iters = sum(sum(sweep) for sweep in sol.diagnostics.inner_iterations)
print(f"{dg.backend_name()}: {elapsed:.2f} s, {iters} inner iterations")
"""


def bench_kernels(repeats):
    rng = np.random.default_rng(0)
    n_controls, n_nodes, corners = 201, 401, 2
    values = rng.normal(size=n_nodes)
    stage = rng.normal(size=(n_controls, n_nodes))
    idx = rng.integers(0, n_nodes,
                       size=(n_controls, n_nodes, corners)).astype(np.int64)
    w = rng.random((n_controls, n_nodes, corners))
    w /= w.sum(axis=-1, keepdims=True)

    backends = {"numpy": kernels.get_backend("numpy")}
    try:
        backends["numba"] = kernels.get_backend("numba")
    except ImportError as exc:
        print(f"numba unavailable ({exc}); benchmarking numpy only")

    results = {}
    for name, table in backends.items():
        table["bellman"](values, stage, idx, w, 0.01, 0.99)  # warm-up
        t0 = time.perf_counter()
        for _ in range(repeats):
            out = table["bellman"](values, stage, idx, w, 0.01, 0.99)
        bell = (time.perf_counter() - t0) / repeats
        flat_idx = idx.reshape(-1, corners)
        flat_w = w.reshape(-1, corners)
        table["interp"](values, flat_idx, flat_w)
        t0 = time.perf_counter()
        for _ in range(repeats):
            table["interp"](values, flat_idx, flat_w)
        interp = (time.perf_counter() - t0) / repeats
        results[name] = (bell, interp, out)

    print(f"kernel timings over {repeats} repeats "
          f"({n_controls} controls x {n_nodes} nodes):")
    for name, (bell, interp, _) in results.items():
        print(f"  {name:>6}: bellman {bell * 1e3:8.3f} ms   "
              f"interp {interp * 1e3:8.3f} ms")
    if len(results) == 2:
        speedup = results["numpy"][0] / results["numba"][0]
        print(f"  numba speedup on bellman: {speedup:.1f}x")
        same = all(
            np.array_equal(a, b)
            for a, b in zip(results["numpy"][2], results["numba"][2]))
        print(f"  backends bitwise identical: {same}")


def bench_end_to_end():
    print("end-to-end one-player solve (subprocess per backend):")
    for backend in ("numba", "numpy"):
        env = dict(os.environ, DIFFGAME_BACKEND=backend)
        proc = subprocess.run([sys.executable, "-c", _SOLVE_SNIPPET],
                              env=env, capture_output=True, text=True)
        out = proc.stdout.strip() or proc.stderr.strip().splitlines()[-1]
        print(f"  {out}")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=200)
    parser.add_argument("--end-to-end", action="store_true",
                        help="also time a full solve per backend")
    args = parser.parse_args()
    bench_kernels(args.repeats)
    if args.end_to_end:
        bench_end_to_end()


if __name__ == "__main__":
    main()
