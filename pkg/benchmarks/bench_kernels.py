"""Benchmark the compiled stepping kernel against the pure-Python fallback.

Both backends produce bit-identical trajectories, so this measures speed
only. Usage:

    python benchmarks/bench_kernels.py [--replicates N] [--k K] [--gens G]
"""

import argparse
import time

import numpy as np

from branchflow.discrete_flow import run_independent_batch, run_interactive_batch
from branchflow.genfun import build_local_pgf, build_nonlocal_pgf
from branchflow.kernels import HAVE_COMPILED
from branchflow.mechanisms import BranchingMechanism, EMPTY_JUMPS


def time_backend(fn, backend):
    started = time.perf_counter()
    out = fn(backend)
    return time.perf_counter() - started, out


def bench(name, fn, site_steps):
    py_time, py_out = time_backend(fn, "python")
    row = f"{name:24s} python {py_time:8.3f}s  {site_steps / py_time / 1e6:8.2f} Msteps/s"
    if HAVE_COMPILED:
        c_time, c_out = time_backend(fn, "compiled")
        identical = np.array_equal(py_out, c_out)
        row += (f"   compiled {c_time:8.3f}s  {site_steps / c_time / 1e6:8.2f} Msteps/s"
                f"   speedup {py_time / c_time:6.1f}x   identical={identical}")
    print(row)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--replicates", type=int, default=200)
    parser.add_argument("--k", type=int, default=50)
    parser.add_argument("--gens", type=int, default=50)
    args = parser.parse_args()

    k = args.k
    gamma = float(k)
    mech = BranchingMechanism(sigma2=1.0)
    g = build_local_pgf(mech, k, gamma)
    n_sites = k + 1
    init = np.ones(n_sites, dtype=np.int64)
    snaps = [args.gens]

    print(f"compiled kernel available: {HAVE_COMPILED}")
    print(f"workload: k={k}, sites={n_sites}, generations={args.gens}, "
          f"replicates={args.replicates}\n")

    def independent(backend):
        return run_independent_batch(init, [g] * n_sites, args.gens, snaps, 12345,
                                     args.replicates, backend=backend)

    bench("independent flow", independent,
          args.replicates * args.gens * n_sites)

    ki = max(4, k // 2)
    gi = build_local_pgf(mech, ki, float(ki))
    h = build_nonlocal_pgf(1.0, EMPTY_JUMPS, ki, float(ki))
    init_i = np.ones(ki + 1, dtype=np.int64)
    inter_reps = max(1, args.replicates // 10)
    inter_gens = max(1, args.gens // 2)

    def interactive(backend):
        return run_interactive_batch(init_i, gi, [h] * ki, inter_gens, [inter_gens],
                                     54321, inter_reps, backend=backend)

    # each site update draws one factor per lower site plus immigration
    inter_steps = inter_reps * inter_gens * sum(m + 2 for m in range(ki + 1))
    bench("interactive flow", interactive, inter_steps)


if __name__ == "__main__":
    main()
