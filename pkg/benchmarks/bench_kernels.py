"""Compiled vs numpy RTE kernels.

Times one full RTE solve (identity start, tol 1e-9) on K-clutter data for a
range of dimensions, plus a warm-started design sweep at the reference size.
Run with ``python benchmarks/bench_kernels.py``; the compiled extension must
be built (``pip install -e . --no-build-isolation``).
"""
import argparse
import timeit

import numpy as np

from anmf import kernels
from anmf.clutter import generate_secondary, trial_rng
from anmf.design import RteObjective, optimize_rho, rte_design_interval
from anmf.model import TextureModel, build_toeplitz_covariance, hermitian_sqrt, steering_vector

BACKENDS = ("compiled", "python")


def k_data(N, n, seed=0):
    S = hermitian_sqrt(build_toeplitz_covariance(0.96j, N))
    return generate_secondary(trial_rng(seed, 0, "secondary"), S, TextureModel.gamma_k(0.5), n,
                              trial_rng(seed, 0, "texture")).secondary


def best_time(fn, repeat):
    timer = timeit.Timer(fn)
    number, _ = timer.autorange()
    return min(timer.repeat(repeat=repeat, number=number)) / number


def bench_solve(dims, rhos, repeat):
    print(f"{'N':>4} {'rho':>5} {'iters':>5} " + " ".join(f"{b + ' [ms]':>14}" for b in BACKENDS) + f" {'speedup':>8}")
    for N in dims:
        X = np.ascontiguousarray(k_data(N, 2 * N))
        for rho in rhos:
            times, iters = {}, None
            for backend in BACKENDS:
                _, iters, _ = kernels.rte_fixed_point(X, rho, 1e-9, 500, backend=backend)
                times[backend] = best_time(lambda: kernels.rte_fixed_point(X, rho, 1e-9, 500, backend=backend),
                                           repeat)
            print(f"{N:>4} {rho:>5.2f} {iters:>5} " + " ".join(f"{1e3 * times[b]:>14.3f}" for b in BACKENDS)
                  + f" {times['python'] / times['compiled']:>8.2f}")


def bench_design(N, repeat):
    X = k_data(N, 2 * N)
    p = steering_vector(20.0, N)
    interval = rte_design_interval(N, 2 * N)
    print(f"\nwarm-started design sweep, N={N}, grid step 0.01 + golden refinement")
    for backend in BACKENDS:
        def run():
            optimize_rho(RteObjective(X, p, backend=backend), interval)
        obj = RteObjective(X, p, backend=backend)
        optimize_rho(obj, interval)
        print(f"  {backend:>8}: {1e3 * best_time(run, repeat):9.1f} ms, {obj.total_iterations} iterations")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--dims", type=int, nargs="+", default=[10, 20, 30, 40, 60, 100])
    parser.add_argument("--rho", type=float, nargs="+", default=[0.1, 0.5])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    if not kernels.HAVE_COMPILED:
        raise SystemExit("compiled kernel not available; build the package first")
    bench_solve(args.dims, args.rho, args.repeat)
    bench_design(30, args.repeat)


if __name__ == "__main__":
    main()
