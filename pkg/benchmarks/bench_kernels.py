"""Timing comparison of the compiled transport kernel against the numpy twin.

Runs the log-domain scaling loop on random squared-distance costs at a few
vocabulary/topic sizes, checks both routes return the same potentials, and
prints a small table. Invoke from the repo root:

    python3 benchmarks/bench_kernels.py [--repeats 5]
"""

import argparse
import time

import numpy as np

from glocom.ecr import TransportProblem, default_nu
from glocom.kernels import sinkhorn_log_numpy

try:
    from glocom import _speedups
except ImportError:
    _speedups = None

SIZES = [(500, 20), (2000, 50), (5000, 100), (10000, 200)]


def make_problem(V, K, seed):
    rng = np.random.default_rng(seed)
    W = rng.normal(size=(V, 16))
    T = rng.normal(size=(K, 16))
    C = ((W[:, None, :] - T[None, :, :]) ** 2).sum(axis=2)
    prob = TransportProblem(C, nu=default_nu(C), max_iters=200, tol=1e-9)
    Mr = -prob.cost / prob.nu
    return (
        np.ascontiguousarray(Mr),
        np.log(prob.row_marginal),
        np.log(prob.col_marginal),
        prob.max_iters,
        prob.tol,
    )


def run(fn, args, repeats):
    best = np.inf
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeats", type=int, default=5)
    ns = ap.parse_args()

    if _speedups is None:
        print("compiled extension not built; timing the numpy route alone")
    print(f"{'V x K':>12}  {'numpy':>10}  {'cython':>10}  {'speedup':>8}  agree")
    for V, K in SIZES:
        args = make_problem(V, K, seed=V + K)
        t_np, out_np = run(sinkhorn_log_numpy, args, ns.repeats)
        if _speedups is None:
            print(f"{V:>7} x {K:<3}  {t_np * 1e3:>8.1f}ms  {'-':>10}  {'-':>8}")
            continue
        t_cy, out_cy = run(_speedups.sinkhorn_log, args, ns.repeats)
        agree = (
            np.allclose(out_np[0], out_cy[0], atol=1e-10)
            and np.allclose(out_np[1], out_cy[1], atol=1e-10)
            and out_np[2:] == out_cy[2:]
        )
        print(
            f"{V:>7} x {K:<3}  {t_np * 1e3:>8.1f}ms  {t_cy * 1e3:>8.1f}ms"
            f"  {t_np / t_cy:>7.1f}x  {agree}"
        )


if __name__ == "__main__":
    main()
