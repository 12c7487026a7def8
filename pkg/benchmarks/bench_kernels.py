#!/usr/bin/env python3
"""Time the numba kernel family against the numpy fallback.

Covers every hot kernel on realistic discretized instances, then an
end-to-end solve with each family bound.  Run from the repo root:

    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --repeats 9 --grid 80

Per-kernel times are best-of-N wall clock; the jit path is warmed before
timing so compilation never lands in the numbers.
"""

import argparse
import time

import numpy as np

from lmrate import _kernels
from lmrate.channel import build_channel, discretize
from lmrate.constellation import build_constellation
from lmrate.sinkhorn import SolverConfig, solve

KERNEL_NAMES = list(_kernels._NAMES)


def build_case(scheme, n_side):
    cons = build_constellation(scheme)
    chan = build_channel(1.0, 0.9, np.pi / 18, 0.0)
    _, prob = discretize(chan, cons, n_side)
    # product-coupling scalings at a mid-range multiplier: the magnitudes
    # the solver actually feeds these kernels
    lphi = np.log(prob.p_x)
    lpsi = np.log(prob.p_y)
    lam = 1.0
    log_px = np.log(prob.p_x)
    log_py = np.log(prob.p_y)
    w_t = np.ascontiguousarray((prob.p_x[:, None] * prob.w).T)
    d_t = np.ascontiguousarray(prob.d.T)
    a = np.zeros(prob.m)
    calls = {
        "scale_rows": (lpsi, lam, prob.d, log_px),
        "scale_rows_lse": (lpsi, lam, prob.d, log_px),
        "scale_cols": (lphi, lam, prob.d, log_py),
        "scale_cols_lse": (lphi, lam, prob.d, log_py),
        "coupling_stats": (lphi, lpsi, lam, prob.d),
        "metric_moments": (lphi, lpsi, lam, prob.d),
        "mismatch_dual_value": (w_t, a, log_px, 1.0, d_t),
    }
    return prob, calls


def best_of(fn, args, repeats):
    out = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        out = min(out, time.perf_counter() - t0)
    return out


def bind_family(family):
    for name in KERNEL_NAMES:
        setattr(_kernels, name, family[name])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=7)
    ap.add_argument("--grid", type=int, default=50,
                    help="grid nodes per axis for the large case")
    args = ap.parse_args()

    families = _kernels.kernel_families()
    if families["numba"] is None:
        print("numba unavailable; timing the numpy family alone")

    cases = [("qpsk", args.grid), ("qam16", args.grid)]
    solve_cfg = SolverConfig(max_iters=2000, tol=1e-10)
    active = dict((name, getattr(_kernels, name)) for name in KERNEL_NAMES)

    try:
        for scheme, n_side in cases:
            prob, calls = build_case(scheme, n_side)
            print(f"\n{scheme} {prob.m}x{prob.n} (grid {n_side})")
            print(f"  {'kernel':<22}{'numba ms':>10}{'numpy ms':>10}{'speedup':>9}")
            for name, call in calls.items():
                t_np = best_of(families["numpy"][name], call, args.repeats)
                if families["numba"] is not None:
                    families["numba"][name](*call)  # warm the jit
                    t_nb = best_of(families["numba"][name], call, args.repeats)
                    print(f"  {name:<22}{t_nb * 1e3:>10.3f}{t_np * 1e3:>10.3f}"
                          f"{t_np / t_nb:>9.1f}x")
                else:
                    print(f"  {name:<22}{'-':>10}{t_np * 1e3:>10.3f}{'':>9}")

            for label, family in (("numba", families["numba"]),
                                  ("numpy", families["numpy"])):
                if family is None:
                    continue
                bind_family(family)
                t0 = time.perf_counter()
                report = solve(prob, solve_cfg)
                elapsed = time.perf_counter() - t0
                print(f"  solve [{label}]: {elapsed * 1e3:8.1f} ms, "
                      f"{report.iterations} iterations, {report.status.value}")
    finally:
        bind_family(active)


if __name__ == "__main__":
    main()
