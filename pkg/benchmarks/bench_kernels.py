#!/usr/bin/env python3
"""Benchmark the coalition-evaluation kernels: numba @njit vs pure numpy.

Times the two hot kernels on a desk-scale problem (batched coalition
evaluations, the inner loop of the association game) and one full optimizer
run per path.  The full-run comparison re-executes this script in a
subprocess with MECSIM_NO_NUMBA=1 so the numpy binding is picked up at
import time, mirroring how the env flag is used in production.

Usage: python benchmarks/bench_kernels.py [--runs 3] [--inner-only]
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from mecsim import (Catalog, Counts, SystemParams, build_costs, build_demand,
                    build_rate_table, demand_rng, generate_scenario, run_amnd)
from mecsim import _kernels


def build_problem(seed=3, n_hrd=20, n_csd=20):
    scenario = generate_scenario(SystemParams(seed=seed),
                                 Counts(n_hrd=n_hrd, n_csd=n_csd))
    demand = build_demand(Catalog.build(20, 0.6), scenario.n_sbs, n_hrd,
                          n_csd, demand_rng(seed, 0.6),
                          storage_bytes=28e6, cache_policy="sampled")
    table = build_rate_table(scenario)
    return scenario, demand, build_costs(scenario, demand, table)


def bench_kernels(costs, n_evals=20000, seed=5):
    """Time n_evals random coalition evaluations for each available path."""
    rng = np.random.default_rng(seed)
    hrd_sets = [np.sort(rng.choice(costs.n_hrd, size=rng.integers(1, 5),
                                   replace=False)).astype(np.int64)
                for _ in range(256)]
    csd_sets = [np.sort(rng.choice(costs.n_csd, size=rng.integers(1, 5),
                                   replace=False)).astype(np.int64)
                for _ in range(256)]
    sbs = rng.integers(0, costs.n_sbs, size=256)

    paths = {}
    if _kernels.USING_NUMBA:
        paths["numba"] = (_kernels.hrd_value_numba, _kernels.csd_value_numba)
    paths["numpy"] = (_kernels.hrd_value_numpy, _kernels.csd_value_numpy)

    results = {}
    for name, (hrd_fn, csd_fn) in paths.items():
        # warm (JIT compile / cache fill)
        hrd_fn(0, hrd_sets[0], costs.pair_off, costs.pair_cnt, costs.sqrt_dl,
               costs.sqrt_bh, costs.cached, costs.eta_min)
        csd_fn(0, csd_sets[0], costs.sqrt_ul, costs.sqrt_ed,
               costs.task_bytes, costs.spare_bytes)
        t0 = time.perf_counter()
        acc = 0.0
        for i in range(n_evals):
            j = i & 255
            v, _ = hrd_fn(int(sbs[j]), hrd_sets[j], costs.pair_off,
                          costs.pair_cnt, costs.sqrt_dl, costs.sqrt_bh,
                          costs.cached, costs.eta_min)
            acc += v
            v, _ = csd_fn(int(sbs[j]), csd_sets[j], costs.sqrt_ul,
                          costs.sqrt_ed, costs.task_bytes, costs.spare_bytes)
            acc += v
        dt = time.perf_counter() - t0
        results[name] = dt / n_evals * 1e6
        print(f"  {name:>6}: {results[name]:8.2f} us per eval pair "
              f"(checksum {acc:.3e})")
    if "numba" in results:
        print(f"  speedup: {results['numpy'] / results['numba']:.1f}x")
    return results


def bench_full_run(runs=3):
    scenario, demand, _ = build_problem()
    run_amnd(scenario, demand)   # warm
    t0 = time.perf_counter()
    for _ in range(runs):
        run_amnd(scenario, demand)
    dt = (time.perf_counter() - t0) / runs
    label = "numba" if _kernels.USING_NUMBA else "numpy"
    print(f"  full optimizer run ({label}): {dt * 1e3:.1f} ms")
    return dt


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--runs", type=int, default=3)
    ap.add_argument("--inner-only", action="store_true")
    ap.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()

    label = "numba" if _kernels.USING_NUMBA else "numpy (MECSIM_NO_NUMBA)"
    print(f"active kernel path: {label}")
    _, _, costs = build_problem()
    print("coalition evaluation kernels:")
    bench_kernels(costs)
    if args.inner_only:
        return
    print("full optimizer runs:")
    bench_full_run(args.runs)
    if _kernels.USING_NUMBA and not args.child:
        print("re-running full optimizer with the numpy fallback path:")
        sys.stdout.flush()
        env = dict(os.environ, MECSIM_NO_NUMBA="1")
        subprocess.run([sys.executable, __file__, "--child",
                        "--runs", str(args.runs)], env=env, check=True)


if __name__ == "__main__":
    main()
