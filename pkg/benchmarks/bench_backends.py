"""Compiled versus numpy timings for the three hot kernels.

    python3 benchmarks/bench_backends.py [--sizes 50,100,200] [--reps 5]

Prints one CSV row per (kernel, size): mean milliseconds for the numba build,
the numpy fallback, and their ratio.  The first compiled call of each kernel
happens before timing starts.
"""
import argparse
import csv
import sys
import time

import numpy as np

from jitd.assignment import _weights, lsap_kernel, stack
from jitd.cli import bench_instance
from jitd.costs import build_cost_matrices, distance_tables, fill_costs
from jitd.worldmap import _DC, _DR, grid_dijkstra


def _mean_ms(fn, args, reps):
    fn(*args)
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return 1e3 * float(np.mean(times))


def lsap_args(m, rng):
    world, robots, tasks = bench_instance(m, rng)
    sm = stack(build_cost_matrices(robots, tasks, None, world), unstaffed=True)
    return (_weights(sm)[0],)


def fill_args(m, rng):
    world, robots, tasks = bench_instance(m, rng)
    d_rp, d_pd, d_dp = distance_tables(robots, tasks, world)
    n = len(robots)
    return (d_rp, d_pd, d_dp, np.ones(n), np.zeros(n), np.ones((n, m), bool),
            np.array([t.delivery_time for t in tasks]), np.ones(m), np.ones(m),
            np.ones(1), np.ones((1, m), bool), 1000.0, 1e-9)


def dijkstra_args(m, rng):
    side = max(8, int(np.sqrt(m) * 6))
    occ = rng.random(side * side) < 0.2
    occ[0] = False
    return (occ, side, side, 0, _DR, _DC)


KERNELS = {
    "lsap": (lsap_kernel, lsap_args),
    "fill_costs": (fill_costs, fill_args),
    "grid_dijkstra": (grid_dijkstra, dijkstra_args),
}


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sizes", default="50,100,200")
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)
    rng = np.random.Generator(np.random.PCG64(args.seed))
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["kernel", "size", "numba_ms", "numpy_ms", "speedup"])
    for name, (k, make) in KERNELS.items():
        for m in (int(s) for s in args.sizes.split(",")):
            data = make(m, rng)
            fast = _mean_ms(k.jit, data, args.reps)
            slow = _mean_ms(k.fallback, data, args.reps)
            w.writerow([name, m, f"{fast:.4f}", f"{slow:.4f}", f"{slow / fast:.1f}"])


if __name__ == "__main__":
    main()
