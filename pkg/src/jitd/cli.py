"""Command-line front end: ``jitd solve|simulate|ruf|bench``.

Exit codes: 0 success, 1 unreadable or invalid input, 2 planning infeasible.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import _accel
from .assignment import PlanningError, solve, solve_lsap, stack
from .costs import build_cost_matrices
from .dream import allocate
from .model import Mode, Robot, Scenario, ScenarioError, Task, load_scenario, validate_scenario
from .simulator import compute_ruf, run
from .worldmap import EuclideanMap, MapParseError

EXIT_OK, EXIT_PARSE, EXIT_INFEASIBLE = 0, 1, 2


class InputError(Exception):
    pass


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("JITD_THREADS", "1")))
    except ValueError:
        return 1


def _load(path) -> Scenario:
    try:
        sc = load_scenario(path)
    except (ScenarioError, MapParseError) as exc:
        raise InputError(f"{path}: {exc}") from None
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror or exc}") from None
    problems = validate_scenario(sc)
    if problems:
        raise InputError(f"{path}: " + "; ".join(problems))
    return sc


def _emit(text: str, out) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# --------------------------------------------------------------------------
# solve


def cmd_solve(args) -> int:
    sc = _load(args.scenario)
    plan = allocate(sc.robots, sc.reserve, sc.tasks, sc.map, 0.0, sc.kappa)
    if args.format == "json":
        _emit(json.dumps(plan.to_dict(), indent=2) + "\n", args.out)
        return EXIT_OK
    lines = []
    for tr in plan.trajectories:
        lines.append(f"{tr.robot}: " + (" ".join(map(str, tr.tasks)) if tr.tasks else "-"))
    lines.append(f"objective: {plan.objective:.4f}")
    lines.append(f"activated: [{', '.join(map(str, plan.activated))}] passes: {plan.solve_passes}")
    lines.append(f"rested: [{', '.join(map(str, plan.rested))}]")
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


# --------------------------------------------------------------------------
# simulate


def cmd_simulate(args) -> int:
    sc = _load(args.scenario)
    trace = run(sc, seed=args.seed, tick=args.tick)
    _emit(trace.to_json() + "\n" if args.format == "json" else trace.to_csv(), args.out)
    return EXIT_OK


# --------------------------------------------------------------------------
# ruf


def reference_scenario(n_reserve: int = 8, speed: float = 1.0) -> Scenario:
    """10 m square floor with a row of charging depots along one wall."""
    world = EuclideanMap(0.0, 0.0, 10.0, 10.0)
    step = 8.0 / max(1, n_reserve - 1)
    reserve = [Robot(f"R{i}", (1.0 + i * step, 0.0), speed, mode=Mode.REST) for i in range(n_reserve)]
    return Scenario(world, [], reserve, [], kappa=1000.0)


def _ruf_one(job):
    rate, seed, horizon, tick, path = job
    sc = reference_scenario() if path is None else load_scenario(path)
    trace = run(sc, [], seed=seed, tick=tick, arrivals={"rate": rate, "horizon": horizon})
    return rate, seed, compute_ruf(trace), trace.max_team


def ruf_study(rates, seeds, horizon=1000.0, tick=0.1, scenario=None) -> list[dict]:
    jobs = [(r, s, horizon, tick, scenario) for r in rates for s in seeds]
    workers = min(_threads(), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            results = list(ex.map(_ruf_one, jobs))
    else:
        results = [_ruf_one(j) for j in jobs]
    rows = []
    for rate in rates:
        mine = [r for r in results if r[0] == rate]
        sizes = sorted({n for _, _, ruf, _ in mine for n in ruf})
        mean = {n: float(np.mean([ruf.get(n, 0.0) for _, _, ruf, _ in mine])) for n in sizes}
        rows.append({"rate": rate, "seeds": len(mine),
                     "mean_max_team": float(np.mean([m for *_, m in mine])), "ruf": mean})
    return rows


def cmd_ruf(args) -> int:
    if args.scenario:
        _load(args.scenario)
    seeds = range(args.seed, args.seed + args.reps)
    rows = ruf_study(args.rates, seeds, args.horizon, args.tick, args.scenario)
    if args.format == "json":
        doc = [{**r, "ruf": {str(k): v for k, v in r["ruf"].items()}} for r in rows]
        _emit(json.dumps(doc, indent=2) + "\n", args.out)
        return EXIT_OK
    top = max((max(r["ruf"]) for r in rows), default=0)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["rate", "seeds", "mean_max_team"] + [f"ruf_{n}" for n in range(top + 1)])
    for r in rows:
        w.writerow([r["rate"], r["seeds"], f"{r['mean_max_team']:.3f}"]
                   + [f"{r['ruf'].get(n, 0.0):.4f}" for n in range(top + 1)])
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


# --------------------------------------------------------------------------
# bench


def bench_instance(m: int, rng: np.random.Generator, side: float = 10.0, speed: float = 1.0):
    """Random homogeneous instance with ``max(2, m // 10)`` robots."""
    world = EuclideanMap(0.0, 0.0, side, side)
    n = max(2, m // 10)
    robots = [Robot(i, world.sample_free(rng), speed) for i in range(n)]
    # deadlines spread so that roughly n tasks overlap at any time
    span = 30.0 * m / n
    due = np.sort(rng.uniform(30.0, 30.0 + span, size=m))
    tasks = [Task(j, world.sample_free(rng), world.sample_free(rng), 1.0, 1.0, float(due[j]))
             for j in range(m)]
    return world, robots, tasks


def bench(sizes, reps: int = 5, seed: int = 0) -> list[dict]:
    rng = np.random.Generator(np.random.PCG64(seed))
    w, r, t = bench_instance(4, rng)
    solve(build_cost_matrices(r, t, None, w), unstaffed=True)  # compile outside the timings
    rows = []
    for m in sizes:
        builds, solves = [], []
        for _ in range(reps):
            world, robots, tasks = bench_instance(m, rng)
            t0 = time.perf_counter()
            sm = stack(build_cost_matrices(robots, tasks, None, world), unstaffed=True)
            t1 = time.perf_counter()
            solve_lsap(sm)
            t2 = time.perf_counter()
            builds.append(t1 - t0)
            solves.append(t2 - t1)
        rows.append({"tasks": m, "robots": max(2, m // 10), "reps": reps,
                     "build_ms": 1e3 * float(np.mean(builds)), "solve_ms": 1e3 * float(np.mean(solves))})
    return rows


def cmd_bench(args) -> int:
    backends = ["numba", "numpy"] if args.backend == "both" else [args.backend]
    out = []
    for b in backends:
        with _accel.use_backend(b):
            for row in bench(args.sizes, args.reps, args.seed):
                out.append({"backend": b, **row})
    if args.format == "json":
        _emit(json.dumps(out, indent=2) + "\n", args.out)
        return EXIT_OK
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["backend", "tasks", "robots", "reps", "build_ms", "solve_ms"])
    for r in out:
        w.writerow([r["backend"], r["tasks"], r["robots"], r["reps"],
                    f"{r['build_ms']:.4f}", f"{r['solve_ms']:.4f}"])
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


# --------------------------------------------------------------------------


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _int_list(text):
    return [_positive_int(x) for x in text.split(",") if x]


def _float_list(text):
    vals = [float(x) for x in text.split(",") if x]
    if any(v <= 0 for v in vals):
        raise argparse.ArgumentTypeError("rates must be positive")
    return vals


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="jitd", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="write output here instead of stdout")
    common.add_argument("--seed", type=int, default=0)

    s = sub.add_parser("solve", parents=[common], help="plan a scenario once")
    s.add_argument("--scenario", required=True)
    s.add_argument("--format", choices=["text", "json"], default="text")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("simulate", parents=[common], help="execute a scenario in simulation")
    s.add_argument("--scenario", required=True)
    s.add_argument("--tick", type=float, default=0.1)
    s.add_argument("--format", choices=["csv", "json"], default="csv")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("ruf", parents=[common], help="resource utilisation under Poisson arrivals")
    s.add_argument("--scenario", help="fleet and map (default: built-in 10 m floor, 8 reserves)")
    s.add_argument("--rates", type=_float_list, default=[0.02, 0.05, 0.1])
    s.add_argument("--reps", type=_positive_int, default=20, help="seeds per rate")
    s.add_argument("--horizon", type=float, default=1000.0)
    s.add_argument("--tick", type=float, default=0.1)
    s.add_argument("--format", choices=["csv", "json"], default="csv")
    s.set_defaults(func=cmd_ruf)

    s = sub.add_parser("bench", parents=[common], help="time cost construction and solving")
    s.add_argument("--sizes", type=_int_list, default=[10, 20, 30, 40, 50, 60, 70, 80, 90, 100, 200, 500])
    s.add_argument("--reps", type=_positive_int, default=5)
    s.add_argument("--backend", choices=["numba", "numpy", "both"], default=_accel.backend_name())
    s.add_argument("--format", choices=["csv", "json"], default="csv")
    s.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "tick", 1.0) <= 0:
        print("error: --tick must be positive", file=sys.stderr)
        return EXIT_PARSE
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except PlanningError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
