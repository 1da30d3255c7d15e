"""Acceptance checks, one per criterion, each printing a PASS or FAIL line.

Run ``pytest tests/test_acceptance.py -s`` (or execute this file) to see the
report.  A criterion that cannot be met as written is kept as an expected
failure so the rest of the suite stays green while the report stays honest.
"""
import math
import statistics
import time

import numpy as np
import pytest

from jitd.assignment import check_structure, decode, plan_cost, solve, solve_lsap, solve_rows, stack
from jitd.cli import bench, ruf_study
from jitd.costs import CostKind, QualityClass, build_cost_matrices, load_cost_fixture, subsequent_cost
from jitd.dream import allocate, compute_trajectories, plan_is_executable
from jitd.model import Robot, Task, load_scenario
from jitd.simulator import run
from jitd.worldmap import EuclideanMap, TableMap

import test_costs
import test_dream
import test_simulator
from oracles import brute_force_assignment, engineered_two_pass

GAZEBO_BOX = 46.30
STATED = {"R0": ["T1"], "R1": ["T3"], "R2": ["T2", "T5", "T6"], "R3": ["T0", "T4"]}


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
    return emit


def _hardware_pipeline(cm, sc):
    sol = decode(solve_rows(stack(cm)), stack(cm))
    return sol, compute_trajectories(sol, sc.robots, sc.tasks)


def test_criterion_1_hardware_oracle(report, data_dir):
    cm = load_cost_fixture(data_dir / "hardware_costs.json")
    sc = load_scenario(data_dir / "hardware_scenario.json")
    _hardware_pipeline(cm, sc)  # warm up compiled kernels
    times = []
    for _ in range(7):
        t0 = time.perf_counter()
        sol, trs = _hardware_pipeline(cm, sc)
        times.append(time.perf_counter() - t0)
    ms = 1e3 * statistics.median(times)
    seqs = {tr.robot: tr.tasks for tr in trs}
    ok = (seqs == {"R1": ["T1", "T3", "T5"], "R2": ["T2", "T4"]}
          and abs(sol.objective - 13.5279) <= 1e-9 and ms < 10)
    report(1, ok, f"sequences {seqs}, objective {sol.objective:.4f}, median {ms:.2f} ms")
    assert ok


def test_criterion_2_feasibility_rule(report):
    table = TableMap.from_rows([[[0, 0], [1, 0], 0.48], [[1, 0], [2, 0], 2.05786]])
    t1 = Task("T1", (9, 9), (0, 0), delivery_time=35)
    t2 = Task("T2", (1, 0), (2, 0), delivery_time=50)
    q = QualityClass(frozenset(), 0.12)
    forward = subsequent_cost(t1, t2, q, table)
    backward = subsequent_cost(t2, t1, q, table)
    robots = [Robot("R1", (0, 0), 0.12)]
    tasks = [Task(f"T{j}", (j, 0), (j, 1), delivery_time=35 + 15 * j) for j in range(5)]
    cm = build_cost_matrices(robots, tasks, None, EuclideanMap(0, 0, 10, 10))
    lower = np.tril(np.ones((4, 5), bool))
    tri = bool((cm.sub_kinds[0][lower] == CostKind.FORBIDDEN).all())
    ok = forward.kind is CostKind.KAPPA and backward.kind is CostKind.FORBIDDEN and tri
    report(2, ok, f"T1->T2 {forward}, T2->T1 {backward}, lower triangle forbidden: {tri}")
    assert ok


def _gazebo(data_dir):
    cm = load_cost_fixture(data_dir / "gazebo_costs.json")
    return cm, solve(cm), plan_cost(cm, STATED)


def test_criterion_3_gazebo_bound(report, data_dir):
    cm, sol, stated = _gazebo(data_dir)
    complete = check_structure(sol, cm.robot_ids, cm.task_ids) == [] and sol.kappa_count == 0
    matches = math.isclose(stated, GAZEBO_BOX, abs_tol=1e-9)
    report(3, complete and sol.objective <= GAZEBO_BOX and matches,
           f"solver {sol.objective:.2f} <= {GAZEBO_BOX} complete={complete}; "
           f"stated trajectories feasible, cost {stated:.2f} (boxed total {GAZEBO_BOX})")
    assert complete and sol.objective <= GAZEBO_BOX + 1e-9


@pytest.mark.xfail(strict=True, reason="the stated trajectories cost 41.96 on the fixture; "
                                       "46.30 is the sum of a different boxed selection")
def test_criterion_3_stated_trajectories_cost_box_total(data_dir):
    _, _, stated = _gazebo(data_dir)
    assert stated == pytest.approx(GAZEBO_BOX, abs=1e-9)


def _small_instance(seed):
    rng = np.random.default_rng(seed)
    m, n = int(rng.integers(1, 7)), int(rng.integers(1, 4))
    skills = [frozenset(), frozenset({"s"})]
    robots = [Robot(f"R{i}", tuple(rng.uniform(0, 10, 2)), 1.0, skills[int(rng.integers(2))])
              for i in range(n)]
    tasks = [Task(f"T{j}", tuple(rng.uniform(0, 10, 2)), tuple(rng.uniform(0, 10, 2)),
                  float(rng.uniform(0, 2)), float(rng.uniform(0, 2)), float(rng.uniform(10, 60)),
                  skills[1] if rng.random() < 0.3 else skills[0]) for j in range(m)]
    return robots, tasks


def test_criterion_4_brute_force(report):
    t0 = time.perf_counter()
    checked = agree = 0
    for seed in range(1000, 1150):
        robots, tasks = _small_instance(seed)
        cm = build_cost_matrices(robots, tasks, None, EuclideanMap(0, 0, 10, 10))
        assert len(cm.classes) <= 2
        best = brute_force_assignment(cm)
        if not math.isfinite(best):
            continue
        checked += 1
        agree += math.isclose(solve(cm).objective, best, abs_tol=1e-9)
    secs = time.perf_counter() - t0
    ok = checked >= 100 and agree == checked and secs < 30
    report(4, ok, f"{agree}/{checked} instances optimal in {secs:.1f} s")
    assert ok


def test_criterion_5_two_pass(report):
    results = []
    for seed in range(60):
        q = 1 + seed % 3
        world, fleet, reserve, tasks = engineered_two_pass(seed, q)
        first = solve(build_cost_matrices(fleet, tasks, None, world), unstaffed=True)
        plan = allocate(fleet, reserve, tasks, world)
        results.append((first.kappa_count == q, plan.solve_passes <= 2,
                        plan.solution.kappa_count == 0, plan_is_executable(plan, tasks, world)))
    good = sum(all(r) for r in results)
    ok = good == len(results) >= 50
    report(5, ok, f"{good}/{len(results)} instances (q in 1..3) finished in <= 2 passes with no kappa")
    assert ok


def test_criterion_6_table1_simulation(report, data_dir):
    sc = load_scenario(data_dir / "table1_scenario.json")
    a, b = run(sc, seed=7, tick=0.1), run(sc, seed=7, tick=0.1)
    worst = max(abs(v) for v in a.lateness.values())
    ok = (len(a.delivered) == 7 and worst <= 0.1 and a.max_team <= 4
          and a.to_csv() == b.to_csv())
    report(6, ok, f"{len(a.delivered)}/7 delivered, worst |lateness| {worst:.3f} s, "
                  f"team {a.max_team}, deterministic {a.to_csv() == b.to_csv()}")
    assert ok


def test_criterion_7_scaling(report):
    rows = bench([10, 20, 30, 40, 50, 60, 70, 80, 90, 100, 200, 500], reps=40, seed=0)
    means = {r["tasks"]: r["solve_ms"] for r in rows}
    seq = [means[m] for m in sorted(means)]
    mono = all(x < y for x, y in zip(seq, seq[1:]))
    ratio = means[200] / means[100]
    ok = mono and means[500] < 2000 and 3 <= ratio <= 16
    report(7, ok, f"monotone {mono}, M=500 {means[500]:.1f} ms, ratio 200/100 {ratio:.2f}")
    assert ok


def test_criterion_8_ruf(report):
    rows = ruf_study([0.02, 0.05, 0.1], range(20), horizon=1000.0)
    sums = [sum(r["ruf"].values()) for r in rows]
    means = [r["mean_max_team"] for r in rows]
    ok = all(abs(s - 100) <= 0.1 for s in sums) and means == sorted(means)
    report(8, ok, f"RUF sums {[round(s, 3) for s in sums]}, mean max team {means}")
    assert ok


PROPERTIES = {
    "sentinel monotonicity": test_costs.test_tightening_never_creates_feasibility,
    "rebasing invariance": test_costs.test_rebasing_leaves_costs_unchanged,
    "homogeneous collapse": test_costs.test_homogeneous_blocks_collapse,
    "trajectory partition": test_dream.test_partition_order_and_execution,
    "simulator determinism": test_simulator.test_conservation_and_determinism,
}


def test_criterion_9_property_suites(report):
    failed = []
    for name, prop in PROPERTIES.items():
        try:
            prop()
        except Exception as exc:  # report every failing suite, not just the first
            failed.append(f"{name}: {type(exc).__name__}")
    report(9, not failed, f"{len(PROPERTIES) - len(failed)}/{len(PROPERTIES)} suites hold"
           + (f" ({'; '.join(failed)})" if failed else ""))
    assert not failed


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-s"]))
