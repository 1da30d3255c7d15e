import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from jitd import _accel
from jitd.assignment import (After, First, StackedMatrix, StructurallyInfeasible, check_structure,
                             lsap_kernel, plan_cost, solve, solve_lsap, stack)
from jitd.costs import CostKind, RobotRow, build_cost_matrices, load_cost_fixture
from jitd.model import Robot, Task
from jitd.worldmap import EuclideanMap

from oracles import brute_force_assignment, brute_force_small_lsap

E = EuclideanMap(0, 0, 10, 10)


def matrix(values, kappa=1000.0):
    values = np.asarray(values, dtype=float)
    kinds = np.where(np.isinf(values), CostKind.FORBIDDEN, CostKind.FINITE).astype(np.int8)
    meta = [RobotRow(i) for i in range(values.shape[0])]
    return StackedMatrix(values, kinds, meta, list(range(values.shape[1])), kappa)


def test_hardware_boxed_entries(data_dir):
    cm = load_cost_fixture(data_dir / "hardware_costs.json")
    sol = solve(cm)
    assert sol.objective == pytest.approx(13.5279, abs=1e-9)
    a = sol.assignments
    assert a["T1"] == First("R1") and a["T2"] == First("R2")
    assert a["T3"].task == "T1" and a["T5"].task == "T3" and a["T4"].task == "T2"
    assert sol.kappa_count == 0
    assert check_structure(sol, cm.robot_ids, cm.task_ids) == []


def test_gazebo_is_complete_and_within_bound(data_dir):
    cm = load_cost_fixture(data_dir / "gazebo_costs.json")
    sol = solve(cm)
    assert check_structure(sol, cm.robot_ids, cm.task_ids) == []
    assert sol.kappa_count == 0
    assert sol.objective <= 46.30 + 1e-9
    assert sum(isinstance(x, First) for x in sol.assignments.values()) == 4
    assert sum(isinstance(x, After) for x in sol.assignments.values()) == 3


def test_zero_diagonal():
    sol = solve_lsap(matrix([[0, 1, 1], [1, 0, 1], [1, 1, 0]]))
    assert sol.rows == [0, 1, 2] and sol.objective == 0


def test_single_kappa_cell():
    sm = StackedMatrix(np.array([[5.0]]), np.array([[CostKind.KAPPA]], np.int8), [RobotRow("r")], ["t"], 5.0)
    sol = solve_lsap(sm)
    assert sol.kappa_count == 1 and sol.kappa_tasks == ["t"] and sol.objective == 5.0


def test_all_forbidden_column():
    with pytest.raises(StructurallyInfeasible) as err:
        solve_lsap(matrix([[1, math.inf], [2, math.inf]]))
    assert err.value.task_ids == [1]


def test_hall_violation_is_reported():
    with pytest.raises(StructurallyInfeasible):
        solve_lsap(matrix([[1, 1, math.inf], [math.inf, math.inf, 1], [math.inf, math.inf, 1]]))


def test_kappa_count_minimised_before_distance():
    # one kappa beats two expensive finite cells only if kappa is cheaper; here
    # kappa is small but still must be avoided when a kappa-free matching exists
    sm = StackedMatrix(np.array([[1.0, 90.0], [80.0, 10.0]]),
                       np.array([[CostKind.KAPPA, 0], [0, 0]], np.int8),
                       [RobotRow(0), RobotRow(1)], [0, 1], 1.0)
    sol = solve_lsap(sm)
    assert sol.kappa_count == 0 and sol.rows == [1, 0]


@pytest.mark.parametrize("backend", ["numba", "numpy"])
@pytest.mark.parametrize("seed", range(20))
def test_kernel_matches_permutation_oracle(backend, seed):
    rng = np.random.default_rng(seed)
    rows, cols = rng.integers(2, 6), 0
    cols = int(rng.integers(1, rows + 1))
    v = rng.uniform(0, 10, (rows, cols))
    v[rng.random((rows, cols)) < 0.2] = math.inf
    best, _ = brute_force_small_lsap(v)
    with _accel.use_backend(backend):
        col, _, _, failed = lsap_kernel(np.ascontiguousarray(v.T))
    if not math.isfinite(best):
        assert failed >= 0
    else:
        assert failed == -1
        assert sum(v[r, c] for c, r in enumerate(col)) == pytest.approx(best)


@given(st.integers(0, 2**31))
def test_ties_resolve_to_lexicographically_smallest_rows(seed):
    rng = np.random.default_rng(seed)
    rows = int(rng.integers(2, 6))
    cols = int(rng.integers(1, rows + 1))
    v = rng.integers(0, 3, (rows, cols)).astype(float)
    best = min(sum(v[r, c] for c, r in enumerate(p)) for p in itertools.permutations(range(rows), cols))
    optimal = [list(p) for p in itertools.permutations(range(rows), cols)
               if sum(v[r, c] for c, r in enumerate(p)) == best]
    assert solve_lsap(matrix(v)).rows == min(optimal)


def test_equal_costs_pick_first_rows():
    assert solve_lsap(matrix(np.ones((5, 3)))).rows == [0, 1, 2]


def random_instance(seed, m_max=6, n_max=3):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(1, m_max + 1))
    n = int(rng.integers(1, n_max + 1))
    skill_sets = [frozenset(), frozenset({"s"})]
    robots = [Robot(f"R{i}", tuple(rng.uniform(0, 10, 2)), float(rng.uniform(0.5, 1.5)),
                    skill_sets[int(rng.integers(2))]) for i in range(n)]
    tasks = [Task(f"T{j}", tuple(rng.uniform(0, 10, 2)), tuple(rng.uniform(0, 10, 2)),
                  float(rng.uniform(0, 2)), float(rng.uniform(0, 2)), float(rng.uniform(10, 60)),
                  skill_sets[int(rng.integers(2))] if rng.random() < 0.3 else frozenset())
             for j in range(m)]
    return robots, tasks


@pytest.mark.parametrize("seed", range(40))
def test_matches_structure_enumeration(seed):
    robots, tasks = random_instance(seed)
    cm = build_cost_matrices(robots, tasks, None, E)
    best = brute_force_assignment(cm)
    if not math.isfinite(best):
        with pytest.raises(StructurallyInfeasible):
            solve(cm)
        return
    sol = solve(cm)
    assert sol.objective == pytest.approx(best, abs=1e-9)
    assert check_structure(sol, cm.robot_ids, cm.task_ids) == []


@given(st.integers(0, 2**31), st.floats(0.1, 50))
def test_scaling_keeps_selection(seed, factor):
    robots, tasks = random_instance(seed % 10_000)
    cm = build_cost_matrices(robots, tasks, None, E)
    try:
        base = solve(cm)
    except StructurallyInfeasible:
        return
    sm = stack(cm)
    scaled = StackedMatrix(np.where(sm.kinds == CostKind.FINITE, sm.values * factor, sm.values),
                           sm.kinds, sm.row_meta, sm.task_ids, sm.kappa * factor, cm)
    assert solve_lsap(scaled).rows == base.rows


def test_backends_select_the_same_rows():
    for seed in range(15):
        robots, tasks = random_instance(seed, m_max=12, n_max=4)
        cm = build_cost_matrices(robots, tasks, None, E)
        try:
            with _accel.use_backend("numba"):
                a = solve(cm, unstaffed=True).rows
            with _accel.use_backend("numpy"):
                b = solve(cm, unstaffed=True).rows
        except StructurallyInfeasible:
            continue
        assert a == b


def test_solve_is_deterministic(data_dir):
    cm = load_cost_fixture(data_dir / "gazebo_costs.json")
    assert solve(cm).rows == solve(cm).rows


def test_plan_cost_checker(data_dir):
    cm = load_cost_fixture(data_dir / "hardware_costs.json")
    assert plan_cost(cm, {"R1": ["T1", "T3", "T5"], "R2": ["T2", "T4"]}) == pytest.approx(13.5279)
    with pytest.raises(ValueError):
        plan_cost(cm, {"R1": ["T1", "T2"], "R2": ["T3", "T4", "T5"]})
    with pytest.raises(ValueError):
        plan_cost(cm, {"R1": ["T1"], "R2": ["T2"]})
