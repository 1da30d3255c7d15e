"""Dynamic team sizing (at most two solves) and trajectory extraction."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .assignment import (After, AssignmentSolution, First, PlanningError, StructurallyInfeasible,
                         Unstaffed, solve)
from .costs import CostKind, QualityClass, build_cost_matrices, first_cost
from .model import DEFAULT_KAPPA, Deliver, Mode, PickUp, Robot, Trajectory, sort_tasks_by_deadline

__all__ = [
    "AllocationPlan", "PoolExhausted", "ResidualInfeasible", "QualityChainMismatch",
    "StructurallyInfeasible", "count_infeasible", "select_reserve_robots", "allocate",
    "compute_trajectories",
]


class PoolExhausted(PlanningError):
    """No unpicked reserve robot has the skills a flagged task needs."""


class ResidualInfeasible(PlanningError):
    """Kappa cells are still selected after the second solve."""


class QualityChainMismatch(PlanningError):
    """A chained task was assigned to a class the executing robot is not in."""


@dataclass
class AllocationPlan:
    trajectories: list
    activated: list
    rested: list
    objective: float
    solve_passes: int
    team: list = field(default_factory=list)
    solution: AssignmentSolution | None = None
    repairs: int = 0

    @property
    def q(self) -> int:
        return len(self.activated)

    @property
    def p(self) -> int:
        return len(self.rested)

    def sequences(self) -> dict:
        return {tr.robot: tr.tasks for tr in self.trajectories}

    def to_dict(self) -> dict:
        return {
            "objective": self.objective,
            "solve_passes": self.solve_passes,
            "activated": list(self.activated),
            "rested": list(self.rested),
            "trajectories": [
                {"robot": tr.robot,
                 "events": [
                     {"event": "pickup", "task": e.task, "location": list(e.location), "time": None}
                     if isinstance(e, PickUp) else
                     {"event": "deliver", "task": e.task, "location": list(e.location), "time": e.deliver_at}
                     for e in tr.events]}
                for tr in self.trajectories
            ],
        }


def count_infeasible(sol: AssignmentSolution, tasks) -> tuple[int, list]:
    """``q`` and the flagged ``(task, required skills)`` pairs."""
    by_id = {t.id: t for t in tasks}
    flagged = [(by_id[t], by_id[t].required) for t in sol.kappa_tasks]
    return sol.kappa_count, flagged


def select_reserve_robots(flagged, pool, dist, now: float = 0.0,
                          kappa: float = DEFAULT_KAPPA) -> list[Robot]:
    """Pick one distinct reserve robot per flagged task, earliest deadline first.

    Candidates must hold the task's skills.  Robots that could reach the task
    in time from their depot are preferred; among those the one whose depot is
    nearest the pick-up wins, ties going to pool order.
    """
    d = dist.distance if hasattr(dist, "distance") else dist
    picked: list[Robot] = []
    taken = set()
    order = _by_deadline(flagged)
    for task, needed in order:
        best = None
        for idx, r in enumerate(pool):
            if r.id in taken or not needed <= r.skills:
                continue
            cand = r.activated()
            on_time = first_cost(cand, task, d, now, kappa).is_finite
            key = (not on_time, d(r.depot, task.pickup), idx)
            if best is None or key < best[0]:
                best = (key, r)
        if best is None:
            raise PoolExhausted([task.id])
        taken.add(best[1].id)
        picked.append(best[1])
    return picked


def _own_class_first(robot: Robot, classes: list[QualityClass], idxs: tuple) -> list[int]:
    ok = [q for q in idxs if classes[q].admits(robot)]
    return sorted(ok, key=lambda q: (classes[q].skills != robot.skills, q))


def compute_trajectories(sol: AssignmentSolution, robots, tasks) -> list[Trajectory]:
    """Follow each robot's first task through its chain of successors."""
    by_id = {t.id: t for t in tasks}
    succ: dict = {}
    for t, a in sol.assignments.items():
        if isinstance(a, After):
            succ.setdefault(a.task, []).append((t, a.classes))
        elif isinstance(a, Unstaffed):
            raise PlanningError([t], f"task {t} has no robot")
    placed = set()
    out = []
    for r in robots:
        events = []
        k = sol.first_of(r.id)
        while k is not None:
            task = by_id[k]
            events += [PickUp(k, task.pickup), Deliver(k, task.delivery, task.delivery_time)]
            placed.add(k)
            nxt = None
            for j, idxs in succ.get(k, []):
                if not sol.classes or not idxs or _own_class_first(r, sol.classes, idxs):
                    nxt = j
                    break
            if nxt is None and succ.get(k):
                raise QualityChainMismatch([j for j, _ in succ[k]],
                                           f"robot {r.id} cannot continue after {k}")
            k = nxt
        out.append(Trajectory(r.id, tuple(events)))
    missing = [t for t in sol.assignments if t not in placed]
    if missing:
        raise QualityChainMismatch(missing, f"tasks {missing} are not reachable from any robot")
    return out


def _broken_links(sol: AssignmentSolution, robots) -> list[tuple]:
    """Chain steps the robot actually executing the predecessor cannot take."""
    succ = {a.task: (t, a.classes) for t, a in sol.assignments.items() if isinstance(a, After)}
    bad = []
    for r in robots:
        k = sol.first_of(r.id)
        while k in succ:
            j, idxs = succ[k]
            if sol.classes and idxs and not _own_class_first(r, sol.classes, idxs):
                bad.append((k, j))
                break
            k = j
    return bad


def _solve_consistent(team, tasks, dist, now, kappa):
    """Solve, then forbid chain links that no executing robot can follow.

    A chain row only promises that some robot of its class could serve both
    tasks; the robot that actually serves the predecessor may belong to a
    different class.  Each offending link is removed and the problem is
    solved again, which terminates because links only disappear.
    """
    pristine = build_cost_matrices(team, tasks, None, dist, now, kappa)
    cm = replace(pristine, sub_kinds=pristine.sub_kinds.copy(), sub_values=pristine.sub_values.copy())
    repairs = 0
    while True:
        sol = solve(cm, unstaffed=True)
        bad = _broken_links(sol, team)
        if not bad:
            return sol, repairs, pristine
        for k, j in bad:
            ki, ji = cm.task_ids.index(k), cm.task_ids.index(j)
            cm.sub_kinds[:, ki, ji] = CostKind.FORBIDDEN
            cm.sub_values[:, ki, ji] = math.inf
        repairs += 1


def _by_deadline(flagged):
    return sorted(flagged, key=lambda f: (f[0].delivery_time, str(f[0].id)))


def _chain_followups(sol, owners, pool, tasks, dist, now, kappa) -> list[tuple]:
    """Extra ``(task id, reserve)`` pairs for chains below flagged tasks.

    The first solve may route a chain through a flagged task using a class
    the reserve picked for it does not belong to.  Walking each such chain,
    the first link the reserve cannot follow flags its successor as well, so
    the second solve still has a kappa-free assignment available.
    """
    succ = {a.task: (t, a.classes) for t, a in sol.assignments.items() if isinstance(a, After)}
    by_id = {t.id: t for t in tasks}
    marked = {t for t, _ in owners}
    taken = {r.id for _, r in owners}
    extra: list[tuple] = []
    queue = list(owners)
    while queue:
        k, robot = queue.pop(0)
        while k in succ:
            j, idxs = succ[k]
            if j in marked:
                break
            if sol.classes and idxs and not _own_class_first(robot, sol.classes, idxs):
                rest = [r for r in pool if r.id not in taken]
                try:
                    (nxt,) = select_reserve_robots([(by_id[j], by_id[j].required)], rest, dist, now, kappa)
                except PoolExhausted:
                    break
                marked.add(j)
                taken.add(nxt.id)
                extra.append((j, nxt))
                queue.append((j, nxt))
                break
            k = j
    return extra


def _patched(first_pass, owners, cm, team) -> AssignmentSolution | None:
    """First-pass plan with each activated reserve taking over its flagged
    task, re-priced on ``cm``.  ``None`` unless it is kappa-free and every
    chain is executable."""
    assignments = dict(first_pass.assignments)
    for t, r in owners:
        assignments[t] = First(r.id)
    return _priced(assignments, cm, team)


def _priced(assignments, cm, team) -> AssignmentSolution | None:
    ri = {r: i for i, r in enumerate(cm.robot_ids)}
    ti = {t: j for j, t in enumerate(cm.task_ids)}
    total = 0.0
    out = {}
    for t, a in assignments.items():
        j = ti[t]
        if isinstance(a, First):
            if cm.first_kinds[ri[a.robot], j] != CostKind.FINITE:
                return None
            total += float(cm.first_values[ri[a.robot], j])
            out[t] = a
        elif isinstance(a, After):
            k = ti[a.task]
            ok = tuple(q for q in range(len(cm.classes)) if cm.sub_kinds[q, k, j] == CostKind.FINITE)
            if not ok:
                return None
            total += min(float(cm.sub_values[q, k, j]) for q in ok)
            out[t] = After(a.task, ok)
        else:
            return None
    firsts = [a.robot for a in out.values() if isinstance(a, First)]
    preds = [a.task for a in out.values() if isinstance(a, After)]
    if len(set(firsts)) != len(firsts) or len(set(preds)) != len(preds):
        return None
    sol = AssignmentSolution(out, [], total, 0, [], list(cm.classes))
    return None if _broken_links(sol, team) else sol


def allocate(fleet, reserve, tasks, dist, now: float = 0.0,
             kappa: float = DEFAULT_KAPPA) -> AllocationPlan:
    """Solve, count kappa selections, activate that many reserves, solve once more."""
    tasks = sort_tasks_by_deadline(tasks)
    team = [r if r.mode is Mode.ACTIVE else r.activated() for r in fleet]
    pool = [r for r in reserve]
    activated: list = []
    if not tasks:
        return AllocationPlan([Trajectory(r.id) for r in team], [], [r.id for r in team], 0.0, 0, team)

    def take(robots):
        for r in robots:
            activated.append(r.id)
            team.append(r.activated())
        ids = {r.id for r in robots}
        pool[:] = [r for r in pool if r.id not in ids]

    if not team:
        # a chain needs a head: seed with one robot for the earliest task
        t0 = tasks[0]
        take(select_reserve_robots([(t0, t0.required)], pool, dist, now, kappa))

    passes = 1
    sol, repairs, _ = _solve_consistent(team, tasks, dist, now, kappa)
    q, flagged = count_infeasible(sol, tasks)
    if q > 0:
        picks = select_reserve_robots(flagged, pool, dist, now, kappa)
        owners = [(t.id, r) for (t, _), r in zip(_by_deadline(flagged), picks)]
        owners += _chain_followups(sol, owners, pool, tasks, dist, now, kappa)
        take([r for _, r in owners])
        passes = 2
        first_pass = sol
        sol, more, cm = _solve_consistent(team, tasks, dist, now, kappa)
        repairs += more
        if sol.kappa_count > 0:
            # link removal can discard the plan the first pass already implies
            sol = _patched(first_pass, owners, cm, team) or sol
        if sol.kappa_count > 0:
            raise ResidualInfeasible(sol.kappa_tasks)
    trajectories = compute_trajectories(sol, team, tasks)
    rested = [tr.robot for tr in trajectories if not tr.events]
    return AllocationPlan(trajectories, activated, rested, sol.objective, passes, team, sol, repairs)


def plan_is_executable(plan: AllocationPlan, tasks, dist, now: float = 0.0) -> bool:
    """Replay every trajectory at full speed and check each delivery is on time."""
    d = dist.distance if hasattr(dist, "distance") else dist
    by_id = {t.id: t for t in tasks}
    robots = {r.id: r for r in plan.team}
    for tr in plan.trajectories:
        r = robots[tr.robot]
        pos, clock = r.position, max(now, r.ready_at)
        for task_id in tr.tasks:
            t = by_id[task_id]
            clock += (d(pos, t.pickup) + d(t.pickup, t.delivery)) / r.max_speed + t.load_time
            if clock > t.delivery_time + 1e-9 * max(1.0, abs(t.delivery_time)):
                return False
            clock = t.delivery_time + t.unload_time
            pos = t.delivery
            if not math.isfinite(clock):
                return False
    return True
