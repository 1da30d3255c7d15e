"""Rectangular linear-sum assignment over the stacked cost matrix.

Every task column is matched to exactly one row: a robot row (the task is
that robot's first job) or a chain row (the task follows another task's
delivery).  Forbidden cells are non-edges.  Kappa cells are real edges; the
solver minimises the number of selected Kappa cells first and the travelled
distance second, which coincides with valuing them at kappa whenever kappa
exceeds every finite assignment total.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from ._accel import kernel
from .costs import ChainRow, CostKind, CostMatrices, RobotRow


class PlanningError(RuntimeError):
    """Base for planning failures; ``task_ids`` names the tasks involved."""

    def __init__(self, task_ids, message=""):
        self.task_ids = list(task_ids)
        super().__init__(message or f"{type(self).__name__}: tasks {self.task_ids}")


class StructurallyInfeasible(PlanningError):
    """No complete assignment exists that avoids Forbidden cells."""


@dataclass(frozen=True)
class UnstaffedRow:
    """Placeholder row letting a task stay unassigned at kappa cost."""

    task: object


@dataclass(frozen=True)
class First:
    robot: object


@dataclass(frozen=True)
class After:
    task: object
    classes: tuple = ()


@dataclass(frozen=True)
class Unstaffed:
    pass


@dataclass
class StackedMatrix:
    values: np.ndarray
    kinds: np.ndarray
    row_meta: list
    task_ids: list
    kappa: float
    source: CostMatrices | None = None


@dataclass
class AssignmentSolution:
    assignments: dict
    rows: list
    objective: float
    kappa_count: int
    kappa_tasks: list = field(default_factory=list)
    classes: list = field(default_factory=list)

    def first_of(self, robot):
        for t, a in self.assignments.items():
            if isinstance(a, First) and a.robot == robot:
                return t
        return None

    def successors(self, task) -> list:
        return [t for t, a in self.assignments.items() if isinstance(a, After) and a.task == task]


def stack(cm: CostMatrices, collapse: bool = True, unstaffed: bool = False) -> StackedMatrix:
    """Stack the blocks into one matrix.

    With ``collapse`` the per-class chain rows of a predecessor are merged
    into a single row holding the cheapest entry over classes, so a task can
    have at most one successor across all classes.  ``unstaffed`` appends one
    Kappa-priced placeholder row per task.
    """
    m = cm.n_tasks
    if not collapse or not cm.classes:
        values, kinds = cm.stacked()
        meta = list(cm.row_meta)
    else:
        # best entry over classes, ordered by (kind, value)
        key_k = cm.sub_kinds.min(axis=0)
        masked = np.where(cm.sub_kinds == key_k[None], cm.sub_values, np.inf)
        chain_v = np.where(key_k == CostKind.FINITE, masked.min(axis=0),
                           np.where(key_k == CostKind.KAPPA, cm.kappa, np.inf))
        values = np.vstack([cm.first_values, chain_v]).reshape(-1, m)
        kinds = np.vstack([cm.first_kinds, key_k.astype(np.int8)]).reshape(-1, m)
        meta = [RobotRow(r) for r in cm.robot_ids] + [ChainRow(k, None) for k in cm.task_ids[:-1]]
    if unstaffed:
        uv = np.full((m, m), np.inf)
        uk = np.full((m, m), CostKind.FORBIDDEN, np.int8)
        np.fill_diagonal(uv, cm.kappa)
        np.fill_diagonal(uk, CostKind.KAPPA)
        values = np.vstack([values, uv])
        kinds = np.vstack([kinds, uk])
        meta += [UnstaffedRow(t) for t in cm.task_ids]
    return StackedMatrix(values, kinds, meta, list(cm.task_ids), cm.kappa, cm)


# --------------------------------------------------------------------------
# kernels: shortest augmenting path with row/column potentials


def _lsap_loop(cost):
    """Assign each of the n rows of ``cost`` (n <= m) to a distinct column.

    ``inf`` entries are non-edges.  Returns ``(col_of_row, u, v, failed)``;
    ``failed`` is the first row that could not be augmented, or -1.
    Column potentials stay <= 0 and are 0 on unmatched columns.
    """
    n, m = cost.shape
    inf = np.inf
    u = np.zeros(n)
    v = np.zeros(m + 1)
    p = np.full(m + 1, -1, dtype=np.int64)
    way = np.zeros(m + 1, dtype=np.int64)
    minv = np.empty(m + 1)
    used = np.zeros(m + 1, dtype=np.bool_)
    for i in range(n):
        p[m] = i
        j0 = m
        minv[:] = inf
        used[:] = False
        while True:
            used[j0] = True
            i0 = p[j0]
            delta = inf
            j1 = -1
            for j in range(m):
                if not used[j]:
                    cur = cost[i0, j] - u[i0] - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            if j1 < 0:
                col = np.full(n, -1, dtype=np.int64)
                return col, u, v[:m], i
            for j in range(m + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == -1:
                break
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == m:
                break
    col = np.full(n, -1, dtype=np.int64)
    for j in range(m):
        if p[j] >= 0:
            col[p[j]] = j
    return col, u, v[:m], -1


def _lsap_numpy(cost):
    n, m = cost.shape
    inf = np.inf
    u = np.zeros(n)
    v = np.zeros(m + 1)
    p = np.full(m + 1, -1, dtype=np.int64)
    way = np.zeros(m + 1, dtype=np.int64)
    for i in range(n):
        p[m] = i
        j0 = m
        minv = np.full(m + 1, inf)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used[:m]
            cur = cost[i0] - u[i0] - v[:m]
            better = free & (cur < minv[:m])
            minv[:m][better] = cur[better]
            way[:m][better] = j0
            masked = np.where(free, minv[:m], inf)
            j1 = int(np.argmin(masked))
            delta = masked[j1]
            if not delta < inf:
                return np.full(n, -1, dtype=np.int64), u, v[:m], i
            u[p[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
            j0 = j1
            if p[j0] == -1:
                break
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == m:
                break
    col = np.full(n, -1, dtype=np.int64)
    matched = np.flatnonzero(p[:m] >= 0)
    col[p[matched]] = matched
    return col, u, v[:m], -1


lsap_kernel = kernel(_lsap_loop, fallback=_lsap_numpy)


def _lexmin(weights, col, u, v, tol):
    """Among optimal matchings pick the one with the smallest row vector.

    Optimal matchings are exactly those using tight edges only and covering
    every row with a negative potential.  Tasks are fixed in order; each tries
    its smallest tight row via an alternating path or cycle that avoids rows
    already fixed.
    """
    n, m = weights.shape
    with np.errstate(invalid="ignore"):
        reduced = weights - u[:, None] - v[None, :]
    tight = reduced <= tol
    must = v < -tol
    # a task can only improve on a tight row below its current one
    below = tight & (np.arange(m)[None, :] < np.asarray(col)[:, None])
    movable = below.any(axis=1)
    col = [int(c) for c in col]
    if not movable.any():
        return col
    adj = _LazyRows(tight)
    owner = [-1] * m
    for t, r in enumerate(col):
        owner[r] = t
    fixed = [False] * m

    for t, may_move in enumerate(movable.tolist()):
        if may_move:
            for r in np.flatnonzero(tight[t, :col[t]]).tolist():
                if fixed[r]:
                    continue
                if _force(t, r, col, owner, adj, fixed, must):
                    break
        fixed[col[t]] = True
    return col


class _LazyRows:
    """Tight row indices per task, computed on first use."""

    def __init__(self, tight):
        self.tight = tight
        self.cache = {}

    def __getitem__(self, t):
        rows = self.cache.get(t)
        if rows is None:
            rows = self.cache[t] = np.flatnonzero(self.tight[t]).tolist()
        return rows


def _force(t, r, col, owner, adj, fixed, must):
    r_old = col[t]
    parent = {r: None}
    queue = deque([r])
    end = None
    while queue:
        x = queue.popleft()
        o = owner[x]
        if o == -1:
            if not must[r_old]:
                end = x
                break
            continue
        for y in adj[o]:
            if y == x or fixed[y] or y in parent:
                continue
            parent[y] = x
            if y == r_old:
                end = y
                break
            queue.append(y)
        if end is not None:
            break
    if end is None:
        return False
    chain = [end]
    while parent[chain[-1]] is not None:
        chain.append(parent[chain[-1]])
    chain.reverse()  # r, ..., end
    movers = [t] + [owner[x] for x in chain[:-1]]
    if end != r_old:
        owner[r_old] = -1
    for task, row in zip(movers, chain):
        col[task] = row
        owner[row] = task
    return True


def _weights(sm: StackedMatrix) -> tuple[np.ndarray, float]:
    kinds = sm.kinds
    finite = sm.values[kinds == CostKind.FINITE]
    top = float(finite.max()) if finite.size else 0.0
    m = len(sm.task_ids)
    w_kappa = max(sm.kappa, 1.0 + m * max(top, 0.0))
    w = np.where(kinds == CostKind.FINITE, sm.values,
                 np.where(kinds == CostKind.KAPPA, w_kappa, np.inf))
    return np.ascontiguousarray(w.T, dtype=np.float64), w_kappa


def solve_rows(sm: StackedMatrix) -> list[int]:
    """Selected row index per task column (lexicographically smallest optimum)."""
    m = len(sm.task_ids)
    if m == 0:
        return []
    dead = [sm.task_ids[j] for j in np.flatnonzero(np.all(sm.kinds == CostKind.FORBIDDEN, axis=0))]
    if dead:
        raise StructurallyInfeasible(dead)
    w, w_kappa = _weights(sm)
    if w.shape[1] < m:
        raise StructurallyInfeasible(sm.task_ids[w.shape[1]:])
    col, u, v, failed = lsap_kernel(w)
    if failed >= 0:
        raise StructurallyInfeasible([sm.task_ids[failed]])
    tol = 64 * np.finfo(float).eps * m * max(1.0, w_kappa)
    return _lexmin(w, col, u, v, tol)


def _chain_classes(sm: StackedMatrix, k: int, j: int, kind: int, value: float) -> tuple:
    cm = sm.source
    if cm is None or not cm.classes:
        return ()
    out = []
    for q in range(len(cm.classes)):
        if cm.sub_kinds[q, k, j] == kind and (kind != CostKind.FINITE or cm.sub_values[q, k, j] == value):
            out.append(q)
    return tuple(out)


def decode(rows, sm: StackedMatrix) -> AssignmentSolution:
    assignments = {}
    objective = 0.0
    kappa_tasks = []
    cols = np.arange(len(rows))
    kinds = sm.kinds[rows, cols].tolist() if len(rows) else []
    values = sm.values[rows, cols].tolist() if len(rows) else []
    position = {t: i for i, t in enumerate(sm.source.task_ids)} if sm.source is not None else {}
    for j, r in enumerate(rows):
        t = sm.task_ids[j]
        meta = sm.row_meta[r]
        kind, value = kinds[j], values[j]
        if isinstance(meta, RobotRow):
            assignments[t] = First(meta.robot)
        elif isinstance(meta, ChainRow):
            classes = ((meta.quality,) if meta.quality is not None
                       else _chain_classes(sm, position.get(meta.task), j, kind, value))
            assignments[t] = After(meta.task, classes)
        else:
            assignments[t] = Unstaffed()
        if kind == CostKind.KAPPA:
            objective += sm.kappa
            kappa_tasks.append(t)
        elif kind == CostKind.FINITE:
            objective += value
        else:  # pragma: no cover - solver never selects these
            raise AssertionError("Forbidden cell selected")
    classes = list(sm.source.classes) if sm.source is not None else []
    return AssignmentSolution(assignments, list(rows), objective, len(kappa_tasks), kappa_tasks, classes)


def solve_lsap(sm: StackedMatrix) -> AssignmentSolution:
    return decode(solve_rows(sm), sm)


def solve(cm: CostMatrices, unstaffed: bool = False) -> AssignmentSolution:
    return solve_lsap(stack(cm, collapse=True, unstaffed=unstaffed))


def check_structure(sol: AssignmentSolution, robot_ids, task_ids) -> list[str]:
    """Violations of: each task once, one first task per robot, one successor per task."""
    out = []
    if sorted(map(str, sol.assignments)) != sorted(map(str, task_ids)):
        out.append("not every task is assigned exactly once")
    firsts = [a.robot for a in sol.assignments.values() if isinstance(a, First)]
    if len(set(firsts)) != len(firsts):
        out.append("a robot has more than one first task")
    if set(firsts) - set(robot_ids):
        out.append("unknown robot in assignment")
    preds = [a.task for a in sol.assignments.values() if isinstance(a, After)]
    if len(set(preds)) != len(preds):
        out.append("a task has more than one successor")
    return out


def plan_cost(cm: CostMatrices, sequences: dict) -> float:
    """Objective of explicit per-robot task sequences, checking feasibility.

    ``sequences`` maps robot id -> ordered task ids.  Raises ``ValueError``
    if a task is missing or duplicated, or a step uses a Kappa/Forbidden cell
    (for chain steps, every class must be non-finite to fail).
    """
    seen = [t for seq in sequences.values() for t in seq]
    if sorted(map(str, seen)) != sorted(map(str, cm.task_ids)) or len(set(seen)) != len(seen):
        raise ValueError("sequences must partition the task set")
    total = 0.0
    for robot, seq in sequences.items():
        if not seq:
            continue
        i = cm.robot_ids.index(robot)
        j = cm.task_ids.index(seq[0])
        c = cm.first(i, j)
        if not c.is_finite:
            raise ValueError(f"{robot} cannot take {seq[0]} first ({c})")
        total += c.value
        for a, b in zip(seq, seq[1:]):
            k, j = cm.task_ids.index(a), cm.task_ids.index(b)
            if j <= k or k >= cm.n_tasks - 1:
                raise ValueError(f"{a} -> {b} violates deadline order")
            options = [cm.subsequent(q, k, j) for q in range(len(cm.classes))]
            finite = [c.value for c in options if c.is_finite]
            if not finite:
                raise ValueError(f"{a} -> {b} is infeasible")
            total += min(finite)
    return total

