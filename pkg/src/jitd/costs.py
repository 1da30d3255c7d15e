"""First-task and subsequent-task cost blocks.

Every entry carries a kind next to its value:

* ``FINITE``    - feasible; value is the travelled distance in meters.
* ``KAPPA``     - infeasible but repairable by adding a robot; value is kappa.
* ``FORBIDDEN`` - the successor's deadline leaves no positive time after the
  predecessor; never assignable (value ``inf``).
"""
from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ._accel import kernel
from .model import DEFAULT_KAPPA, Robot, Task, sort_tasks_by_deadline

# relative slack on time comparisons so exact-boundary schedules stay feasible
TIME_EPS = 1e-9


class CostKind(enum.IntEnum):
    FINITE = 0
    KAPPA = 1
    FORBIDDEN = 2


@dataclass(frozen=True, order=True)
class Cost:
    kind: CostKind
    value: float

    @classmethod
    def finite(cls, value: float) -> "Cost":
        return cls(CostKind.FINITE, float(value))

    @classmethod
    def kappa(cls, kappa: float = DEFAULT_KAPPA) -> "Cost":
        return cls(CostKind.KAPPA, float(kappa))

    @classmethod
    def forbidden(cls) -> "Cost":
        return cls(CostKind.FORBIDDEN, math.inf)

    @property
    def is_finite(self) -> bool:
        return self.kind is CostKind.FINITE

    def __str__(self):
        if self.kind is CostKind.KAPPA:
            return "K"
        if self.kind is CostKind.FORBIDDEN:
            return "INF"
        return repr(self.value)


@dataclass(frozen=True)
class QualityClass:
    """A distinct skill set present in the team, moving at ``speed``."""

    skills: frozenset
    speed: float
    label: str = ""

    def admits(self, robot: Robot) -> bool:
        return self.skills <= robot.skills and robot.max_speed >= self.speed


def derive_quality_classes(robots: Sequence[Robot]) -> list[QualityClass]:
    """One class per distinct (skill set, speed) pair among ``robots``.

    Keying on speed as well means a slower newcomer adds a class instead of
    slowing down an existing one, so growing the team never turns a
    feasible chain entry infeasible.
    """
    pairs = {(r.skills, r.max_speed) for r in robots}
    ordered = sorted(pairs, key=lambda p: (len(p[0]), sorted(map(str, p[0])), p[1]))
    return [QualityClass(s, v, label=str(i)) for i, (s, v) in enumerate(ordered)]


def _distance_fn(dist):
    return dist.distance if hasattr(dist, "distance") else dist


def _fits(travel: float, available: float) -> bool:
    return travel <= available + TIME_EPS * max(1.0, abs(available))


def first_cost(robot: Robot, task: Task, dist, now: float = 0.0,
               kappa: float = DEFAULT_KAPPA) -> Cost:
    if not task.required <= robot.skills:
        return Cost.kappa(kappa)
    d = _distance_fn(dist)
    d1 = d(robot.position, task.pickup) + d(task.pickup, task.delivery)
    if not math.isfinite(d1):
        return Cost.kappa(kappa)
    start = max(now, robot.ready_at)
    if _fits(d1 / robot.max_speed, (task.delivery_time - start) - task.load_time):
        return Cost.finite(d1)
    return Cost.kappa(kappa)


def chain_distance(k: Task, j: Task, dist) -> float:
    d = _distance_fn(dist)
    return d(k.delivery, j.pickup) + d(j.pickup, j.delivery)


def min_travel_time(k: Task, j: Task, quality_speed: float, dist) -> float:
    if not quality_speed > 0:
        raise ValueError("quality_speed must be positive")
    return chain_distance(k, j, dist) / quality_speed


def chain_slack(k: Task, j: Task) -> float:
    return j.delivery_time - (k.delivery_time + k.unload_time + j.load_time)


def subsequent_cost(k: Task, j: Task, quality: QualityClass, dist,
                    kappa: float = DEFAULT_KAPPA) -> Cost:
    slack = chain_slack(k, j)
    if slack <= 0:
        return Cost.forbidden()
    if not (j.required <= quality.skills and k.required <= quality.skills):
        return Cost.kappa(kappa)
    d2 = chain_distance(k, j, dist)
    if not math.isfinite(d2) or not _fits(d2 / quality.speed, slack):
        return Cost.kappa(kappa)
    return Cost.finite(d2)


# --------------------------------------------------------------------------
# whole-matrix construction


@dataclass(frozen=True)
class RobotRow:
    robot: object


@dataclass(frozen=True)
class ChainRow:
    task: object
    quality: int


@dataclass
class CostMatrices:
    """First block (N x M) and one (M-1) x M subsequent block per class.

    Columns follow ``task_ids`` (deadline-sorted).  ``tasks`` and ``robots``
    are None when the matrices were loaded from fixture files.
    """

    task_ids: list
    robot_ids: list
    classes: list
    first_values: np.ndarray
    first_kinds: np.ndarray
    sub_values: np.ndarray
    sub_kinds: np.ndarray
    kappa: float = DEFAULT_KAPPA
    tasks: list | None = None
    robots: list | None = None
    row_meta: list = field(init=False)

    def __post_init__(self):
        meta = [RobotRow(r) for r in self.robot_ids]
        for q in range(len(self.classes)):
            meta += [ChainRow(k, q) for k in self.task_ids[:-1]]
        self.row_meta = meta

    @property
    def n_tasks(self) -> int:
        return len(self.task_ids)

    def first(self, i: int, j: int) -> Cost:
        return Cost(CostKind(int(self.first_kinds[i, j])), float(self.first_values[i, j]))

    def subsequent(self, q: int, k: int, j: int) -> Cost:
        return Cost(CostKind(int(self.sub_kinds[q, k, j])), float(self.sub_values[q, k, j]))

    def stacked(self) -> tuple[np.ndarray, np.ndarray]:
        """Rows N + n_classes * (M - 1), in ``row_meta`` order."""
        m = self.n_tasks
        vals = [self.first_values] + [self.sub_values[q] for q in range(len(self.classes))]
        kinds = [self.first_kinds] + [self.sub_kinds[q] for q in range(len(self.classes))]
        return (np.concatenate(vals).reshape(-1, m) if m else np.zeros((0, 0)),
                np.concatenate(kinds).reshape(-1, m) if m else np.zeros((0, 0), np.int8))


def _fill_costs_loop(d_rp, d_pd, d_dp, speeds, starts, robot_ok, deadlines, load, unload,
                     class_speeds, class_ok, kappa, eps):
    n, m = d_rp.shape
    n_cls = class_speeds.shape[0]
    fv = np.empty((n, m))
    fk = np.empty((n, m), dtype=np.int8)
    sv = np.empty((n_cls, max(m - 1, 0), m))
    sk = np.empty((n_cls, max(m - 1, 0), m), dtype=np.int8)
    for i in range(n):
        for j in range(m):
            d1 = d_rp[i, j] + d_pd[j]
            avail = (deadlines[j] - starts[i]) - load[j]
            if robot_ok[i, j] and d1 < np.inf and d1 / speeds[i] <= avail + eps * max(1.0, abs(avail)):
                fv[i, j] = d1
                fk[i, j] = 0
            else:
                fv[i, j] = kappa
                fk[i, j] = 1
    for q in range(n_cls):
        for k in range(m - 1):
            for j in range(m):
                slack = deadlines[j] - (deadlines[k] + unload[k] + load[j])
                if j <= k or slack <= 0.0:
                    sv[q, k, j] = np.inf
                    sk[q, k, j] = 2
                    continue
                d2 = d_dp[k, j] + d_pd[j]
                if (class_ok[q, j] and class_ok[q, k] and d2 < np.inf
                        and d2 / class_speeds[q] <= slack + eps * max(1.0, abs(slack))):
                    sv[q, k, j] = d2
                    sk[q, k, j] = 0
                else:
                    sv[q, k, j] = kappa
                    sk[q, k, j] = 1
    return fv, fk, sv, sk


def _fill_costs_numpy(d_rp, d_pd, d_dp, speeds, starts, robot_ok, deadlines, load, unload,
                      class_speeds, class_ok, kappa, eps):
    n, m = d_rp.shape
    n_cls = class_speeds.shape[0]
    d1 = d_rp + d_pd[None, :]
    avail = (deadlines[None, :] - starts[:, None]) - load[None, :]
    with np.errstate(invalid="ignore"):
        ok = robot_ok & (d1 < np.inf) & (d1 / speeds[:, None] <= avail + eps * np.maximum(1.0, np.abs(avail)))
    fv = np.where(ok, d1, kappa)
    fk = np.where(ok, 0, 1).astype(np.int8)
    mk = max(m - 1, 0)
    kk = np.arange(mk)[:, None]
    jj = np.arange(m)[None, :]
    slack = deadlines[None, :] - (deadlines[:mk, None] + unload[:mk, None] + load[None, :])
    forbidden = (jj <= kk) | (slack <= 0.0)
    d2 = d_dp[:mk, :] + d_pd[None, :]
    sv = np.empty((n_cls, mk, m))
    sk = np.empty((n_cls, mk, m), dtype=np.int8)
    for q in range(n_cls):
        with np.errstate(invalid="ignore"):
            good = (class_ok[q][None, :] & class_ok[q][:mk, None] & (d2 < np.inf)
                    & (d2 / class_speeds[q] <= slack + eps * np.maximum(1.0, np.abs(slack))))
        sv[q] = np.where(forbidden, np.inf, np.where(good, d2, kappa))
        sk[q] = np.where(forbidden, 2, np.where(good, 0, 1))
    return fv, fk, sv, sk


fill_costs = kernel(_fill_costs_loop, fallback=_fill_costs_numpy)


def distance_tables(robots, tasks, dist):
    """Leg distances: robot->pickup, pickup->delivery, delivery_k->pickup_j."""
    m = len(tasks)
    world = dist if hasattr(dist, "distance") else None
    if world is not None and getattr(world, "kind", None) == "euclidean":
        # vectorised straight-line legs
        for p in [r.position for r in robots] + [t.pickup for t in tasks] + [t.delivery for t in tasks]:
            world._check(p)
        rp = np.array([r.position for r in robots], dtype=float).reshape(-1, 2)
        pp = np.array([t.pickup for t in tasks], dtype=float).reshape(-1, 2)
        dd = np.array([t.delivery for t in tasks], dtype=float).reshape(-1, 2)
        d_rp = np.hypot(rp[:, None, 0] - pp[None, :, 0], rp[:, None, 1] - pp[None, :, 1])
        d_pd = np.hypot(pp[:, 0] - dd[:, 0], pp[:, 1] - dd[:, 1])
        d_dp = np.hypot(dd[:, None, 0] - pp[None, :, 0], dd[:, None, 1] - pp[None, :, 1])
        return d_rp, d_pd, d_dp
    d = _distance_fn(dist)
    d_rp = np.array([[d(r.position, t.pickup) for t in tasks] for r in robots], dtype=float).reshape(len(robots), m)
    d_pd = np.array([d(t.pickup, t.delivery) for t in tasks], dtype=float)
    d_dp = np.full((m, m), np.inf)
    for k in range(m - 1):
        for j in range(k + 1, m):
            if chain_slack(tasks[k], tasks[j]) > 0:
                d_dp[k, j] = d(tasks[k].delivery, tasks[j].pickup)
    return d_rp, d_pd, d_dp


def build_cost_matrices(robots: Sequence[Robot], tasks: Sequence[Task],
                        quality_classes: Sequence[QualityClass] | None, dist,
                        now: float = 0.0, kappa: float = DEFAULT_KAPPA) -> CostMatrices:
    if not tasks:
        raise ValueError("at least one task is required")
    tasks = sort_tasks_by_deadline(tasks)
    robots = list(robots)
    classes = list(derive_quality_classes(robots) if quality_classes is None else quality_classes)
    m = len(tasks)
    d_rp, d_pd, d_dp = distance_tables(robots, tasks, dist)
    speeds = np.array([r.max_speed for r in robots], dtype=float)
    starts = np.array([max(now, r.ready_at) for r in robots], dtype=float)
    robot_ok = np.array([[t.required <= r.skills for t in tasks] for r in robots], dtype=np.bool_).reshape(len(robots), m)
    class_speeds = np.array([c.speed for c in classes], dtype=float)
    class_ok = np.array([[t.required <= c.skills for t in tasks] for c in classes], dtype=np.bool_).reshape(len(classes), m)
    deadlines = np.array([t.delivery_time for t in tasks], dtype=float)
    load = np.array([t.load_time for t in tasks], dtype=float)
    unload = np.array([t.unload_time for t in tasks], dtype=float)
    fv, fk, sv, sk = fill_costs(d_rp, d_pd, d_dp, speeds, starts, robot_ok, deadlines, load, unload,
                                class_speeds, class_ok, float(kappa), TIME_EPS)
    return CostMatrices(
        task_ids=[t.id for t in tasks], robot_ids=[r.id for r in robots], classes=classes,
        first_values=fv, first_kinds=fk, sub_values=sv, sub_kinds=sk, kappa=float(kappa),
        tasks=tasks, robots=robots,
    )


# --------------------------------------------------------------------------
# CSV blocks and fixtures


def _cell(value: float, kind: int) -> str:
    if kind == CostKind.KAPPA:
        return "K"
    if kind == CostKind.FORBIDDEN:
        return "INF"
    return repr(float(value))


def write_block_csv(path, values, kinds, row_labels, col_labels) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", *col_labels])
        for label, vrow, krow in zip(row_labels, values, kinds):
            w.writerow([label, *(_cell(v, k) for v, k in zip(vrow, krow))])


def read_block_csv(path, kappa: float = DEFAULT_KAPPA):
    """Returns ``(values, kinds, row_labels, col_labels)``."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    cols = rows[0][1:]
    labels, vals, kinds = [], [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(cols) + 1:
            raise ValueError(f"{path}: line {lineno}: expected {len(cols) + 1} fields")
        labels.append(row[0])
        vr, kr = [], []
        for tok in row[1:]:
            tok = tok.strip()
            if tok == "K":
                vr.append(kappa)
                kr.append(CostKind.KAPPA)
            elif tok == "INF":
                vr.append(math.inf)
                kr.append(CostKind.FORBIDDEN)
            else:
                vr.append(float(tok))
                kr.append(CostKind.FINITE)
        vals.append(vr)
        kinds.append(kr)
    return (np.array(vals, dtype=float).reshape(len(labels), len(cols)),
            np.array(kinds, dtype=np.int8).reshape(len(labels), len(cols)), labels, cols)


def dump_cost_matrices(cm: CostMatrices, directory, stem: str = "costs") -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    cols = [str(t) for t in cm.task_ids]
    out = [directory / f"{stem}_first.csv"]
    write_block_csv(out[0], cm.first_values, cm.first_kinds, [str(r) for r in cm.robot_ids], cols)
    for q in range(len(cm.classes)):
        path = directory / f"{stem}_sub{q}.csv"
        write_block_csv(path, cm.sub_values[q], cm.sub_kinds[q], cols[:-1], cols)
        out.append(path)
    return out


def load_cost_fixture(manifest) -> CostMatrices:
    """Load a fixture manifest (JSON) naming one first block and the class blocks."""
    manifest = Path(manifest)
    doc = json.loads(manifest.read_text())
    kappa = float(doc["kappa"])
    fv, fk, robots, cols = read_block_csv(manifest.parent / doc["first"], kappa)
    svs, sks, classes = [], [], []
    for block in doc["subsequent"]:
        sv, sk, rows, scols = read_block_csv(manifest.parent / block["file"], kappa)
        if scols != cols or rows != cols[:-1]:
            raise ValueError(f"{block['file']}: block labels do not match the first block")
        svs.append(sv)
        sks.append(sk)
        classes.append(QualityClass(frozenset(block.get("skills", ())), float(block.get("speed", 1.0)),
                                    label=str(block.get("label", len(classes)))))
    m = len(cols)
    return CostMatrices(
        task_ids=cols, robot_ids=robots, classes=classes,
        first_values=fv, first_kinds=fk,
        sub_values=np.array(svs).reshape(len(classes), max(m - 1, 0), m),
        sub_kinds=np.array(sks, dtype=np.int8).reshape(len(classes), max(m - 1, 0), m),
        kappa=kappa,
    )
