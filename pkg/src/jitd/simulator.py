"""Discrete-event execution of plans with online arrivals and replanning.

Robots follow the map's shortest paths at their maximum speed.  Phase
changes happen at their exact (continuous) times; the ``tick`` sets the
clock resolution for task arrivals (tasks released within one tick are
planned together) and for the optional position samples.  A replan freezes
each busy robot's current task and re-solves over every task not yet
started.
"""
from __future__ import annotations

import csv
import heapq
import io
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .assignment import PlanningError
from .dream import allocate
from .model import Mode, Robot, Scenario, Task
from .worldmap import Point, polyline_length

# event priorities at equal times
_FAILURE, _MAPCHANGE, _ARRIVAL, _PHASE = 0, 1, 2, 3


@dataclass(frozen=True)
class RobotFailure:
    time: float
    robot: object


@dataclass(frozen=True)
class MapChange:
    time: float
    map: object


@dataclass
class TraceRecord:
    time: float
    robot: object
    event: str
    task: object = None
    x: float | None = None
    y: float | None = None
    lateness: float | None = None


@dataclass
class SimTrace:
    records: list = field(default_factory=list)
    lateness: dict = field(default_factory=dict)
    delivered: list = field(default_factory=list)
    rejected: list = field(default_factory=list)
    submitted: int = 0
    team_timeline: list = field(default_factory=list)  # (time, active robots)
    total_distance: float = 0.0
    activations: int = 0
    end_time: float = 0.0
    tick: float = 0.1
    samples: list = field(default_factory=list)  # (time, robot, x, y)
    executors: dict = field(default_factory=dict)

    @property
    def max_team(self) -> int:
        return max((n for _, n in self.team_timeline), default=0)

    def on_time_rate(self) -> float:
        if not self.submitted:
            return 1.0
        ok = sum(1 for t in self.delivered if self.lateness[t] <= self.tick)
        return ok / self.submitted

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time", "robot", "event", "task", "x", "y", "lateness"])
        for r in self.records:
            w.writerow([_fmt(r.time), "" if r.robot is None else r.robot, r.event,
                        "" if r.task is None else r.task, _fmt(r.x), _fmt(r.y), _fmt(r.lateness)])
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "submitted": self.submitted,
            "delivered": len(self.delivered),
            "rejected": list(self.rejected),
            "on_time_rate": self.on_time_rate(),
            "total_distance": self.total_distance,
            "activations": self.activations,
            "max_team": self.max_team,
            "end_time": self.end_time,
            "ruf": {str(k): v for k, v in compute_ruf(self).items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=False)


def _fmt(v):
    if v is None:
        return ""
    return f"{v:.6f}"


@dataclass
class _Leg:
    points: list
    length: float
    t0: float
    t1: float

    def at(self, t: float) -> Point:
        if t >= self.t1 or self.t1 <= self.t0:
            return self.points[-1]
        frac = max(0.0, (t - self.t0) / (self.t1 - self.t0))
        geo = polyline_length(self.points)
        target = frac * geo
        for a, b in zip(self.points, self.points[1:]):
            seg = math.hypot(b.x - a.x, b.y - a.y)
            if target <= seg:
                s = target / seg if seg > 0 else 0.0
                return Point(a.x + s * (b.x - a.x), a.y + s * (b.y - a.y))
            target -= seg
        return self.points[-1]


@dataclass
class _Agent:
    robot: Robot
    pos: Point
    active: bool
    queue: list = field(default_factory=list)
    current: Task | None = None
    phase: str = "idle"
    phase_end: float = 0.0
    leg: _Leg | None = None
    version: int = 0
    failed: bool = False

    @property
    def id(self):
        return self.robot.id


class _Sim:
    def __init__(self, scenario: Scenario, tick: float, sample: bool):
        if not tick > 0:
            raise ValueError("tick must be positive")
        self.world = scenario.map
        self.kappa = scenario.kappa
        self.tick = tick
        self.sample = sample
        self.trace = SimTrace(tick=tick)
        self.heap: list = []
        self.seq = 0
        self.pending: dict = {}
        self.tasks: dict = {}
        self.agents: list[_Agent] = []
        for r in scenario.robots:
            self.agents.append(_Agent(r, r.position, True))
        for r in scenario.reserve:
            self.agents.append(_Agent(replace(r, position=r.depot), r.depot, False))
        self.now = 0.0
        self._team_changed()

    # bookkeeping ---------------------------------------------------------
    def push(self, time, prio, key, payload):
        self.seq += 1
        heapq.heappush(self.heap, (time, prio, str(key), self.seq, payload))

    def log(self, robot, event, task=None, pos=None, lateness=None):
        x, y = (pos.x, pos.y) if pos is not None else (None, None)
        self.trace.records.append(TraceRecord(self.now, robot, event, task, x, y, lateness))

    def _team_changed(self):
        n = sum(1 for a in self.agents if a.active and not a.failed)
        tl = self.trace.team_timeline
        if tl and tl[-1][0] == self.now:
            tl[-1] = (self.now, n)
            if len(tl) > 1 and tl[-2][1] == n:
                tl.pop()
        elif not tl or tl[-1][1] != n:
            tl.append((self.now, n))

    def agent(self, robot_id) -> _Agent:
        for a in self.agents:
            if a.id == robot_id:
                return a
        raise KeyError(robot_id)

    # motion ----------------------------------------------------------------
    def _start_leg(self, a: _Agent, target: Point) -> bool:
        d = self.world.distance(a.pos, target)
        if not math.isfinite(d):
            return False
        pts = self.world.path(a.pos, target) if d > 0 else [a.pos]
        t1 = self.now + d / a.robot.max_speed
        a.leg = _Leg(pts, d, self.now, t1)
        a.phase_end = t1
        if self.sample:
            k0 = math.ceil(self.now / self.tick)
            k1 = math.floor(t1 / self.tick)
            for k in range(k0, k1 + 1):
                p = a.leg.at(k * self.tick)
                self.trace.samples.append((k * self.tick, a.id, p.x, p.y))
        return True

    def _finish_leg(self, a: _Agent):
        if a.leg is not None:
            self.trace.total_distance += a.leg.length
            a.pos = a.leg.points[-1]
            a.leg = None

    def _abort_leg(self, a: _Agent):
        """Stop mid-leg at the current time, counting the distance covered."""
        if a.leg is None:
            return
        leg = a.leg
        if leg.t1 > leg.t0:
            frac = min(1.0, max(0.0, (self.now - leg.t0) / (leg.t1 - leg.t0)))
        else:
            frac = 1.0
        self.trace.total_distance += frac * leg.length
        a.pos = leg.at(self.now)
        a.leg = None

    def _schedule(self, a: _Agent, when: float):
        a.phase_end = when
        self.push(when, _PHASE, a.id, ("phase", a.id, a.version))

    def _begin_next(self, a: _Agent):
        """Start the next queued task, or go to rest."""
        if a.queue:
            a.current = a.queue.pop(0)
            a.phase = "to_pickup"
            self.log(a.id, "depart_pickup", a.current.id, a.pos)
            if not self._start_leg(a, a.current.pickup):
                self._drop_current(a, "unreachable")
                return
            self._schedule(a, a.phase_end)
        else:
            a.current = None
            a.phase = "idle"
            if a.active:
                a.active = False
                self.log(a.id, "rest", None, a.pos)
                self._team_changed()

    def _drop_current(self, a: _Agent, why: str):
        t = a.current
        a.current = None
        a.phase = "idle"
        self.log(a.id, why, t.id, a.pos)
        self.pending[t.id] = t
        self.push(self.now, _ARRIVAL, "", ("replan",))

    def _advance(self, a: _Agent):
        t = a.current
        if a.phase == "to_pickup":
            self._finish_leg(a)
            self.log(a.id, "arrive_pickup", t.id, a.pos)
            a.phase = "loading"
            self._schedule(a, self.now + t.load_time)
        elif a.phase == "loading":
            self.log(a.id, "loaded", t.id, a.pos)
            a.phase = "to_delivery"
            if not self._start_leg(a, t.delivery):
                self._drop_current(a, "unreachable")
                return
            self._schedule(a, a.phase_end)
        elif a.phase == "to_delivery":
            self._finish_leg(a)
            self.log(a.id, "arrive_delivery", t.id, a.pos)
            if self.now < t.delivery_time:
                a.phase = "waiting"
                self._schedule(a, t.delivery_time)
            else:
                self._unload(a)
        elif a.phase == "waiting":
            self._unload(a)
        elif a.phase == "unloading":
            self.log(a.id, "delivered", t.id, a.pos, self.trace.lateness[t.id])
            self.trace.delivered.append(t.id)
            a.current = None
            self._begin_next(a)

    def _unload(self, a: _Agent):
        t = a.current
        late = self.now - t.delivery_time
        self.trace.lateness[t.id] = late
        self.trace.executors[t.id] = a.id
        if not t.required <= a.robot.skills:  # pragma: no cover - planner guarantees this
            raise AssertionError(f"robot {a.id} lacks skills for {t.id}")
        self.log(a.id, "unload_start", t.id, a.pos, late)
        a.phase = "unloading"
        self._schedule(a, self.now + t.unload_time)

    # planning ------------------------------------------------------------
    def _projected(self, a: _Agent) -> Robot:
        t = a.current
        if a.phase == "to_pickup":
            arrive = a.phase_end + t.load_time + self.world.distance(t.pickup, t.delivery) / a.robot.max_speed
        elif a.phase == "loading":
            arrive = a.phase_end + self.world.distance(t.pickup, t.delivery) / a.robot.max_speed
        elif a.phase == "to_delivery":
            arrive = a.phase_end
        else:
            arrive = self.now
        ready = max(arrive, t.delivery_time) + t.unload_time
        if a.phase == "unloading":
            ready = a.phase_end
        return replace(a.robot, position=t.delivery, depot=t.delivery, mode=Mode.ACTIVE, ready_at=ready)

    def replan(self):
        for a in self.agents:
            for t in a.queue:
                self.pending[t.id] = t
            a.queue = []
        if not self.pending:
            return
        busy = [a for a in self.agents if not a.failed and a.current is not None]
        fleet = [self._projected(a) for a in busy]
        reserve = [replace(a.robot, position=a.pos, depot=a.pos, mode=Mode.REST, ready_at=-math.inf)
                   for a in self.agents if not a.failed and a.current is None]
        tasks = list(self.pending.values())
        while tasks:
            try:
                plan = allocate(fleet, reserve, tasks, self.world, self.now, self.kappa)
                break
            except PlanningError as exc:
                bad = set(exc.task_ids) & {t.id for t in tasks}
                if not bad:
                    raise
                for t in tasks:
                    if t.id in bad:
                        self.log(None, "reject", t.id)
                        self.trace.rejected.append(t.id)
                        del self.pending[t.id]
                tasks = [t for t in tasks if t.id not in bad]
        else:
            return
        self.pending.clear()
        by_id = {t.id: t for t in tasks}
        for tr in plan.trajectories:
            a = self.agent(tr.robot)
            a.queue = [by_id[k] for k in tr.tasks]
            if a.current is None and a.queue:
                if not a.active:
                    a.active = True
                    self.trace.activations += 1
                    self.log(a.id, "activate", None, a.pos)
                a.version += 1
                self._begin_next(a)
        self._team_changed()

    # main loop -------------------------------------------------------------
    def run(self, tasks, events, horizon):
        for t in tasks:
            self.tasks[t.id] = t
            when = math.ceil(round(t.release_time / self.tick, 9)) * self.tick if t.release_time > 0 else 0.0
            self.push(when, _ARRIVAL, t.id, ("arrive", t))
        self.trace.submitted = len(tasks)
        for e in events:
            if isinstance(e, RobotFailure):
                self.push(e.time, _FAILURE, e.robot, ("fail", e.robot))
            elif isinstance(e, MapChange):
                self.push(e.time, _MAPCHANGE, "", ("map", e.map))
            else:
                raise TypeError(f"unknown event {e!r}")
        # initially active robots with no work rest once the first plan is made
        self.push(0.0, _ARRIVAL, "", ("replan",))
        while self.heap:
            time, prio, _, _, payload = heapq.heappop(self.heap)
            self.now = time
            if prio in (_FAILURE, _MAPCHANGE, _ARRIVAL):
                batch = [payload]
                while self.heap and self.heap[0][0] == time and self.heap[0][1] == prio:
                    batch.append(heapq.heappop(self.heap)[4])
                for p in batch:
                    self._external(p)
                self.replan()
                for a in self.agents:
                    if a.active and a.current is None and not a.queue and not a.failed:
                        self._begin_next(a)
            else:
                _, robot_id, version = payload
                a = self.agent(robot_id)
                if a.failed or a.version != version or a.current is None:
                    continue
                self._advance(a)
        self.trace.end_time = max(self.now, horizon or 0.0)
        self.now = self.trace.end_time
        self._team_changed()
        return self.trace

    def _external(self, p):
        kind = p[0]
        if kind == "arrive":
            t = p[1]
            self.pending[t.id] = t
            self.log(None, "arrival", t.id, t.pickup)
        elif kind == "fail":
            a = self.agent(p[1])
            if a.failed:
                return
            self._abort_leg(a)
            a.failed = True
            a.version += 1
            self.log(a.id, "failure", None, a.pos)
            for t in ([a.current] if a.current is not None else []) + a.queue:
                self.pending[t.id] = t
            a.current, a.queue = None, []
            a.active = False
            self._team_changed()
        elif kind == "map":
            self.world = p[1]
            for a in self.agents:
                if a.failed:
                    continue
                moving = a.leg is not None and a.phase in ("to_pickup", "to_delivery")
                self._abort_leg(a)
                snapped = self.world.snap(a.pos)
                if snapped != a.pos:
                    a.pos = snapped
                    self.log(a.id, "snap", None, a.pos)
                if moving:
                    target = a.current.pickup if a.phase == "to_pickup" else a.current.delivery
                    a.version += 1
                    if self._start_leg(a, target):
                        self._schedule(a, a.phase_end)
                    else:
                        self._drop_current(a, "unreachable")
            self.log(None, "map_change")


def run(scenario: Scenario, tasks=None, *, seed: int = 0, tick: float = 0.1, events=(),
        horizon: float | None = None, arrivals: dict | None = None, sample: bool = False) -> SimTrace:
    """Simulate ``tasks`` (default: the scenario's) on the scenario fleet.

    ``arrivals`` optionally adds Poisson-generated tasks; it is a dict of
    keyword arguments for :func:`generate_poisson_tasks` drawn with ``seed``.
    """
    tasks = list(scenario.tasks if tasks is None else tasks)
    if arrivals:
        extra = generate_poisson_tasks(world=scenario.map, seed=seed, **arrivals)
        taken = {t.id for t in tasks}
        tasks += [t for t in extra if t.id not in taken]
    sim = _Sim(scenario, tick, sample)
    return sim.run(tasks, list(events), horizon)


def generate_poisson_tasks(rate: float, horizon: float, world, skill_universe=(), seed: int = 0,
                           slack=(30.0, 90.0), load_time: float = 1.0, unload_time: float = 1.0,
                           first_id: int = 0) -> list[Task]:
    """Poisson task stream from numpy's PCG64 generator.

    Inter-arrival gaps are exponential with mean ``1/rate``; pick-up and
    delivery points are uniform over free space; each task's delivery time
    is its release plus a uniform draw from ``slack``.  With a non-empty
    ``skill_universe`` every task requires one label drawn uniformly.
    """
    if not rate > 0:
        raise ValueError("rate must be positive")
    rng = np.random.Generator(np.random.PCG64(seed))
    universe = sorted(skill_universe, key=str)
    out = []
    t = rng.exponential(1.0 / rate)
    while t < horizon:
        pickup = world.sample_free(rng)
        delivery = world.sample_free(rng)
        due = t + rng.uniform(*slack)
        required = frozenset([universe[int(rng.integers(len(universe)))]]) if universe else frozenset()
        out.append(Task(first_id + len(out), pickup, delivery, load_time, unload_time,
                        float(due), required, float(t)))
        t += rng.exponential(1.0 / rate)
    return out


def compute_ruf(trace: SimTrace, sizes=None) -> dict:
    """Percent of simulated time spent with exactly ``n`` active robots."""
    total = trace.end_time - (trace.team_timeline[0][0] if trace.team_timeline else 0.0)
    spans: dict = {}
    tl = trace.team_timeline
    for (t0, n), nxt in zip(tl, tl[1:] + [(trace.end_time, None)]):
        spans[n] = spans.get(n, 0.0) + max(0.0, nxt[0] - t0)
    keys = sorted(set(spans) | set(sizes or ()))
    if total <= 0:
        n0 = tl[-1][1] if tl else 0
        return {n: (100.0 if n == n0 else 0.0) for n in sorted(set(keys) | {n0})}
    return {n: 100.0 * spans.get(n, 0.0) / total for n in keys}
