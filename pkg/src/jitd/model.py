"""Tasks, robots, trajectories and scenario files."""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Union

from .worldmap import EuclideanMap, GridMap, Point, TableMap, load_map, dump_map

SkillSet = frozenset
TaskId = Union[int, str]

DEFAULT_KAPPA = 1000.0


def skillset(labels: Iterable = ()) -> frozenset:
    return frozenset(labels)


class Mode(str, enum.Enum):
    ACTIVE = "active"
    REST = "rest"


@dataclass(frozen=True)
class Task:
    id: TaskId
    pickup: Point
    delivery: Point
    load_time: float = 0.0
    unload_time: float = 0.0
    delivery_time: float = 0.0
    required: frozenset = frozenset()
    release_time: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "pickup", Point.of(self.pickup))
        object.__setattr__(self, "delivery", Point.of(self.delivery))
        object.__setattr__(self, "required", frozenset(self.required))


@dataclass(frozen=True)
class Robot:
    """A fleet member.

    ``ready_at`` is the earliest time the robot can start a new task from
    ``position``; busy robots get their projected post-task state here when a
    plan is recomputed mid-run.
    """

    id: TaskId
    position: Point
    max_speed: float = 1.0
    skills: frozenset = frozenset()
    mode: Mode = Mode.ACTIVE
    depot: Point | None = None
    ready_at: float = -math.inf

    def __post_init__(self):
        object.__setattr__(self, "position", Point.of(self.position))
        object.__setattr__(self, "skills", frozenset(self.skills))
        object.__setattr__(self, "mode", Mode(self.mode))
        depot = self.position if self.depot is None else Point.of(self.depot)
        object.__setattr__(self, "depot", depot)

    def activated(self) -> "Robot":
        return replace(self, mode=Mode.ACTIVE, position=self.depot)

    def rested(self) -> "Robot":
        return replace(self, mode=Mode.REST, depot=self.position, ready_at=-math.inf)


@dataclass(frozen=True)
class PickUp:
    task: TaskId
    location: Point
    # pick-up has no fixed time: the robot goes as early as it can


@dataclass(frozen=True)
class Deliver:
    task: TaskId
    location: Point
    deliver_at: float


@dataclass(frozen=True)
class Trajectory:
    robot: TaskId
    events: tuple = ()

    @property
    def tasks(self) -> list:
        return [e.task for e in self.events if isinstance(e, Deliver)]

    def check(self) -> None:
        for i, e in enumerate(self.events):
            expected = PickUp if i % 2 == 0 else Deliver
            if not isinstance(e, expected):
                raise ValueError(f"event {i} of robot {self.robot} should be {expected.__name__}")
            if i % 2 == 1 and e.task != self.events[i - 1].task:
                raise ValueError(f"pick-up/deliver mismatch in robot {self.robot}")
        times = [e.deliver_at for e in self.events if isinstance(e, Deliver)]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError(f"delivery times of robot {self.robot} are not strictly increasing")


@dataclass
class Scenario:
    map: object
    robots: list = field(default_factory=list)
    reserve: list = field(default_factory=list)
    tasks: list = field(default_factory=list)
    kappa: float = DEFAULT_KAPPA
    epoch: float = 0.0
    map_spec: dict | None = None


def quality_classes(robots: Iterable[Robot]) -> list:
    """Distinct skill sets among ``robots``, in a stable sorted order."""
    distinct = {r.skills for r in robots}
    return sorted(distinct, key=lambda s: (len(s), sorted(map(str, s))))


def sort_tasks_by_deadline(tasks: Iterable[Task]) -> list:
    return sorted(tasks, key=lambda t: (t.delivery_time, _id_key(t.id)))


def _id_key(task_id):
    # ints before strings; numeric order among ints
    return (0, task_id, "") if isinstance(task_id, int) else (1, 0, str(task_id))


def validate_scenario(s: Scenario) -> list[str]:
    out = []
    world = s.map
    for r in list(s.robots) + list(s.reserve):
        if not r.max_speed > 0:
            out.append(f"robot {r.id}: max_speed must be positive")
        if not world.is_free(r.position):
            out.append(f"robot {r.id}: position {tuple(r.position)} is not on a free cell")
    for r in s.reserve:
        if r.mode is not Mode.REST:
            out.append(f"reserve robot {r.id}: must be in rest mode")
        if r.position != r.depot:
            out.append(f"reserve robot {r.id}: rest robot must sit at its depot")
    ids = [r.id for r in list(s.robots) + list(s.reserve)]
    if len(set(ids)) != len(ids):
        out.append("robot ids are not unique")
    tids = [t.id for t in s.tasks]
    if len(set(tids)) != len(tids):
        out.append("task ids are not unique")
    everyone = list(s.robots) + list(s.reserve)
    for t in s.tasks:
        if t.load_time < 0 or t.unload_time < 0:
            out.append(f"task {t.id}: negative load/unload time")
        if not t.delivery_time > t.release_time:
            out.append(f"task {t.id}: delivery_time must exceed release_time")
        if not any(t.required <= r.skills for r in everyone):
            out.append(f"task {t.id}: no robot has required skills {sorted(map(str, t.required))}")
        for name, p in (("pickup", t.pickup), ("delivery", t.delivery)):
            if not world.is_free(p):
                out.append(f"task {t.id}: {name} {tuple(p)} is not on a free cell")
    if not s.kappa > 2 * world.diameter():
        out.append(f"kappa {s.kappa} too small: must exceed twice the map diameter ({2 * world.diameter():.4g})")
    return out


# --------------------------------------------------------------------------
# scenario files


class ScenarioError(ValueError):
    pass


def _point(v, where):
    try:
        return Point.of(v)
    except (TypeError, ValueError):
        raise ScenarioError(f"{where}: expected [x, y], got {v!r}") from None


def _robot(d: dict, where: str, default_mode: str) -> Robot:
    try:
        return Robot(
            id=d["id"],
            position=_point(d["position"], f"{where}.position"),
            max_speed=float(d.get("max_speed", 1.0)),
            skills=frozenset(d.get("skills", ())),
            mode=Mode(d.get("mode", default_mode)),
            depot=_point(d["depot"], f"{where}.depot") if d.get("depot") is not None else None,
        )
    except KeyError as exc:
        raise ScenarioError(f"{where}: missing field {exc.args[0]!r}") from None


def _task(d: dict, where: str) -> Task:
    try:
        return Task(
            id=d["id"],
            pickup=_point(d["pickup"], f"{where}.pickup"),
            delivery=_point(d["delivery"], f"{where}.delivery"),
            load_time=float(d.get("load_time", 0.0)),
            unload_time=float(d.get("unload_time", 0.0)),
            delivery_time=float(d["delivery_time"]),
            required=frozenset(d.get("required", ())),
            release_time=float(d.get("release_time", 0.0)),
        )
    except KeyError as exc:
        raise ScenarioError(f"{where}: missing field {exc.args[0]!r}") from None


def build_map(doc: dict, base: Path | None = None):
    kind = doc.get("kind", "euclidean")
    if kind == "euclidean":
        b = doc.get("bounds", [0.0, 0.0, 10.0, 10.0])
        return EuclideanMap(*map(float, b))
    if kind == "grid":
        if "text" in doc:
            return load_map(doc["text"])
        path = Path(doc["file"])
        if base is not None and not path.is_absolute():
            path = base / path
        return load_map(path.read_text())
    if kind == "table":
        return TableMap.from_rows(doc["distances"])
    raise ScenarioError(f"unknown map kind {kind!r}")


def scenario_from_dict(doc: dict, base: Path | None = None) -> Scenario:
    for key in ("map", "robots", "tasks"):
        if key not in doc:
            raise ScenarioError(f"missing top-level key {key!r}")
    return Scenario(
        map=build_map(doc["map"], base),
        robots=[_robot(r, f"robots[{i}]", "active") for i, r in enumerate(doc["robots"])],
        reserve=[_robot(r, f"reserve[{i}]", "rest") for i, r in enumerate(doc.get("reserve", []))],
        tasks=[_task(t, f"tasks[{i}]") for i, t in enumerate(doc["tasks"])],
        kappa=float(doc.get("kappa", DEFAULT_KAPPA)),
        epoch=float(doc.get("epoch", 0.0)),
        map_spec=doc["map"],
    )


def load_scenario(path) -> Scenario:
    path = Path(path)
    text = path.read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"line {exc.lineno}: {exc.msg}") from None
    return scenario_from_dict(doc, path.parent)


def _skills_out(s):
    return sorted(s, key=str)


def robot_to_dict(r: Robot) -> dict:
    return {"id": r.id, "position": list(r.position), "max_speed": r.max_speed,
            "skills": _skills_out(r.skills), "mode": r.mode.value, "depot": list(r.depot)}


def task_to_dict(t: Task) -> dict:
    return {"id": t.id, "pickup": list(t.pickup), "delivery": list(t.delivery),
            "load_time": t.load_time, "unload_time": t.unload_time,
            "delivery_time": t.delivery_time, "required": _skills_out(t.required),
            "release_time": t.release_time}


def map_to_dict(world) -> dict:
    if isinstance(world, EuclideanMap):
        return {"kind": "euclidean", "bounds": list(world.bounds())}
    if isinstance(world, GridMap):
        return {"kind": "grid", "text": dump_map(world)}
    if isinstance(world, TableMap):
        seen, rows = set(), []
        for (a, b), d in sorted(world.entries.items()):
            if (b, a) not in seen:
                seen.add((a, b))
                rows.append([list(a), list(b), d])
        return {"kind": "table", "distances": rows}
    raise TypeError(f"cannot serialise map {type(world).__name__}")


def scenario_to_dict(s: Scenario) -> dict:
    return {
        "map": s.map_spec if s.map_spec is not None else map_to_dict(s.map),
        "robots": [robot_to_dict(r) for r in s.robots],
        "reserve": [robot_to_dict(r) for r in s.reserve],
        "tasks": [task_to_dict(t) for t in s.tasks],
        "kappa": s.kappa,
        "epoch": s.epoch,
    }


def save_scenario(s: Scenario, path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(s), indent=2) + "\n")
