import json

import pytest

from jitd.model import (Mode, Robot, Scenario, ScenarioError, Task, Trajectory, Deliver, PickUp,
                        load_scenario, quality_classes, save_scenario, scenario_from_dict,
                        scenario_to_dict, sort_tasks_by_deadline, validate_scenario)
from jitd.worldmap import EuclideanMap


def test_table1_scenario_is_valid(data_dir):
    sc = load_scenario(data_dir / "table1_scenario.json")
    assert validate_scenario(sc) == []
    assert [t.id for t in sort_tasks_by_deadline(sc.tasks)] == [f"T{i}" for i in range(7)]


def test_missing_skill_is_reported():
    sc = Scenario(EuclideanMap(), [Robot("a", (0, 0))], [],
                  [Task("t", (1, 1), (2, 2), delivery_time=50, required={"arm"})])
    problems = validate_scenario(sc)
    assert len(problems) == 1 and "t" in problems[0] and "arm" in problems[0]


def test_small_kappa_is_reported():
    sc = Scenario(EuclideanMap(0, 0, 10, 10), [Robot("a", (0, 0))], [],
                  [Task("t", (1, 1), (2, 2), delivery_time=50)], kappa=1)
    assert any("kappa" in p for p in validate_scenario(sc))


def test_other_invariants_are_reported():
    sc = Scenario(EuclideanMap(), [Robot("a", (0, 0), max_speed=0), Robot("a", (20, 0))],
                  [Robot("r", (1, 1), mode=Mode.ACTIVE)],
                  [Task("t", (1, 1), (2, 2), load_time=-1, delivery_time=5, release_time=6)])
    text = " | ".join(validate_scenario(sc))
    for needle in ("max_speed", "not on a free cell", "rest mode", "not unique", "negative", "exceed"):
        assert needle in text


def test_sort_tie_break_and_empty():
    a = Task(2, (0, 0), (1, 1), delivery_time=10)
    b = Task(1, (0, 0), (1, 1), delivery_time=10)
    c = Task("x", (0, 0), (1, 1), delivery_time=10)
    assert [t.id for t in sort_tasks_by_deadline([c, a, b])] == [1, 2, "x"]
    assert sort_tasks_by_deadline([]) == []
    once = sort_tasks_by_deadline([c, a, b])
    assert sort_tasks_by_deadline(once) == once


def test_rest_and_activate():
    r = Robot("a", (1, 2), depot=(5, 5))
    assert r.activated().position == (5, 5)
    parked = Robot("a", (3, 3)).rested()
    assert parked.mode is Mode.REST and parked.depot == (3, 3)


def test_trajectory_check():
    good = Trajectory("a", (PickUp(1, (0, 0)), Deliver(1, (1, 1), 5.0),
                            PickUp(2, (0, 0)), Deliver(2, (1, 1), 7.0)))
    good.check()
    assert good.tasks == [1, 2]
    with pytest.raises(ValueError):
        Trajectory("a", (PickUp(1, (0, 0)), Deliver(1, (1, 1), 5.0),
                         PickUp(2, (0, 0)), Deliver(2, (1, 1), 5.0))).check()
    with pytest.raises(ValueError):
        Trajectory("a", (Deliver(1, (1, 1), 5.0),)).check()


def test_quality_classes_are_distinct_skill_sets():
    robots = [Robot(1, (0, 0), skills={1}), Robot(2, (0, 0), skills={1}), Robot(3, (0, 0), skills={1, 2})]
    assert quality_classes(robots) == [frozenset({1}), frozenset({1, 2})]


@pytest.mark.parametrize("name", ["table1_scenario.json", "hardware_scenario.json"])
def test_round_trip(tmp_path, data_dir, name):
    sc = load_scenario(data_dir / name)
    doc = scenario_to_dict(sc)
    out = tmp_path / "s.json"
    save_scenario(scenario_from_dict(doc, data_dir), out)
    again = scenario_to_dict(scenario_from_dict(json.loads(out.read_text()), data_dir))
    assert again == doc


def test_malformed_json_reports_line(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "map": {"kind": "euclidean"},\n  "robots": [,]\n}\n')
    with pytest.raises(ScenarioError, match="line 3"):
        load_scenario(p)


def test_missing_field(tmp_path):
    with pytest.raises(ScenarioError, match="delivery_time"):
        scenario_from_dict({"map": {}, "robots": [], "tasks": [{"id": 1, "pickup": [0, 0], "delivery": [1, 1]}]})
