"""Independent reference implementations used only by the tests."""
import itertools
import math

import networkx as nx
import numpy as np

from jitd.costs import CostKind


def grid_graph(grid):
    """8-connected networkx graph of free cells, no corner cutting."""
    g = nx.Graph()
    h, w = grid.height, grid.width
    occ = grid.occupancy
    for r in range(h):
        for c in range(w):
            if occ[r, c]:
                continue
            g.add_node((r, c))
            for dr, dc in ((0, 1), (1, 0), (1, 1), (1, -1)):
                nr, nc = r + dr, c + dc
                if not (0 <= nr < h and 0 <= nc < w) or occ[nr, nc]:
                    continue
                if dr and dc and (occ[r, nc] or occ[nr, c]):
                    continue
                g.add_edge((r, c), (nr, nc), weight=grid.resolution * math.hypot(dr, dc))
    return g


def grid_octile(grid, a, b):
    g = grid_graph(grid)
    try:
        return nx.dijkstra_path_length(g, grid.cell_of(a), grid.cell_of(b))
    except nx.NetworkXNoPath:
        return math.inf


def brute_force_assignment(cm):
    """Minimum objective over every (first, chain) structure obeying
    each-task-once, one-first-per-robot and one-successor-per-task.

    Kappa counts at ``cm.kappa``.  Returns ``math.inf`` if no structure
    avoids Forbidden cells.
    """
    m, n = cm.n_tasks, len(cm.robot_ids)
    n_cls = len(cm.classes)
    options = []
    for j in range(m):
        opts = []
        for i in range(n):
            c = cm.first(i, j)
            opts.append((("r", i), c.value))
        for k in range(min(j, m - 1)):
            cells = [cm.subsequent(q, k, j) for q in range(n_cls)]
            usable = [c for c in cells if c.kind != CostKind.FORBIDDEN]
            if usable:
                opts.append((("t", k), min(c.value for c in usable)))
        options.append(opts)
    best = math.inf

    def rec(j, used, total):
        nonlocal best
        if total >= best:
            return
        if j == m:
            best = total
            return
        for key, val in options[j]:
            if key in used:
                continue
            used.add(key)
            rec(j + 1, used, total + val)
            used.discard(key)

    rec(0, set(), 0.0)
    return best


def brute_force_small_lsap(values):
    """Exhaustive rectangular assignment of columns to distinct rows."""
    rows, cols = values.shape
    best, arg = math.inf, None
    for perm in itertools.permutations(range(rows), cols):
        s = sum(values[r, c] for c, r in enumerate(perm))
        if s < best:
            best, arg = s, list(perm)
    return best, arg


def replay(robot, tasks, dist, now=0.0):
    """Earliest-arrival replay of a task sequence; returns arrival times at delivery."""
    pos, clock, out = robot.position, max(now, robot.ready_at), []
    for t in tasks:
        clock += (dist(pos, t.pickup) + dist(t.pickup, t.delivery)) / robot.max_speed + t.load_time
        out.append(clock)
        clock = max(clock, t.delivery_time) + t.unload_time
        pos = t.delivery
    return out


def engineered_two_pass(seed, q):
    """One active robot and ``q + 1`` near-simultaneous, mutually distant tasks.

    The robot can serve one task; chaining is too slow, so the first solve
    leaves exactly ``q`` tasks on kappa.  Every task has a skilled reserve
    parked within 2 m of its pick-up, which satisfies the two-pass premise.
    """
    from jitd.model import Mode, Robot, Task
    from jitd.worldmap import EuclideanMap

    rng = np.random.default_rng(seed)
    world = EuclideanMap(0, 0, 20, 20)
    pickups = []
    while len(pickups) < q + 1:
        p = rng.uniform(2, 18, 2)
        if all(np.hypot(*(p - o)) >= 8 for o in pickups):
            pickups.append(p)
    tasks, reserve = [], []
    for j, p in enumerate(pickups):
        need = frozenset({"arm"}) if rng.random() < 0.4 else frozenset()
        ang = rng.uniform(0, 2 * np.pi, 2)
        d = p + rng.uniform(0.5, 2.0) * np.array([np.cos(ang[0]), np.sin(ang[0])])
        tasks.append(Task(f"T{j}", tuple(p), tuple(np.clip(d, 0, 20)), 0.0, 0.0, 25.0 + 0.5 * j, need))
        depot = p + rng.uniform(0.0, 2.0) * np.array([np.cos(ang[1]), np.sin(ang[1])])
        reserve.append(Robot(f"S{j}", tuple(np.clip(depot, 0, 20)), 1.0, need | {"base"}, Mode.REST))
    for extra in range(2):
        reserve.append(Robot(f"X{extra}", tuple(rng.uniform(0, 20, 2)), 1.0,
                             frozenset({"arm"}) if rng.random() < 0.5 else frozenset(), Mode.REST))
    home = pickups[0] + np.array([1.0, 0.0])
    fleet = [Robot("A", tuple(np.clip(home, 0, 20)), 1.0, frozenset({"arm"}))]
    order = rng.permutation(len(reserve))
    return world, fleet, [reserve[i] for i in order], tasks


def random_heterogeneous(seed):
    """Mixed skills and speeds; every task has a skilled reserve at its pick-up."""
    from jitd.model import Mode, Robot, Task

    rng = np.random.default_rng(seed)
    m = int(rng.integers(1, 9))
    labels = [frozenset(), frozenset({"a"}), frozenset({"a", "b"})]
    tasks = [Task(j, tuple(rng.uniform(0, 20, 2)), tuple(rng.uniform(0, 20, 2)),
                  float(rng.uniform(0, 2)), float(rng.uniform(0, 2)), float(rng.uniform(40, 200)),
                  labels[int(rng.integers(3))]) for j in range(m)]
    fleet = [Robot(f"A{i}", tuple(rng.uniform(0, 20, 2)), float(rng.uniform(0.5, 1.5)),
                   labels[int(rng.integers(3))]) for i in range(int(rng.integers(1, 4)))]
    reserve = [Robot(f"S{t.id}", t.pickup, 1.0, frozenset({"a", "b"}), Mode.REST) for t in tasks]
    return fleet, reserve, tasks
