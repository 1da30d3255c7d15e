"""Maps and the shortest-feasible-path distance oracle.

Three map kinds share one duck-typed surface (``path``, ``distance``,
``is_free``, ``bounds``, ``diameter``, ``sample_free``, ``snap``):

* :class:`GridMap` - 8-connected occupancy grid, octile step costs, Dijkstra.
* :class:`EuclideanMap` - obstacle-free plane with straight-line distances,
  used for synthetic benchmarks.
* :class:`TableMap` - explicit symmetric distance table between named
  points, used to replay measured distances (no geometry needed).
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from ._accel import kernel

SQRT2 = math.sqrt(2.0)

#: Distance returned when no feasible path exists.
UNREACHABLE = math.inf


class Point(NamedTuple):
    x: float
    y: float

    @classmethod
    def of(cls, value) -> "Point":
        if isinstance(value, Point):
            return value
        x, y = value
        p = cls(float(x), float(y))
        if not (math.isfinite(p.x) and math.isfinite(p.y)):
            raise ValueError(f"non-finite point {value!r}")
        return p


class MapParseError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class DomainError(ValueError):
    """A query point is outside the map or on an occupied cell."""


class UnreachableError(RuntimeError):
    """No feasible path connects the two query points."""


def _dist(a: Point, b: Point) -> float:
    return math.hypot(a.x - b.x, a.y - b.y)


def polyline_length(points) -> float:
    return sum(_dist(points[i], points[i + 1]) for i in range(len(points) - 1))


# 8-neighbourhood in tie-break order: E, N, W, S, NE, NW, SW, SE.
# Rows grow downward, so "north" is dr = -1.
_DR = np.array([0, -1, 0, 1, -1, -1, 1, 1], dtype=np.int64)
_DC = np.array([1, 0, -1, 0, 1, -1, -1, 1], dtype=np.int64)


@kernel
def grid_dijkstra(occupied, height, width, source, dr, dc):
    """Single-source octile Dijkstra on a flattened occupancy grid.

    Path lengths are tracked as integer (straight, diagonal) step counts so
    that keys ``straight + diagonal * sqrt(2)`` never accumulate rounding.
    Diagonal moves may not cut an occupied corner.  Returns the two count
    arrays (``-1`` where unreached) and the predecessor array.
    """
    n = height * width
    sq2 = np.sqrt(2.0)
    straight = np.full(n, -1, dtype=np.int64)
    diagonal = np.full(n, -1, dtype=np.int64)
    pred = np.full(n, -1, dtype=np.int64)
    done = np.zeros(n, dtype=np.bool_)
    straight[source] = 0
    diagonal[source] = 0
    seq = 0
    heap = [(0.0, seq, source)]
    while len(heap) > 0:
        key, _, cell = heapq.heappop(heap)
        if done[cell]:
            continue
        done[cell] = True
        r = cell // width
        c = cell % width
        for k in range(8):
            nr = r + dr[k]
            nc = c + dc[k]
            if nr < 0 or nr >= height or nc < 0 or nc >= width:
                continue
            nb = nr * width + nc
            if occupied[nb] or done[nb]:
                continue
            is_diag = k >= 4
            if is_diag and (occupied[r * width + nc] or occupied[nr * width + c]):
                continue
            ns = straight[cell] + (0 if is_diag else 1)
            nd = diagonal[cell] + (1 if is_diag else 0)
            nkey = ns + nd * sq2
            if straight[nb] < 0 or nkey < straight[nb] + diagonal[nb] * sq2:
                straight[nb] = ns
                diagonal[nb] = nd
                pred[nb] = cell
                seq += 1
                heapq.heappush(heap, (nkey, seq, nb))
    return straight, diagonal, pred


@dataclass(eq=False)
class GridMap:
    """Occupancy grid; cell (r, c) centre sits at origin + (c, -r) * resolution.

    Row 0 is the top row, so world y decreases with the row index.
    """

    width: int
    height: int
    resolution: float
    occupancy: np.ndarray
    origin: Point = Point(0.0, 0.0)
    _fields: dict = field(default_factory=dict, repr=False)
    _memo: dict = field(default_factory=dict, repr=False)

    kind = "grid"

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("grid must be at least 1x1")
        if not self.resolution > 0:
            raise ValueError("resolution must be positive")
        self.occupancy = np.asarray(self.occupancy, dtype=bool).reshape(self.height, self.width)
        self.origin = Point.of(self.origin)
        self._flat = np.ascontiguousarray(self.occupancy.ravel())

    # geometry -------------------------------------------------------------
    def cell_of(self, p) -> tuple[int, int] | None:
        """Nearest cell centre; exact midpoints round toward lower indices."""
        p = Point.of(p)
        c = math.ceil((p.x - self.origin.x) / self.resolution - 0.5)
        r = math.ceil((self.origin.y - p.y) / self.resolution - 0.5)
        if 0 <= r < self.height and 0 <= c < self.width:
            return r, c
        return None

    def center(self, r: int, c: int) -> Point:
        return Point(self.origin.x + c * self.resolution, self.origin.y - r * self.resolution)

    def is_free(self, p) -> bool:
        cell = self.cell_of(p)
        return cell is not None and not self.occupancy[cell]

    def bounds(self) -> tuple[float, float, float, float]:
        h = self.resolution / 2
        return (self.origin.x - h, self.origin.y - (self.height - 1) * self.resolution - h,
                self.origin.x + (self.width - 1) * self.resolution + h, self.origin.y + h)

    def diameter(self) -> float:
        x0, y0, x1, y1 = self.bounds()
        return math.hypot(x1 - x0, y1 - y0)

    def free_cells(self) -> np.ndarray:
        return np.flatnonzero(~self._flat)

    def sample_free(self, rng: np.random.Generator) -> Point:
        cells = self.free_cells()
        idx = int(cells[rng.integers(len(cells))])
        return self.center(idx // self.width, idx % self.width)

    def snap(self, p) -> Point:
        """Nearest free cell centre (ties broken by row-major index)."""
        cell = self.cell_of(p)
        if cell is not None and not self.occupancy[cell]:
            return Point.of(p)
        p = Point.of(p)
        cells = self.free_cells()
        if len(cells) == 0:
            raise DomainError("map has no free cells")
        rows, cols = np.divmod(cells, self.width)
        xs = self.origin.x + cols * self.resolution
        ys = self.origin.y - rows * self.resolution
        i = int(np.argmin(np.hypot(xs - p.x, ys - p.y)))
        return Point(float(xs[i]), float(ys[i]))

    # planning -------------------------------------------------------------
    def _index(self, p: Point) -> int:
        cell = self.cell_of(p)
        if cell is None:
            raise DomainError(f"{tuple(p)} is outside the map")
        if self.occupancy[cell]:
            raise DomainError(f"{tuple(p)} lies on an occupied cell")
        return cell[0] * self.width + cell[1]

    def _field(self, source: int):
        f = self._fields.get(source)
        if f is None:
            f = grid_dijkstra(self._flat, self.height, self.width, source, _DR, _DC)
            self._fields[source] = f
        return f

    def _canonical(self, a: Point, b: Point):
        ia, ib = self._index(a), self._index(b)
        if (ia, a.x, a.y) <= (ib, b.x, b.y):
            return a, b, ia, ib, False
        return b, a, ib, ia, True

    def _cells(self, ia: int, ib: int) -> list[int] | None:
        straight, _, pred = self._field(ia)
        if straight[ib] < 0:
            return None
        cells = [ib]
        while cells[-1] != ia:
            cells.append(int(pred[cells[-1]]))
        cells.reverse()
        return cells

    def path(self, a, b) -> list[Point]:
        a, b = Point.of(a), Point.of(b)
        if a == b:
            self._index(a)
            return [a]
        s, t, i_s, i_t, flipped = self._canonical(a, b)
        cells = self._cells(i_s, i_t)
        if cells is None:
            raise UnreachableError(f"no path from {tuple(a)} to {tuple(b)}")
        pts = [s] + [self.center(c // self.width, c % self.width) for c in cells[1:-1]] + [t]
        return pts[::-1] if flipped else pts

    def distance(self, a, b) -> float:
        a, b = Point.of(a), Point.of(b)
        if a == b:
            self._index(a)
            return 0.0
        s, t, i_s, i_t, _ = self._canonical(a, b)
        key = (s, t)
        d = self._memo.get(key)
        if d is None:
            cells = self._cells(i_s, i_t)
            if cells is None:
                d = UNREACHABLE
            else:
                pts = [s] + [self.center(c // self.width, c % self.width) for c in cells[1:-1]] + [t]
                d = polyline_length(pts)
            self._memo[key] = d
        return d

    def octile(self, a, b) -> float:
        """Grid-metric length between the cells containing ``a`` and ``b``."""
        ia, ib = self._index(Point.of(a)), self._index(Point.of(b))
        straight, diagonal, _ = self._field(min(ia, ib))
        j = max(ia, ib)
        if straight[j] < 0:
            return UNREACHABLE
        return self.resolution * (straight[j] + diagonal[j] * SQRT2)

    def with_obstacle(self, r: int, c: int) -> "GridMap":
        occ = self.occupancy.copy()
        occ[r, c] = True
        return GridMap(self.width, self.height, self.resolution, occ, self.origin)


@dataclass(eq=False)
class EuclideanMap:
    """Obstacle-free rectangle; every pair of points is joined by a segment."""

    xmin: float = 0.0
    ymin: float = 0.0
    xmax: float = 10.0
    ymax: float = 10.0

    kind = "euclidean"

    def is_free(self, p) -> bool:
        p = Point.of(p)
        return self.xmin <= p.x <= self.xmax and self.ymin <= p.y <= self.ymax

    def _check(self, p) -> Point:
        p = Point.of(p)
        if not self.is_free(p):
            raise DomainError(f"{tuple(p)} is outside the map")
        return p

    def bounds(self):
        return (self.xmin, self.ymin, self.xmax, self.ymax)

    def diameter(self) -> float:
        return math.hypot(self.xmax - self.xmin, self.ymax - self.ymin)

    def sample_free(self, rng: np.random.Generator) -> Point:
        return Point(float(rng.uniform(self.xmin, self.xmax)), float(rng.uniform(self.ymin, self.ymax)))

    def snap(self, p) -> Point:
        p = Point.of(p)
        return Point(min(max(p.x, self.xmin), self.xmax), min(max(p.y, self.ymin), self.ymax))

    def path(self, a, b) -> list[Point]:
        a, b = self._check(a), self._check(b)
        return [a] if a == b else [a, b]

    def distance(self, a, b) -> float:
        a, b = self._check(a), self._check(b)
        return _dist(a, b)


@dataclass(eq=False)
class TableMap:
    """Distances looked up from an explicit symmetric table.

    Missing pairs are reported as unreachable.  Motion between table points
    is drawn as a straight segment traversed in ``distance / speed`` time.
    """

    entries: dict = field(default_factory=dict)

    kind = "table"

    @classmethod
    def from_rows(cls, rows) -> "TableMap":
        table = cls()
        for a, b, d in rows:
            table.add(a, b, d)
        return table

    def add(self, a, b, d: float):
        a, b = Point.of(a), Point.of(b)
        self.entries[(a, b)] = float(d)
        self.entries[(b, a)] = float(d)

    def points(self) -> set:
        return {p for pair in self.entries for p in pair}

    def is_free(self, p) -> bool:
        return True

    def bounds(self):
        pts = self.points() or {Point(0.0, 0.0)}
        xs = [p.x for p in pts]
        ys = [p.y for p in pts]
        return (min(xs), min(ys), max(xs), max(ys))

    def diameter(self) -> float:
        finite = [d for d in self.entries.values() if math.isfinite(d)]
        return max(finite, default=0.0)

    def sample_free(self, rng):
        pts = sorted(self.points())
        return pts[int(rng.integers(len(pts)))]

    def snap(self, p) -> Point:
        return Point.of(p)

    def path(self, a, b) -> list[Point]:
        a, b = Point.of(a), Point.of(b)
        if a == b:
            return [a]
        if not math.isfinite(self.distance(a, b)):
            raise UnreachableError(f"no table entry for {tuple(a)} -> {tuple(b)}")
        return [a, b]

    def distance(self, a, b) -> float:
        a, b = Point.of(a), Point.of(b)
        if a == b:
            return 0.0
        return self.entries.get((a, b), UNREACHABLE)


def load_map(text: str) -> GridMap:
    """Parse the ASCII grid format (``resolution``, optional ``origin``, rows)."""
    lines = text.splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines or not lines[0].split() or lines[0].split()[0] != "resolution":
        raise MapParseError(1, "expected 'resolution <float>' header")
    parts = lines[0].split()
    try:
        if len(parts) != 2:
            raise ValueError
        resolution = float(parts[1])
    except ValueError:
        raise MapParseError(1, f"bad resolution line {lines[0]!r}") from None
    if not resolution > 0:
        raise MapParseError(1, "resolution must be positive")
    start = 1
    origin = None
    if len(lines) > 1 and lines[1].split()[:1] == ["origin"]:
        parts = lines[1].split()
        try:
            if len(parts) != 3:
                raise ValueError
            origin = Point(float(parts[1]), float(parts[2]))
        except ValueError:
            raise MapParseError(2, f"bad origin line {lines[1]!r}") from None
        start = 2
    rows = []
    for lineno, line in enumerate(lines[start:], start=start + 1):
        row = line.rstrip("\r")
        bad = set(row) - {".", "#"}
        if bad:
            raise MapParseError(lineno, f"unknown character {sorted(bad)[0]!r}")
        if rows and len(row) != len(rows[0]):
            raise MapParseError(lineno, f"ragged row: {len(row)} cells, expected {len(rows[0])}")
        if not row:
            raise MapParseError(lineno, "empty row")
        rows.append(row)
    if not rows:
        raise MapParseError(start + 1, "map has no rows")
    occ = np.array([[ch == "#" for ch in row] for row in rows], dtype=bool)
    height, width = occ.shape
    if origin is None:
        # default: cell (height-1, 0) centre at (0, 0), y up
        origin = Point(0.0, (height - 1) * resolution)
    return GridMap(width, height, resolution, occ, origin)


def dump_map(grid: GridMap) -> str:
    lines = [f"resolution {grid.resolution!r}", f"origin {grid.origin.x!r} {grid.origin.y!r}"]
    lines += ["".join("#" if v else "." for v in row) for row in grid.occupancy]
    return "\n".join(lines) + "\n"


def shortest_path(world, a, b) -> list[Point]:
    return world.path(a, b)


def path_distance(world, a, b) -> float:
    return world.distance(a, b)
