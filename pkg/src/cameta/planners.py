"""Single-agent planning: distance fields, A* with edge penalties, diversified routes."""

import heapq
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import InvalidParams, NoPath, OccupiedCell, OccupiedGoal, OutOfBounds
from .gridworld import MOVES


@dataclass(frozen=True)
class Path:
    """Cells visited one per timestep; ``cells[k]`` is occupied at ``start_time + k``.

    Consecutive cells are identical (wait) or 4-adjacent. Before ``start_time``
    the agent sits on the first cell and after the last entry it rests on the
    last cell.
    """

    cells: tuple
    start_time: int = 0

    def __post_init__(self):
        cells = tuple((int(c[0]), int(c[1])) for c in self.cells)
        if not cells:
            raise InvalidParams("path must contain at least one cell")
        for a, b in zip(cells, cells[1:]):
            if abs(a[0] - b[0]) + abs(a[1] - b[1]) > 1:
                raise InvalidParams(f"cells {a} -> {b} are not adjacent")
        object.__setattr__(self, "cells", cells)

    def __len__(self):
        return len(self.cells)

    @property
    def start(self):
        return self.cells[0]

    @property
    def goal(self):
        return self.cells[-1]

    @property
    def arrival(self):
        """Timestep at which the last cell is first occupied."""
        return self.start_time + len(self.cells) - 1

    def at(self, t):
        k = t - self.start_time
        if k <= 0:
            return self.cells[0]
        if k >= len(self.cells):
            return self.cells[-1]
        return self.cells[k]

    def edges(self):
        """Directed moves (u, v), waits excluded."""
        return [(a, b) for a, b in zip(self.cells, self.cells[1:]) if a != b]


def _check_free(grid_map, c, what):
    if not grid_map.in_bounds(c):
        raise OutOfBounds(f"{what} {c} outside the map")
    if not grid_map.is_free(c):
        raise OccupiedCell(f"{what} {c} is occupied")


def distance_field(grid_map, seeds):
    """Unit-step distances from ``{cell: offset}`` seeds, shape (height, width)."""
    idx = [grid_map.index(c) for c in seeds]
    vals = [int(v) for v in seeds.values()]
    d = kernels.grid_distances(grid_map.free_mask, grid_map.width, idx, vals)
    return d.reshape(grid_map.height, grid_map.width)


def dijkstra_field(grid_map, goal):
    """Exact 4-connected distance to ``goal`` for every cell, indexed ``[y, x]``.

    Occupied and unreachable cells hold ``inf``.
    """
    if not grid_map.in_bounds(goal):
        raise OutOfBounds(f"goal {goal} outside the map")
    if not grid_map.is_free(goal):
        raise OccupiedGoal(f"goal {goal} is occupied")
    return distance_field(grid_map, {goal: 0})


def astar(grid_map, start, goal, penalties=None):
    """Minimum-cost path; a move u->v costs ``penalties.get((u, v), 1.0)``.

    Manhattan distance stays admissible because every factor is >= 1.
    Ties on f break towards smaller h, then smaller (y, x); a node keeps the
    first parent that reached its best g, so neighbour order decides the rest.
    """
    _check_free(grid_map, start, "start")
    _check_free(grid_map, goal, "goal")
    penalties = penalties or {}
    gx, gy = goal
    w, h = grid_map.width, grid_map.height
    free = grid_map.grid == 0

    def heur(c):
        return abs(c[0] - gx) + abs(c[1] - gy)

    g = {start: 0.0}
    parent = {start: None}
    closed = set()
    h0 = heur(start)
    openq = [(h0, h0, start[1], start[0])]
    while openq:
        f, hc, y, x = heapq.heappop(openq)
        cur = (x, y)
        if cur in closed:
            continue
        if cur == goal:
            break
        closed.add(cur)
        gc = g[cur]
        for dx, dy in MOVES:
            nx, ny = x + dx, y + dy
            if not (0 <= nx < w and 0 <= ny < h) or not free[ny, nx]:
                continue
            nb = (nx, ny)
            if nb in closed:
                continue
            ng = gc + penalties.get((cur, nb), 1.0)
            if ng < g.get(nb, np.inf):
                g[nb] = ng
                parent[nb] = cur
                hn = heur(nb)
                heapq.heappush(openq, (ng + hn, hn, ny, nx))
    else:
        raise NoPath(f"no path from {start} to {goal}")
    if goal not in parent:
        raise NoPath(f"no path from {start} to {goal}")
    cells = []
    c = goal
    while c is not None:
        cells.append(c)
        c = parent[c]
    return Path(tuple(reversed(cells)))


def path_cost(path, penalties=None):
    penalties = penalties or {}
    return sum(penalties.get(e, 1.0) for e in path.edges())


def suggest_routes(grid_map, start, goal, k, penalty_factor=1.2):
    """Up to ``k`` distinct routes from repeated A* with growing edge penalties.

    Iteration i runs A* under the current penalties; afterwards every directed
    edge used by any route found so far is multiplied by ``penalty_factor``.
    Routes come back sorted by length, ties in discovery order.
    """
    if k < 1:
        raise InvalidParams("k must be >= 1")
    if penalty_factor < 1.0:
        raise InvalidParams("penalty_factor must be >= 1")
    penalties = {}
    found = []
    seen = set()
    for _ in range(k):
        p = astar(grid_map, start, goal, penalties)
        if p.cells not in seen:
            seen.add(p.cells)
            found.append(p)
        used = {e for q in found for e in q.edges()}
        for e in used:
            penalties[e] = penalties.get(e, 1.0) * penalty_factor
    order = sorted(range(len(found)), key=lambda i: (len(found[i]), i))
    return [found[i] for i in order]
