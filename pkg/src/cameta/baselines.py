"""Reference planners: optimal conflict-based search and priority inheritance with backtracking."""

import heapq
import itertools
from dataclasses import dataclass

import numpy as np

from .errors import BudgetExceeded, InvalidParams, Timeout, Unsolvable
from .gridworld import MOVES
from .planners import Path, dijkstra_field
from .simulator import ConflictKind, ExecutionTrace, detect_conflicts

CBS_MAX_AGENTS = 6
CBS_MAX_SIDE = 12
CBS_NODE_CAP = 20000
JOINT_CHECK_CAP = 200_000


@dataclass(frozen=True)
class JointPlan:
    paths: tuple

    @property
    def soc(self):
        return sum(p.arrival for p in self.paths)

    @property
    def makespan(self):
        return max((p.arrival for p in self.paths), default=0)


# ---------------------------------------------------------------------------
# CBS
# ---------------------------------------------------------------------------

def _succ(grid_map, c):
    out = [c]
    for dx, dy in MOVES:
        v = (c[0] + dx, c[1] + dy)
        if grid_map.is_free(v):
            out.append(v)
    return out


def _low_level(grid_map, start, goal, field, vcons, econs):
    """Shortest space-time path under constraints; agent then rests at goal.

    ``vcons``: set of (cell, t) the agent may not occupy; ``econs``: set of
    (u, v, t) moves it may not complete at t.
    """
    if not np.isfinite(field[start[1], start[0]]):
        return None
    goal_block = max((t for c, t in vcons if c == goal), default=-1)
    last = max([t for _, t in vcons] + [t for _, _, t in econs] + [0])
    horizon = last + int(np.isfinite(field).sum()) + 1
    h0 = field[start[1], start[0]]
    openq = [(h0, h0, 0, start[1], start[0])]
    parent = {(start, 0): None}
    while openq:
        f, h, t, y, x = heapq.heappop(openq)
        c = (x, y)
        if c == goal and t > goal_block:
            cells = []
            key = (c, t)
            while key is not None:
                cells.append(key[0])
                key = parent[key]
            return Path(tuple(reversed(cells)))
        if t >= horizon:
            continue
        for v in _succ(grid_map, c):
            nt = t + 1
            if (v, nt) in parent or (v, nt) in vcons or (c, v, nt) in econs:
                continue
            hv = field[v[1], v[0]]
            if not np.isfinite(hv):
                continue
            parent[(v, nt)] = (c, t)
            heapq.heappush(openq, (nt + hv, hv, nt, v[1], v[0]))
    return None


def _joint_reachable(grid_map, starts, goals):
    """Breadth-first search over joint states; None when the space is too big."""
    free = grid_map.free_cells()
    if len(free) ** len(starts) > JOINT_CHECK_CAP:
        return None
    start, goal = tuple(starts), tuple(goals)
    seen = {start}
    frontier = [start]
    nbrs = {c: _succ(grid_map, c) for c in free}
    while frontier:
        nxt = []
        for s in frontier:
            if s == goal:
                return True
            for moves in itertools.product(*(nbrs[c] for c in s)):
                if moves in seen or not _valid_step(s, moves):
                    continue
                seen.add(moves)
                nxt.append(moves)
        frontier = nxt
    return False


def _valid_step(prev, cur):
    if len(set(cur)) < len(cur):
        return False
    at = {c: i for i, c in enumerate(prev)}
    for i in range(len(cur)):
        # follow the chain of agents moving into each other's cells
        j, seen = i, 0
        while seen <= len(cur):
            k = at.get(cur[j])
            if k is None or k == j:
                break
            if k == i:
                return False
            j, seen = k, seen + 1
    return True


def cbs(grid_map, tasks, node_cap=CBS_NODE_CAP, size_guard=True):
    """Sum-of-costs optimal conflict-free plan (desk scale only).

    ``size_guard=False`` lifts the agent/map size limit; ``node_cap`` still
    bounds the search.
    """
    n = len(tasks)
    too_big = n > CBS_MAX_AGENTS or max(grid_map.width, grid_map.height) > CBS_MAX_SIDE
    if size_guard and too_big:
        raise InvalidParams(
            f"CBS is limited to {CBS_MAX_AGENTS} agents on maps up to {CBS_MAX_SIDE}x{CBS_MAX_SIDE}"
        )
    if n == 0:
        return JointPlan(())
    starts = [tuple(t.start) for t in tasks]
    goals = [tuple(t.goal) for t in tasks]
    if len(set(starts)) < n or len(set(goals)) < n:
        raise Unsolvable("starts and goals must be pairwise distinct")
    fields = [dijkstra_field(grid_map, g) for g in goals]
    if _joint_reachable(grid_map, starts, goals) is False:
        raise Unsolvable("goal configuration unreachable from the start configuration")

    cons = [(frozenset(), frozenset()) for _ in range(n)]
    paths = []
    for i in range(n):
        p = _low_level(grid_map, starts[i], goals[i], fields[i], *cons[i])
        if p is None:
            raise Unsolvable(f"agent {tasks[i].id} cannot reach its goal")
        paths.append(p)
    counter = itertools.count()
    openq = [(sum(p.arrival for p in paths), next(counter), cons, paths)]
    expanded = 0
    while openq:
        cost, _, cons, paths = heapq.heappop(openq)
        conflicts = detect_conflicts(paths)
        if not conflicts:
            return JointPlan(tuple(paths))
        expanded += 1
        if expanded > node_cap:
            raise BudgetExceeded(f"CBS expanded more than {node_cap} nodes")
        for agent, vc, ec in _branches(conflicts[0]):
            v, e = cons[agent]
            child = list(cons)
            child[agent] = (v | vc, e | ec)
            p = _low_level(grid_map, starts[agent], goals[agent], fields[agent], *child[agent])
            if p is None:
                continue
            new_paths = list(paths)
            new_paths[agent] = p
            heapq.heappush(openq, (sum(q.arrival for q in new_paths), next(counter), child, new_paths))
    raise Unsolvable("constraint tree exhausted")


def _branches(conflict):
    t = conflict.time
    a = conflict.agents
    if conflict.kind == ConflictKind.VERTEX:
        c = conflict.cells[0]
        return [(a[0], {(c, t)}, set()), (a[1], {(c, t)}, set())]
    if conflict.kind == ConflictKind.EDGE:
        u, v = conflict.cells
        return [(a[0], set(), {(u, v, t)}), (a[1], set(), {(u, v, t)})]
    if conflict.kind == ConflictKind.SWAPPING:
        u, v = conflict.cells
        return [(a[0], set(), {(u, v, t)}), (a[1], set(), {(v, u, t)})]
    cells = conflict.cells
    k = len(cells)
    return [(a[i], set(), {(cells[i], cells[(i + 1) % k], t)}) for i in range(k)]


# ---------------------------------------------------------------------------
# PIBT
# ---------------------------------------------------------------------------

def pibt(grid_map, tasks, max_timesteps=1000, seed=0):
    """Per-step priority inheritance with backtracking until everyone is home.

    Priorities grow by one per step away from the goal and reset on it; ties
    go to the lower id. Candidate cells are ranked by distance to goal with
    ties broken by a ``seed``-ed random draw, which is what lets two robots
    with adjacent goals in a corridor stop mirroring each other. A move that
    would close a rotation among the agents already decided this step is
    refused, so no cycle or swap can occur.
    """
    rng = np.random.default_rng(seed)
    n = len(tasks)
    ids = [t.id for t in tasks]
    goals = [tuple(t.goal) for t in tasks]
    pos = [tuple(t.start) for t in tasks]
    fields = [dijkstra_field(grid_map, g) for g in goals]
    naive = []
    for i in range(n):
        d = fields[i][pos[i][1], pos[i][0]]
        if not np.isfinite(d):
            raise Unsolvable(f"agent {ids[i]} cannot reach its goal")
        naive.append(int(d))
    prio = [0] * n
    history = [[p] for p in pos]
    t = 0
    while any(pos[i] != goals[i] for i in range(n)):
        if t >= max_timesteps:
            stuck = [ids[i] for i in range(n) if pos[i] != goals[i]]
            raise Timeout(f"{len(stuck)} agents not at goal after {t} steps", stuck)
        pos = _pibt_step(grid_map, pos, prio, ids, fields, rng)
        t += 1
        for i in range(n):
            history[i].append(pos[i])
            prio[i] = 0 if pos[i] == goals[i] else prio[i] + 1
    arrival = []
    for i in range(n):
        h = history[i]
        k = len(h) - 1
        while k > 0 and h[k - 1] == goals[i]:
            k -= 1
        arrival.append(k)
    return ExecutionTrace(
        agent_ids=ids,
        positions=history,
        actual_arrival=arrival,
        naive_arrival=naive,
        plan_reach_times=[list(range(a + 1)) for a in arrival],
        config={"planner": "pibt", "max_timesteps": max_timesteps, "seed": seed},
    )


def _pibt_step(grid_map, pos, prio, ids, fields, rng):
    n = len(pos)
    occ_now = {c: i for i, c in enumerate(pos)}
    occ_next = {}
    nxt = [None] * n

    def closes_cycle(i, v):
        c = v
        for _ in range(n):
            o = occ_now.get(c)
            if o is None or nxt[o] is None or nxt[o] == c:
                return False
            c = nxt[o]
            if c == pos[i]:
                return True
        return False

    def push(i, parent):
        f = fields[i]
        cands = _succ(grid_map, pos[i])
        tie = rng.random(len(cands))
        order = sorted(range(len(cands)), key=lambda j: (f[cands[j][1], cands[j][0]], tie[j]))
        cands = [cands[j] for j in order]
        for v in cands:
            if v in occ_next:
                continue
            if parent is not None and v == pos[parent]:
                continue
            if v != pos[i] and closes_cycle(i, v):
                continue
            occ_next[v] = i
            nxt[i] = v
            k = occ_now.get(v)
            if k is not None and k != i and nxt[k] is None and not push(k, i):
                continue
            return True
        nxt[i] = pos[i]
        occ_next[pos[i]] = i
        return False

    for i in sorted(range(n), key=lambda i: (-prio[i], ids[i])):
        if nxt[i] is None:
            push(i, None)
    return nxt


def trace_to_plans(trace):
    """Executed trajectories cut at each agent's final arrival, usable as plans."""
    return [Path(tuple(p[: a + 1])) for p, a in zip(trace.positions, trace.actual_arrival)]
