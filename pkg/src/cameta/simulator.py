"""Discrete-time multi-robot execution with forced-wait noise and windowed local repair.

Positions are cells ``(x, y)``; agent index ``i`` refers to ``tasks[i]`` and
``plans[i]``. Every executed timestep is conflict-free: intended moves over
the next ``whca_window`` steps are checked and, when they clash, repaired by
priority-ordered space-time search (:func:`whca_local_repair`).
"""

import enum
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import CametaError, IncompleteTrace, InvalidParams, NoPath, Timeout
from .gridworld import MOVES
from .hetgraph import priority
from .planners import Path, astar, distance_field


class ConflictKind(enum.IntEnum):
    VERTEX = 0
    EDGE = 1
    SWAPPING = 2
    CYCLE = 3


@dataclass(frozen=True)
class Conflict:
    """One forbidden pattern.

    Vertex conflicts carry ``time`` = the shared timestep. Move conflicts
    (edge, swapping, cycle) carry the timestep at which the moves complete.
    For cycles, ``agents`` starts at the smallest id and follows the rotation
    (each agent moves into the next one's cell); ``cells`` are their positions
    before the move.
    """

    kind: ConflictKind
    agents: tuple
    time: int
    cells: tuple

    def sort_key(self):
        return (self.time, int(self.kind), min(self.agents), self.agents, self.cells)


@dataclass(frozen=True)
class AgentTask:
    id: int
    start: tuple
    goal: tuple
    time_constraint: int


@dataclass(frozen=True)
class SimConfig:
    noise_wait_prob: float = 0.0
    rng_seed: int = 0
    whca_window: int = 5
    max_timesteps: int = 1000
    id_modulus: int = 10**4

    def __post_init__(self):
        if not 0.0 <= self.noise_wait_prob <= 1.0:
            raise InvalidParams("noise_wait_prob must lie in [0, 1]")
        if self.whca_window < 1:
            raise InvalidParams("whca_window must be >= 1")


@dataclass
class ExecutionTrace:
    agent_ids: list
    positions: list  # per agent, realized cell at t = 0 .. horizon
    actual_arrival: list
    naive_arrival: list
    plan_reach_times: list  # per agent, first timestep each plan index was reached
    resolved_conflict_count: int = 0
    forced_waits: int = 0
    complete: bool = True
    config: dict = field(default_factory=dict)

    def realized_paths(self):
        return [Path(tuple(p)) for p in self.positions]

    def to_json(self):
        doc = {
            "config": self.config,
            "agents": [
                {
                    "id": int(a),
                    "naive_arrival": int(n),
                    "actual_arrival": None if r is None else int(r),
                }
                for a, n, r in zip(self.agent_ids, self.naive_arrival, self.actual_arrival)
            ],
            "resolved_conflicts": int(self.resolved_conflict_count),
            "forced_waits": int(self.forced_waits),
            "complete": bool(self.complete),
        }
        if self.complete:
            doc["makespan"] = makespan(self)
            doc["soc"] = soc(self)
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"


# ---------------------------------------------------------------------------
# conflict detection
# ---------------------------------------------------------------------------

def detect_conflicts(paths):
    """Every vertex, edge, swapping and cycle conflict among ``paths``.

    ``paths`` is a list (agent id = position) or a dict ``{id: Path}``.
    Agents rest on their last cell after arriving.
    """
    if isinstance(paths, dict):
        ids = sorted(paths)
        plist = [paths[i] for i in ids]
    else:
        ids = list(range(len(paths)))
        plist = list(paths)
    if not plist:
        return []
    horizon = max(p.arrival for p in plist)
    out = []
    prev = [p.at(0) for p in plist]
    out.extend(_vertex_conflicts(ids, prev, 0))
    for t in range(1, horizon + 1):
        cur = [p.at(t) for p in plist]
        out.extend(_vertex_conflicts(ids, cur, t))
        out.extend(_move_conflicts(ids, prev, cur, t))
        prev = cur
    out.sort(key=Conflict.sort_key)
    return out


def _vertex_conflicts(ids, pos, t):
    by_cell = {}
    for i, c in enumerate(pos):
        by_cell.setdefault(c, []).append(i)
    out = []
    for c, group in by_cell.items():
        if len(group) < 2:
            continue
        for a in range(len(group)):
            for b in range(a + 1, len(group)):
                ia, ib = sorted((ids[group[a]], ids[group[b]]))
                out.append(Conflict(ConflictKind.VERTEX, (ia, ib), t, (c,)))
    return out


def _move_conflicts(ids, prev, cur, t):
    moving = [i for i in range(len(prev)) if prev[i] != cur[i]]
    if len(moving) < 2:
        return []
    out = []
    by_move = {}
    for i in moving:
        by_move.setdefault((prev[i], cur[i]), []).append(i)
    for (u, v), group in by_move.items():
        for a in range(len(group)):
            for b in range(a + 1, len(group)):
                ia, ib = sorted((ids[group[a]], ids[group[b]]))
                out.append(Conflict(ConflictKind.EDGE, (ia, ib), t, (u, v)))
        for j in by_move.get((v, u), ()):
            for i in group:
                if ids[i] < ids[j]:
                    out.append(Conflict(ConflictKind.SWAPPING, (ids[i], ids[j]), t, (u, v)))
    # successor graph: i -> j when i moves into the cell j is leaving
    at_prev = {}
    for j in moving:
        at_prev.setdefault(prev[j], []).append(j)
    succ = {i: sorted(at_prev.get(cur[i], ()), key=lambda j: ids[j]) for i in moving}
    for cyc in _elementary_cycles(moving, succ, ids):
        agents = tuple(ids[i] for i in cyc)
        cells = tuple(prev[i] for i in cyc)
        out.append(Conflict(ConflictKind.CYCLE, agents, t, cells))
    return out


def _elementary_cycles(nodes, succ, ids):
    """Simple cycles of length >= 3, each rooted at its smallest id."""
    order = sorted(nodes, key=lambda i: ids[i])
    rank = {i: r for r, i in enumerate(order)}
    found = []
    for root in order:
        r0 = rank[root]
        stack = [(root, iter(succ[root]))]
        on_path = [root]
        in_path = {root}
        while stack:
            node, it = stack[-1]
            advanced = False
            for nxt in it:
                if nxt == root:
                    if len(on_path) >= 3:
                        found.append(tuple(on_path))
                    continue
                if rank[nxt] > r0 and nxt not in in_path:
                    stack.append((nxt, iter(succ[nxt])))
                    on_path.append(nxt)
                    in_path.add(nxt)
                    advanced = True
                    break
            if not advanced:
                stack.pop()
                in_path.discard(on_path.pop())
    return found


# ---------------------------------------------------------------------------
# windowed local repair
# ---------------------------------------------------------------------------

class _Reservations:
    def __init__(self):
        self.vertex = {}  # (cell, tau) -> agent
        self.pos = {}  # (agent, tau) -> cell

    def add(self, agent, cells):
        for tau, c in enumerate(cells):
            self.vertex[(c, tau)] = agent
            self.pos[(agent, tau)] = c

    def move_ok(self, u, v, tau):
        """Can an unreserved agent go u -> v, arriving at ``tau``?"""
        if (v, tau) in self.vertex:
            return False
        if u == v:
            return True
        # follow whoever vacates v; reaching u closes a swap or a cycle
        cell = v
        for _ in range(len(self.pos) + 1):
            j = self.vertex.get((cell, tau - 1))
            if j is None:
                return True
            nxt = self.pos[(j, tau)]
            if nxt == u:
                return False
            if nxt == cell:
                return True
            cell = nxt
        return True

    def path_ok(self, cells):
        return all(self.move_ok(cells[k - 1], cells[k], k) for k in range(1, len(cells)))


def _local_field(grid_map, target):
    return distance_field(grid_map, {target: 0})


def _window_search(grid_map, cells0, res, cost_to_go, first_wait):
    """Best W-step space-time path from ``cells0[0]`` around reservations.

    Minimises (cost-to-go at the window end, summed cost-to-go along the way).
    Returns None when every option collides.
    """
    W = len(cells0) - 1
    start = cells0[0]
    w, h = grid_map.width, grid_map.height
    free = grid_map.grid == 0
    layer = {start: (0.0, None)}
    layers = [layer]
    for tau in range(1, W + 1):
        nxt = {}
        for u in sorted(layer, key=lambda c: (c[1], c[0])):
            acc = layer[u][0]
            opts = [u]
            if not (tau == 1 and first_wait):
                for dx, dy in MOVES:
                    vx, vy = u[0] + dx, u[1] + dy
                    if 0 <= vx < w and 0 <= vy < h and free[vy, vx]:
                        opts.append((vx, vy))
            for v in opts:
                if not res.move_ok(u, v, tau):
                    continue
                score = acc + cost_to_go[v[1], v[0]]
                best = nxt.get(v)
                if best is None or score < best[0]:
                    nxt[v] = (score, u)
        if not nxt:
            return None
        layers.append(nxt)
        layer = nxt
    end = min(layer, key=lambda c: (cost_to_go[c[1], c[0]], layer[c][0], c[1], c[0]))
    cells = [end]
    for tau in range(W, 0, -1):
        cells.append(layers[tau][cells[-1]][1])
    return cells[::-1]


def whca_local_repair(grid_map, window_moves, priorities, cost_to_go=None,
                      forced_wait=None, fixed=None):
    """Resolve clashes among intended windows by priority-ordered reservation.

    ``window_moves[i]`` lists agent i's cells for tau = 0..W (tau 0 is the
    current cell). Higher priority reserves first and keeps its intent when
    possible; lower-priority agents replan inside the window via space-time
    search with waits. An agent that finds no safe window is promoted to plan
    first and the pass restarts; if it fails again it is pinned to waiting in
    place. The result never contains a vertex, edge, swapping or cycle
    conflict.

    ``cost_to_go[i]`` is a (height, width) array guiding replans (default:
    distance to the agent's intended window end). ``forced_wait[i]`` pins the
    first step to a wait; ``fixed[i]`` pins the whole window (parked agents).
    """
    n = len(window_moves)
    if n == 0:
        return []
    W = len(window_moves[0]) - 1
    moves = [list(m) for m in window_moves]
    forced_wait = forced_wait or [False] * n
    fixed = fixed or [False] * n
    fields = list(cost_to_go) if cost_to_go is not None else [None] * n
    order = sorted(range(n), key=lambda i: (-priorities[i], i))
    pinned = {i for i in range(n) if fixed[i]}
    bumped = {}
    while True:
        res = _Reservations()
        out = [None] * n
        for i in sorted(pinned):
            out[i] = [moves[i][0]] * (W + 1)
            res.add(i, out[i])
        failed = None
        for i in order:
            if i in pinned:
                continue
            intent = moves[i]
            if (not forced_wait[i] or intent[1] == intent[0]) and res.path_ok(intent):
                out[i] = intent
            else:
                if fields[i] is None:
                    fields[i] = _local_field(grid_map, intent[-1])
                out[i] = _window_search(grid_map, intent, res, fields[i], forced_wait[i])
                if out[i] is None:
                    failed = i
                    break
            res.add(i, out[i])
        if failed is None:
            return out
        # escalate: plan ahead of its peers, then ahead of everyone, then wait
        level = bumped.get(failed, 0)
        bumped[failed] = level + 1
        order.remove(failed)
        if level == 0:
            k = next((j for j, o in enumerate(order) if priorities[o] <= priorities[failed]), len(order))
            order.insert(k, failed)
        elif level == 1:
            order.insert(0, failed)
        else:
            order.insert(0, failed)
            pinned.add(failed)


def _windows_clash(windows):
    """Fast check for any conflict among equal-length windows."""
    W = len(windows[0])
    for tau in range(W):
        seen = set()
        for w in windows:
            if w[tau] in seen:
                return True
            seen.add(w[tau])
        if tau == 0:
            continue
        prev_at = {w[tau - 1]: k for k, w in enumerate(windows)}
        for k, w in enumerate(windows):
            if w[tau] == w[tau - 1]:
                continue
            # chase the occupant chain; returning to our start is a swap or cycle
            cell = w[tau]
            for _ in range(len(windows)):
                j = prev_at.get(cell)
                if j is None:
                    break
                nxt = windows[j][tau]
                if nxt == w[tau - 1]:
                    return True
                if nxt == cell:
                    break
                cell = nxt
    return False


# ---------------------------------------------------------------------------
# execution
# ---------------------------------------------------------------------------

class _Track:
    """Progress along a cell sequence plus a cost-to-go field that leads back onto it."""

    def __init__(self, grid_map, cells, field=None):
        self.cells = tuple(cells)
        self.k = 0
        self.occ = {}
        for j, c in enumerate(self.cells):
            self.occ.setdefault(c, []).append(j)
        if field is None:
            L = len(self.cells)
            seeds = {}
            for j, c in enumerate(self.cells):
                seeds[c] = min(seeds.get(c, L), L - 1 - j)
            field = distance_field(grid_map, seeds)
        self.field = field

    def advance(self, pos):
        nxt = self.k + 1
        if nxt < len(self.cells) and self.cells[nxt] == pos:
            self.k = nxt
            return
        later = [j for j in self.occ.get(pos, ()) if j > self.k]
        if later:
            self.k = later[0]

    def route_from(self, grid_map, cell):
        ahead = [j for j in self.occ.get(cell, ()) if j >= self.k]
        if ahead:
            return list(self.cells[ahead[0] + 1:])
        walk = []
        c = cell
        for _ in range(grid_map.width * grid_map.height):
            if c in self.occ:
                return walk + list(self.cells[self.occ[c][-1] + 1:])
            c = min(_free_nbrs(grid_map, c), key=lambda v: self.field[v[1], v[0]])
            walk.append(c)
        raise NoPath("cannot rejoin the route")


class _Agent:
    def __init__(self, grid_map, task, plan):
        self.task = task
        self.plan = _Track(grid_map, plan.cells)
        self.nav = self.plan
        self.home = _Track(grid_map, plan.cells[-1:])
        self.route = list(plan.cells[1:])
        self.pos = plan.cells[0]
        self.reach = [None] * len(plan.cells)
        self.reach[0] = 0
        self.arrival = None
        self.away_since = None

    @property
    def goal(self):
        return self.plan.cells[-1]

    def advance(self, t):
        self.plan.advance(self.pos)
        if self.nav is not self.plan:
            self.nav.advance(self.pos)
        for j in range(self.plan.k + 1):
            if self.reach[j] is None:
                self.reach[j] = t


def _free_nbrs(grid_map, c):
    out = []
    for dx, dy in MOVES:
        v = (c[0] + dx, c[1] + dy)
        if grid_map.is_free(v):
            out.append(v)
    return out


DISPLACED_PRIORITY = -1e9


def agent_rng(seed, agent_id):
    """Independent noise stream per (seed, agent id)."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(agent_id),)))


def run(grid_map, tasks, plans, cfg=None):
    """Execute ``plans`` with noise and local repair; return the realized trace.

    Each timestep: (1) every unfinished agent draws a forced wait with
    probability ``noise_wait_prob`` from its own stream; (2) intended moves
    for the next ``whca_window`` steps are checked and repaired on conflict;
    (3) everyone advances one step. An agent arrives when it first rests on
    its goal with no route left. It then stays parked there at the lowest
    priority: a parked robot that blocks a boxed-in agent is pushed aside and
    walks back afterwards. The run ends once every robot is home.
    """
    cfg = cfg or SimConfig()
    if len(tasks) != len(plans):
        raise InvalidParams("need one plan per task")
    n = len(tasks)
    agents = []
    for task, plan in zip(tasks, plans):
        if plan.cells[0] != tuple(task.start):
            raise InvalidParams(f"plan of agent {task.id} does not start at its start cell")
        if plan.cells[-1] != tuple(task.goal):
            raise InvalidParams(f"plan of agent {task.id} does not end at its goal")
        agents.append(_Agent(grid_map, task, plan))
    rngs = [agent_rng(cfg.rng_seed, t.id) for t in tasks]
    # held fixed for the whole run: re-evaluating every step lets a yielding
    # robot overtake the one it yielded to, which livelocks in door gaps
    base_prio = [
        priority(0, len(p.cells) - 1, t.time_constraint, t.id, cfg.id_modulus)
        for t, p in zip(tasks, plans)
    ]
    W = cfg.whca_window
    history = [[a.pos] for a in agents]
    forced_total = 0
    repairs = 0
    for a in agents:
        if not a.route:
            a.arrival = 0
            a.nav = a.home

    t = 0
    while any(a.arrival is None or a.pos != a.goal for a in agents):
        if t >= cfg.max_timesteps:
            stuck = [a.task.id for a in agents if a.arrival is None]
            trace = _make_trace(agents, history, repairs, forced_total, cfg, complete=False)
            raise Timeout(f"{len(stuck)} agents unfinished after {t} steps", stuck, trace)
        forced = [False] * n
        if cfg.noise_wait_prob > 0.0:
            for i, a in enumerate(agents):
                if a.arrival is None and rngs[i].random() < cfg.noise_wait_prob:
                    forced[i] = True
                    forced_total += 1
        # parked robots yield to everyone and may be pushed off their goal;
        # a pushed robot outranks those at home, the longest-displaced first
        prios = []
        for i, a in enumerate(agents):
            if a.arrival is None:
                prios.append(base_prio[i])
            elif a.pos == a.goal:
                a.away_since = None
                prios.append(-math.inf)
            else:
                if a.away_since is None:
                    a.away_since = t
                prios.append(DISPLACED_PRIORITY - a.away_since)
        windows = []
        for i, a in enumerate(agents):
            seq = [a.pos] + ([a.pos] if forced[i] else []) + a.route[:W]
            windows.append((seq + [seq[-1]] * W)[: W + 1])
        if _windows_clash(windows):
            adjusted = whca_local_repair(
                grid_map, windows, prios,
                cost_to_go=[a.nav.field for a in agents],
                forced_wait=forced,
            )
            if any(adjusted[i][1] != windows[i][1] for i in range(n)):
                repairs += 1
        else:
            adjusted = windows
        t += 1
        for i, a in enumerate(agents):
            nxt = adjusted[i][1]
            if forced[i]:
                pass
            elif nxt == windows[i][1]:
                if a.route and a.route[0] == nxt:
                    a.route.pop(0)
            else:
                a.route = a.nav.route_from(grid_map, nxt)
            a.pos = nxt
            history[i].append(nxt)
            if a.arrival is None:
                a.advance(t)
        for a in agents:
            if a.arrival is None and not a.route and a.pos == a.goal:
                a.arrival = t
                for j in range(len(a.reach)):
                    if a.reach[j] is None:
                        a.reach[j] = t
                a.nav = a.home
        _detour_around_parked(grid_map, agents)
    return _make_trace(agents, history, repairs, forced_total, cfg, complete=True)


def _detour_around_parked(grid_map, agents):
    """Re-route robots whose remaining route runs through a robot parked at home.

    Pushing still works when no way around exists; the detour only avoids
    needless pushes, which can cycle when two goals share a dead end.
    """
    home = {a.pos for a in agents if a.arrival is not None and a.pos == a.goal}
    blocked = None
    for a in agents:
        if a.pos == a.goal and a.arrival is not None:
            continue
        if not any(c in home for c in a.route):
            continue
        if blocked is None:
            occ = grid_map.occupancy.copy()
            for c in home:
                occ[grid_map.index(c)] = 1
            blocked = type(grid_map)(grid_map.width, grid_map.height, occ)
        try:
            p = astar(blocked, a.pos, a.goal)
        except CametaError:
            continue
        a.route = list(p.cells[1:])
        a.nav = _Track(grid_map, p.cells)


def _make_trace(agents, history, repairs, forced_total, cfg, complete):
    horizon = max(len(h) for h in history)
    positions = [h + [h[-1]] * (horizon - len(h)) for h in history]
    return ExecutionTrace(
        agent_ids=[a.task.id for a in agents],
        positions=positions,
        actual_arrival=[a.arrival for a in agents],
        naive_arrival=[len(a.plan.cells) - 1 for a in agents],
        plan_reach_times=[list(a.reach) for a in agents],
        resolved_conflict_count=repairs,
        forced_waits=forced_total,
        complete=complete,
        config=asdict(cfg),
    )


def makespan(trace):
    _require_complete(trace)
    return max(trace.actual_arrival, default=0)


def soc(trace):
    _require_complete(trace)
    return sum(trace.actual_arrival)


def _require_complete(trace):
    if not trace.complete or any(a is None for a in trace.actual_arrival):
        raise IncompleteTrace("trace has unfinished agents")
