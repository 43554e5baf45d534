"""Spatio-temporal heterogeneous graph: a static floor layer plus a dynamic robot/eta layer.

Floor nodes are free-space components of N x N tiles; association edges join
floor nodes whose cells touch, plus a self-loop on every node. Robot nodes
carry a buffer-time priority and one eta edge per visit to a floor node along
the robot's plan.
"""

import json
import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import IdOverflow, InvalidParams, InvalidTileSize, UnmappedCell

FLOOR, ROBOT = 0, 1
T_SCALE = 100.0
DEFAULT_TILE = 5


def round_half_up(x):
    return math.floor(x + 0.5)


def priority(t_current, t_path, t_constraint, agent_id, id_modulus=10**4):
    """Buffer-time priority, made unique by appending the id as decimals.

    Larger values mean more urgent (less slack left).
    """
    if not 0 <= agent_id < id_modulus:
        raise IdOverflow(f"agent id {agent_id} not in [0, {id_modulus})")
    return round_half_up(t_current + t_path - t_constraint) + agent_id / id_modulus


# ---------------------------------------------------------------------------
# static layer
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class StaticLayer:
    tile_size: int
    width: int
    height: int
    tile_coords: np.ndarray      # (n_floor, 2) as (tile_x, tile_y)
    component_index: np.ndarray  # (n_floor,)
    patches: np.ndarray          # (n_floor, N*N) float64, 1 = blocked
    node_of: np.ndarray          # (height, width) floor node per cell, -1 on walls
    assoc_src: np.ndarray
    assoc_dst: np.ndarray

    @property
    def n_floor(self):
        return len(self.tile_coords)

    def node_at(self, c):
        x, y = c
        if not (0 <= x < self.width and 0 <= y < self.height) or self.node_of[y, x] < 0:
            raise UnmappedCell(f"cell {c} belongs to no floor node")
        return int(self.node_of[y, x])


def build_static_layer(grid_map, tile_size=DEFAULT_TILE):
    """Tile the map and stack one floor node per free component of each tile.

    Patches show the node's own component as free and everything else
    (walls, sibling components, cells past the map edge) as blocked, so
    stacked nodes of one tile get distinct features.
    """
    N = int(tile_size)
    if N < 2 or N > min(grid_map.width, grid_map.height):
        raise InvalidTileSize(
            f"tile size {tile_size} must be in [2, {min(grid_map.width, grid_map.height)}]"
        )
    w, h = grid_map.width, grid_map.height
    free = grid_map.grid == 0
    node_of = np.full((h, w), -1, dtype=np.int64)
    coords, comps, patches = [], [], []
    for ty in range((h + N - 1) // N):
        for tx in range((w + N - 1) // N):
            x0, y0 = tx * N, ty * N
            x1, y1 = min(x0 + N, w), min(y0 + N, h)
            k = 0
            for y in range(y0, y1):
                for x in range(x0, x1):
                    if not free[y, x] or node_of[y, x] >= 0:
                        continue
                    nid = len(coords)
                    patch = np.ones((N, N))
                    node_of[y, x] = nid
                    queue = deque([(x, y)])
                    while queue:
                        cx, cy = queue.popleft()
                        patch[cy - y0, cx - x0] = 0.0
                        for nx, ny in ((cx, cy - 1), (cx + 1, cy), (cx, cy + 1), (cx - 1, cy)):
                            if x0 <= nx < x1 and y0 <= ny < y1 and free[ny, nx] and node_of[ny, nx] < 0:
                                node_of[ny, nx] = nid
                                queue.append((nx, ny))
                    coords.append((tx, ty))
                    comps.append(k)
                    patches.append(patch.ravel())
                    k += 1
    n = len(coords)
    pairs = set((i, i) for i in range(n))
    right = (node_of[:, :-1] >= 0) & (node_of[:, 1:] >= 0) & (node_of[:, :-1] != node_of[:, 1:])
    down = (node_of[:-1, :] >= 0) & (node_of[1:, :] >= 0) & (node_of[:-1, :] != node_of[1:, :])
    for a, b in zip(node_of[:, :-1][right], node_of[:, 1:][right]):
        pairs.add((int(a), int(b)))
        pairs.add((int(b), int(a)))
    for a, b in zip(node_of[:-1, :][down], node_of[1:, :][down]):
        pairs.add((int(a), int(b)))
        pairs.add((int(b), int(a)))
    src, dst = zip(*sorted(pairs)) if pairs else ((), ())
    return StaticLayer(
        tile_size=N,
        width=w,
        height=h,
        tile_coords=np.array(coords, dtype=np.int64).reshape(n, 2),
        component_index=np.array(comps, dtype=np.int64),
        patches=np.array(patches, dtype=np.float64).reshape(n, N * N),
        node_of=node_of,
        assoc_src=np.array(src, dtype=np.int64),
        assoc_dst=np.array(dst, dtype=np.int64),
    )


# ---------------------------------------------------------------------------
# dynamic layer
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class HetGraph:
    """Static layer plus robots and their eta edges.

    Eta edges are stored grouped by robot, in timestamp order, so robot r owns
    the contiguous block ``eta_ptr[r]:eta_ptr[r + 1]``.
    """

    static: StaticLayer
    robot_ids: np.ndarray        # (n_robot,)
    priorities: np.ndarray       # (n_robot,) raw priority values
    eta_robot: np.ndarray        # (n_eta,) robot index
    eta_floor: np.ndarray        # (n_eta,) floor node id
    eta_duration: np.ndarray     # (n_eta,) cells spent in the node
    eta_arrival: np.ndarray      # (n_eta,) naive arrival at the node's last cell
    eta_timestamp: np.ndarray    # (n_eta,)
    eta_ptr: np.ndarray          # (n_robot + 1,)
    labels: np.ndarray = None    # (n_eta,) actual arrivals, or None
    t_scale: float = T_SCALE

    @property
    def n_floor(self):
        return self.static.n_floor

    @property
    def n_robot(self):
        return len(self.robot_ids)

    @property
    def n_eta(self):
        return len(self.eta_robot)

    @property
    def t_max(self):
        return int(self.eta_timestamp.max()) if self.n_eta else -1

    def floor_features(self):
        return self.static.patches

    def robot_features(self):
        return (self.priorities / self.t_scale)[:, None]

    def eta_features(self, arrival=None):
        """(n_eta, 3): duration, arrival, timestamp, all divided by ``t_scale``."""
        arr = self.eta_arrival if arrival is None else arrival
        return np.stack([self.eta_duration, arr, self.eta_timestamp], axis=1) / self.t_scale

    def with_labels(self, labels):
        labels = np.asarray(labels, dtype=np.float64)
        if labels.shape != (self.n_eta,):
            raise InvalidParams(f"expected {self.n_eta} labels, got shape {labels.shape}")
        return HetGraph(**{**self.__dict__, "labels": labels})

    def robot_arrivals(self, per_edge):
        """Last edge value of every robot, i.e. its arrival at the goal."""
        return np.asarray(per_edge)[self.eta_ptr[1:] - 1]

    def to_json(self):
        s = self.static
        doc = {
            "tile_size": s.tile_size,
            "t_scale": self.t_scale,
            "floor_nodes": [
                {
                    "id": i,
                    "tile": [int(s.tile_coords[i, 0]), int(s.tile_coords[i, 1])],
                    "component": int(s.component_index[i]),
                    "patch": [int(v) for v in s.patches[i]],
                }
                for i in range(s.n_floor)
            ],
            "robot_nodes": [
                {"id": int(r), "priority": float(p)}
                for r, p in zip(self.robot_ids, self.priorities)
            ],
            "assoc_edges": [[int(a), int(b)] for a, b in zip(s.assoc_src, s.assoc_dst)],
            "eta_edges": [
                {
                    "robot": int(self.robot_ids[self.eta_robot[e]]),
                    "floor": int(self.eta_floor[e]),
                    "naive_duration": int(self.eta_duration[e]),
                    "naive_arrival": int(self.eta_arrival[e]),
                    "timestamp": int(self.eta_timestamp[e]),
                    "label": None if self.labels is None else float(self.labels[e]),
                }
                for e in range(self.n_eta)
            ],
        }
        return json.dumps(doc, sort_keys=True)


def segment_plan(static, path):
    """Run-length groups of a plan over floor nodes: (node, first index, last index)."""
    runs = []
    for j, c in enumerate(path.cells):
        node = static.node_at(c)
        if runs and runs[-1][0] == node:
            runs[-1][2] = j
        else:
            runs.append([node, j, j])
    return [tuple(r) for r in runs]


def build_dynamic_layer(static, plans, tasks, t_current=0, reach_times=None,
                        id_modulus=10**4, t_scale=T_SCALE):
    """Robots and eta edges for ``plans``; labels come from ``reach_times`` if given.

    ``reach_times[i][j]`` is the timestep at which robot i actually got to
    plan index j; an edge is labelled with the reach time of its last index.
    """
    if len(plans) != len(tasks):
        raise InvalidParams("need one plan per task")
    ids, prios = [], []
    rob, flo, dur, arr, ts, lab = [], [], [], [], [], []
    ptr = [0]
    for r, (task, path) in enumerate(zip(tasks, plans)):
        ids.append(task.id)
        t_path = len(path.cells) - 1
        prios.append(priority(t_current, t_path, task.time_constraint, task.id, id_modulus))
        for k, (node, first, last) in enumerate(segment_plan(static, path)):
            rob.append(r)
            flo.append(node)
            dur.append(last - first + 1)
            arr.append(path.start_time + last)
            ts.append(k)
            if reach_times is not None:
                lab.append(reach_times[r][last])
        ptr.append(len(rob))
    as_f = lambda v: np.array(v, dtype=np.float64)  # noqa: E731
    return HetGraph(
        static=static,
        robot_ids=np.array(ids, dtype=np.int64),
        priorities=as_f(prios),
        eta_robot=np.array(rob, dtype=np.int64),
        eta_floor=np.array(flo, dtype=np.int64),
        eta_duration=as_f(dur),
        eta_arrival=as_f(arr),
        eta_timestamp=as_f(ts),
        eta_ptr=np.array(ptr, dtype=np.int64),
        labels=as_f(lab) if reach_times is not None else None,
        t_scale=float(t_scale),
    )


def build_graph(grid_map, plans, tasks, tile_size=DEFAULT_TILE, **kw):
    return build_dynamic_layer(build_static_layer(grid_map, tile_size), plans, tasks, **kw)
