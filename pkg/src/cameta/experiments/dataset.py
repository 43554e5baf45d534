"""Scenario datasets: warehouse maps, A* plans and simulated arrival labels."""

import json
from dataclasses import dataclass, field

import numpy as np

from ..errors import GenerationFailed, InvalidParams, Timeout
from ..gridworld import WarehouseGenParams, generate_warehouse_map, load_map, save_map
from ..hetgraph import DEFAULT_TILE, T_SCALE, build_dynamic_layer, build_static_layer
from ..planners import Path, astar
from ..scenarios import make_tasks, sample_endpoints
from ..simulator import AgentTask, SimConfig, run

MAX_TASK_DRAWS = 20


@dataclass
class ScenarioDataset:
    records: list
    seed: int
    config: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.records)

    def split(self, n_train):
        """Disjoint train/test split by map (each record has its own map)."""
        if not 0 < n_train < len(self.records):
            raise InvalidParams(f"n_train must be in [1, {len(self.records) - 1}]")
        tr = ScenarioDataset(self.records[:n_train], self.seed, {**self.config, "split": "train"})
        te = ScenarioDataset(self.records[n_train:], self.seed, {**self.config, "split": "test"})
        return tr, te

    def to_json(self):
        return json.dumps({"seed": self.seed, "config": self.config, "records": self.records},
                          sort_keys=True, separators=(",", ":")) + "\n"

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        return cls(doc["records"], doc["seed"], doc.get("config", {}))


def _map_seed(ss):
    return int(ss.generate_state(2, dtype=np.uint64)[0])


def gen_scenario(map_seed, rng, width, height, n_robots, noise=0.0, noise_seed=0, max_timesteps=1000):
    """One labelled scenario; task sets whose execution times out are redrawn."""
    grid_map = generate_warehouse_map(WarehouseGenParams(seed=map_seed, width=width, height=height))
    for _ in range(MAX_TASK_DRAWS):
        starts, goals = sample_endpoints(grid_map, n_robots, rng)
        plans = [astar(grid_map, s, g) for s, g in zip(starts, goals)]
        tasks = make_tasks(starts, goals, plans)
        cfg = SimConfig(noise_wait_prob=noise, rng_seed=noise_seed, max_timesteps=max_timesteps)
        try:
            trace = run(grid_map, tasks, plans, cfg)
        except Timeout:
            continue
        return grid_map, tasks, plans, trace
    raise GenerationFailed(f"no executable task set after {MAX_TASK_DRAWS} draws")


def gen_dataset(n_maps, map_dims=(24, 24), robots_per_map=15, seed=0, noise=0.0):
    """``n_maps`` records, one map each; a pure function of the arguments."""
    width, height = map_dims
    children = np.random.SeedSequence(seed).spawn(n_maps)
    records = []
    for k, ss in enumerate(children):
        map_seed = _map_seed(ss)
        rng = np.random.default_rng(ss)
        grid_map, tasks, plans, trace = gen_scenario(
            map_seed, rng, width, height, robots_per_map, noise=noise, noise_seed=k
        )
        records.append({
            "map_id": k,
            "map_seed": map_seed,
            "map": save_map(grid_map),
            "tasks": [
                {"id": t.id, "start": list(t.start), "goal": list(t.goal), "time_constraint": t.time_constraint}
                for t in tasks
            ],
            "plans": [[list(c) for c in p.cells] for p in plans],
            "reach_times": trace.plan_reach_times,
            "actual_arrival": trace.actual_arrival,
        })
    config = {"n_maps": n_maps, "width": width, "height": height,
              "robots_per_map": robots_per_map, "noise": noise}
    return ScenarioDataset(records, seed, config)


def sample_scenario(width, height, n_robots, seed, grid_map=None):
    """A warehouse map (unless given) and a well-formed task set, from one seed."""
    ss = np.random.SeedSequence(seed)
    if grid_map is None:
        grid_map = generate_warehouse_map(WarehouseGenParams(seed=_map_seed(ss), width=width, height=height))
    starts, goals = sample_endpoints(grid_map, n_robots, np.random.default_rng(ss))
    plans = [astar(grid_map, s, g) for s, g in zip(starts, goals)]
    return grid_map, make_tasks(starts, goals, plans)


def record_scenario(record):
    grid_map = load_map(record["map"])
    tasks = [AgentTask(t["id"], tuple(t["start"]), tuple(t["goal"]), t["time_constraint"])
             for t in record["tasks"]]
    plans = [Path(tuple(tuple(c) for c in p)) for p in record["plans"]]
    return grid_map, tasks, plans


def record_graph(record, tile_size=DEFAULT_TILE, t_scale=T_SCALE):
    grid_map, tasks, plans = record_scenario(record)
    static = build_static_layer(grid_map, tile_size)
    return build_dynamic_layer(static, plans, tasks, reach_times=record["reach_times"], t_scale=t_scale)


def dataset_graphs(dataset, tile_size=DEFAULT_TILE, t_scale=T_SCALE):
    return [record_graph(r, tile_size, t_scale) for r in dataset.records]
