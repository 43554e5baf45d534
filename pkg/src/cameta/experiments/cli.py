"""Command-line entry point: ``cameta <command> [flags]``.

Every command writes into a run directory (``--out``, default
``runs/<command>-<config hash>``) holding ``config.json`` and its results.
Outputs depend only on the flags, so reruns are byte-identical.
"""

import argparse
import os
import sys

import numpy as np

from ..errors import CametaError, Timeout
from ..gridworld import WarehouseGenParams, generate_warehouse_map, load_map, save_map
from ..hetgraph import DEFAULT_TILE, T_SCALE, build_static_layer
from ..nn.model import DMS, IMS
from ..nn.optim import TrainConfig
from ..nn.params import ModelParams, zero_params
from ..planners import astar
from ..selection import plan_cameta
from ..simulator import SimConfig, run
from .common import prepare_run_dir, write_csv, write_json
from .dataset import ScenarioDataset, dataset_graphs, gen_dataset, sample_scenario
from .sweep import PLANNERS, RUN_COLUMNS, SUMMARY_COLUMNS, noise_sweep
from .training import evaluate, train

METRIC_COLUMNS = ["method", "mape", "rmse", "mae", "n_edges"]


def _read(path):
    with open(path, encoding="utf-8") as f:
        return f.read()


def _write_text(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)


def _load_params(path, n_patch):
    if path is None:
        return zero_params(n_patch)
    return ModelParams.from_json(_read(path), expect_n_patch=n_patch)


def _scenario(args):
    grid_map = load_map(_read(args.map)) if args.map else None
    return sample_scenario(args.width, args.height, args.robots, args.seed, grid_map)


def _plans_doc(tasks, plans):
    return [{"id": t.id, "cells": [list(c) for c in p.cells]} for t, p in zip(tasks, plans)]


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_gen_maps(args, out, h):
    ss = np.random.SeedSequence(args.seed).spawn(args.n_maps)
    rows = []
    for k, child in enumerate(ss):
        map_seed = int(child.generate_state(2, dtype=np.uint64)[0])
        m = generate_warehouse_map(WarehouseGenParams(seed=map_seed, width=args.width, height=args.height))
        name = f"map_{k:04d}.pgrid"
        _write_text(os.path.join(out, name), save_map(m))
        rows.append({"map_id": k, "file": name, "map_seed": map_seed, "free_cells": len(m.free_cells())})
    write_csv(os.path.join(out, "maps.csv"), rows, ["map_id", "file", "map_seed", "free_cells"], h)


def cmd_gen_dataset(args, out, h):
    ds = gen_dataset(args.n_maps, (args.width, args.height), args.robots, seed=args.seed, noise=args.noise)
    _write_text(os.path.join(out, "dataset.json"), ds.to_json())
    rows = []
    for r in ds.records:
        naive = [len(p) - 1 for p in r["plans"]]
        rows.append({"map_id": r["map_id"], "n_robots": len(r["tasks"]),
                     "naive_soc": sum(naive), "actual_soc": sum(r["actual_arrival"]),
                     "delayed_robots": sum(a > n for a, n in zip(r["actual_arrival"], naive))})
    write_csv(os.path.join(out, "records.csv"), rows,
              ["map_id", "n_robots", "naive_soc", "actual_soc", "delayed_robots"], h)


def _split_graphs(args):
    ds = ScenarioDataset.from_json(_read(args.dataset))
    tr, te = ds.split(args.n_train)
    return (dataset_graphs(tr, args.tile_size, args.t_scale),
            dataset_graphs(te, args.tile_size, args.t_scale))


def cmd_train(args, out, h):
    gtr, gte = _split_graphs(args)
    cfg = TrainConfig(lr=args.lr, epochs=args.epochs, mode=args.mode, seed=args.seed,
                      layers_per_step=args.layers_per_step)
    params, log = train(gtr, cfg)
    _write_text(os.path.join(out, "checkpoint.json"), params.to_json() + "\n")
    write_csv(os.path.join(out, "train_log.csv"), log, ["epoch", "lr", "train_mape"], h)
    rows = [{"split": "test", **r} for r in evaluate(gte, {args.mode: params}, args.layers_per_step)]
    write_csv(os.path.join(out, "metrics.csv"), rows, ["split", *METRIC_COLUMNS], h)


def cmd_eval(args, out, h):
    _, gte = _split_graphs(args)
    n_patch = gte[0].static.patches.shape[1]
    checkpoints = {}
    for item in args.checkpoint:
        name, _, path = item.partition("=")
        checkpoints[name] = _load_params(path, n_patch)
    rows = evaluate(gte, checkpoints, args.layers_per_step)
    write_csv(os.path.join(out, "metrics.csv"), rows, METRIC_COLUMNS, h)


def cmd_noise_sweep(args, out, h):
    grid_map, tasks = _scenario(args)
    params = None
    if "cameta" in args.planners:
        params = _load_params(args.checkpoint, build_static_layer(grid_map, args.tile_size).patches.shape[1])
    runs, summary = noise_sweep(grid_map, tasks, args.planners, args.noise_levels, args.n_seeds,
                                params=params, max_timesteps=args.max_timesteps, seed0=args.seed)
    write_csv(os.path.join(out, "runs.csv"), runs, RUN_COLUMNS, h)
    write_csv(os.path.join(out, "summary.csv"), summary, SUMMARY_COLUMNS, h)


def cmd_plan(args, out, h):
    grid_map, tasks = _scenario(args)
    static = build_static_layer(grid_map, args.tile_size)
    params = _load_params(args.checkpoint, static.patches.shape[1])
    plans, log = plan_cameta(grid_map, tasks, params, k=args.k, penalty_factor=args.penalty_factor,
                             tile_size=args.tile_size, static=static)
    write_json(os.path.join(out, "plans.json"), {"map": save_map(grid_map), "plans": _plans_doc(tasks, plans)})
    write_csv(os.path.join(out, "selection.csv"), log, ["agent", "n_candidates", "chosen", "valid"], h)


def cmd_simulate(args, out, h):
    grid_map, tasks = _scenario(args)
    plans = [astar(grid_map, t.start, t.goal) for t in tasks]
    cfg = SimConfig(noise_wait_prob=args.noise, rng_seed=args.seed, max_timesteps=args.max_timesteps)
    try:
        trace = run(grid_map, tasks, plans, cfg)
    except Timeout as exc:
        trace = exc.trace
    _write_text(os.path.join(out, "trace.json"), trace.to_json())
    rows = [{"agent": a, "naive_arrival": n, "actual_arrival": r}
            for a, n, r in zip(trace.agent_ids, trace.naive_arrival, trace.actual_arrival)]
    write_csv(os.path.join(out, "arrivals.csv"), rows, ["agent", "naive_arrival", "actual_arrival"], h)


COMMANDS = {
    "gen-maps": cmd_gen_maps,
    "gen-dataset": cmd_gen_dataset,
    "train": cmd_train,
    "eval": cmd_eval,
    "noise-sweep": cmd_noise_sweep,
    "plan": cmd_plan,
    "simulate": cmd_simulate,
}


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _map_flags(p, robots):
    p.add_argument("--width", type=int, default=24)
    p.add_argument("--height", type=int, default=24)
    p.add_argument("--robots", type=int, default=robots)
    p.add_argument("--map", help="map file (P-GRID text); generated from --seed when absent")


def build_parser():
    ap = argparse.ArgumentParser(prog="cameta", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def command(name, help_, stochastic=True):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--out", help="run directory (default runs/<command>-<hash>)")
        if stochastic:
            p.add_argument("--seed", type=int, required=True)
        return p

    p = command("gen-maps", "generate warehouse maps")
    p.add_argument("--n-maps", type=int, default=10)
    p.add_argument("--width", type=int, default=24)
    p.add_argument("--height", type=int, default=24)

    p = command("gen-dataset", "generate labelled scenarios")
    p.add_argument("--n-maps", type=int, default=70)
    p.add_argument("--width", type=int, default=24)
    p.add_argument("--height", type=int, default=24)
    p.add_argument("--robots", type=int, default=15)
    p.add_argument("--noise", type=float, default=0.0)

    for name, help_ in (("train", "train the arrival-time model"), ("eval", "evaluate checkpoints")):
        p = command(name, help_, stochastic=name == "train")
        p.add_argument("--dataset", required=True)
        p.add_argument("--n-train", type=int, default=50)
        p.add_argument("--tile-size", type=int, default=DEFAULT_TILE)
        p.add_argument("--t-scale", type=float, default=T_SCALE)
        p.add_argument("--layers-per-step", type=int, default=1)
    p = sub.choices["train"]
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--mode", choices=[DMS, IMS], default=DMS)
    p.add_argument("--lr", type=float, default=1e-3)
    sub.choices["eval"].add_argument(
        "--checkpoint", action="append", default=[], metavar="NAME=PATH",
        help="model checkpoint to compare with the naive baseline (repeatable)")

    p = command("noise-sweep", "compare planners under forced-wait noise")
    _map_flags(p, 15)
    p.add_argument("--planners", nargs="+", choices=PLANNERS, default=list(PLANNERS))
    p.add_argument("--noise-levels", nargs="+", type=float, default=[0.0, 1e-5, 1e-4])
    p.add_argument("--n-seeds", type=int, default=20)
    p.add_argument("--checkpoint", help="model for the cameta planner (default: zero model)")
    p.add_argument("--tile-size", type=int, default=DEFAULT_TILE)
    p.add_argument("--max-timesteps", type=int, default=1000)

    p = command("plan", "select one route per robot with the model")
    _map_flags(p, 15)
    p.add_argument("--checkpoint", help="model checkpoint (default: zero model)")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--penalty-factor", type=float, default=1.2)
    p.add_argument("--tile-size", type=int, default=DEFAULT_TILE)

    p = command("simulate", "execute naive plans with noise and local repair")
    _map_flags(p, 15)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--max-timesteps", type=int, default=1000)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    config = {k: v for k, v in sorted(vars(args).items()) if k not in ("command", "out")}
    out, h = prepare_run_dir(args.out, args.command, config)
    try:
        COMMANDS[args.command](args, out, h)
    except CametaError as exc:
        print(f"cameta {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
