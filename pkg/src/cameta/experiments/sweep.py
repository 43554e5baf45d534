"""Planner comparison under forced-wait noise on a fixed task set."""

import numpy as np

from ..baselines import CBS_MAX_AGENTS, CBS_MAX_SIDE, cbs, pibt, trace_to_plans
from ..errors import BudgetExceeded, InvalidParams, Timeout, Unsolvable
from ..planners import astar
from ..selection import plan_cameta
from ..simulator import SimConfig, makespan, run, soc

PLANNERS = ("naive", "cameta", "pibt", "cbs")


def cbs_applicable(grid_map, tasks):
    return len(tasks) <= CBS_MAX_AGENTS and max(grid_map.width, grid_map.height) <= CBS_MAX_SIDE


def planner_plans(name, grid_map, tasks, params=None, seed=0):
    """Noise-free plans of one planner; the sweep then replays them under noise."""
    if name == "naive":
        return [astar(grid_map, t.start, t.goal) for t in tasks]
    if name == "cameta":
        if params is None:
            raise InvalidParams("cameta needs model parameters")
        return plan_cameta(grid_map, tasks, params)[0]
    if name == "pibt":
        return trace_to_plans(pibt(grid_map, tasks, seed=seed))
    if name == "cbs":
        return list(cbs(grid_map, tasks).paths)
    raise InvalidParams(f"unknown planner {name!r}")


def noise_sweep(grid_map, tasks, planners, noise_levels, n_seeds, params=None,
                max_timesteps=1000, seed0=0):
    """Replay each planner's plans at every noise level and noise seed.

    Every planner sees the same tasks and the same noise seeds. A planner
    that cannot produce plans is reported once with its error; a replay that
    times out is recorded as such and left out of the means. CBS is skipped
    outside its size guard.

    Returns ``(runs, summary)`` row lists.
    """
    if n_seeds < 1:
        raise InvalidParams("n_seeds must be >= 1")
    runs, summary = [], []
    for name in planners:
        if name == "cbs" and not cbs_applicable(grid_map, tasks):
            continue
        try:
            plans = planner_plans(name, grid_map, tasks, params, seed=seed0)
            error = ""
        except (Timeout, Unsolvable, BudgetExceeded) as exc:
            plans, error = None, type(exc).__name__
        for noise in noise_levels:
            done = []
            for k in range(n_seeds):
                seed = seed0 + k
                row = {"planner": name, "noise": float(noise), "seed": seed,
                       "status": "ok", "makespan": None, "soc": None}
                if plans is None:
                    row["status"] = error
                else:
                    cfg = SimConfig(noise_wait_prob=float(noise), rng_seed=seed, max_timesteps=max_timesteps)
                    try:
                        trace = run(grid_map, tasks, plans, cfg)
                        row["makespan"], row["soc"] = makespan(trace), soc(trace)
                        done.append(row)
                    except Timeout:
                        row["status"] = "Timeout"
                runs.append(row)
            summary.append(_summarize(name, noise, n_seeds, done))
    return runs, summary


def _summarize(name, noise, n_seeds, done):
    ms = np.array([r["makespan"] for r in done], dtype=np.float64)
    sc = np.array([r["soc"] for r in done], dtype=np.float64)
    stat = lambda v, f: float(f(v)) if v.size else None  # noqa: E731
    return {
        "planner": name, "noise": float(noise), "n_seeds": n_seeds, "n_ok": len(done),
        "makespan_mean": stat(ms, np.mean), "makespan_std": stat(ms, np.std),
        "soc_mean": stat(sc, np.mean), "soc_std": stat(sc, np.std),
    }


def relative_increase(summary, planner, lo, hi, key="soc_mean"):
    """(value at noise ``hi`` - value at ``lo``) / value at ``lo``."""
    pick = {r["noise"]: r[key] for r in summary if r["planner"] == planner}
    return (pick[hi] - pick[lo]) / pick[lo]


RUN_COLUMNS = ["planner", "noise", "seed", "status", "makespan", "soc"]
SUMMARY_COLUMNS = ["planner", "noise", "n_seeds", "n_ok", "makespan_mean", "makespan_std", "soc_mean", "soc_std"]
