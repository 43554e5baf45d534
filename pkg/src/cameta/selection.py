"""Time-constraint validation and buffer-time route selection."""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParams, LengthMismatch, NoValidPath
from .hetgraph import build_dynamic_layer, build_static_layer, DEFAULT_TILE
from .nn.model import DMS, forward_recurrent
from .planners import astar, suggest_routes


@dataclass(frozen=True)
class CandidateEvaluation:
    candidate_index: int
    etas: tuple
    valid: bool
    cost: float


def path_cost(etas, tc):
    """Sum over robots of (max(TC) - (TC_i - eta_i))^2."""
    etas = np.asarray(etas, dtype=np.float64)
    tc = np.asarray(tc, dtype=np.float64)
    if etas.shape != tc.shape or etas.ndim != 1:
        raise LengthMismatch(f"{etas.size} etas vs {tc.size} time constraints")
    if etas.size == 0:
        raise InvalidParams("need at least one robot")
    return float(np.sum((tc.max() - (tc - etas)) ** 2))


def evaluate_candidates(candidates, tc, inclusive=True):
    tc = np.asarray(tc, dtype=np.float64)
    out = []
    for i, etas in enumerate(candidates):
        etas = np.asarray(etas, dtype=np.float64)
        ok = etas <= tc if inclusive else etas < tc
        out.append(CandidateEvaluation(i, tuple(etas.tolist()), bool(np.all(ok)), path_cost(etas, tc)))
    return out


def select_path(candidates, tc, inclusive=True):
    """Index of the cheapest candidate meeting every deadline (ties: lower index).

    With ``inclusive`` (default) arriving exactly at the deadline counts as
    meeting it.
    """
    if len(candidates) == 0:
        raise InvalidParams("need at least one candidate")
    evals = evaluate_candidates(candidates, tc, inclusive)
    valid = [e for e in evals if e.valid]
    if not valid:
        best = min(evals, key=lambda e: (e.cost, e.candidate_index))
        raise NoValidPath("no candidate meets every time constraint", best.candidate_index)
    return min(valid, key=lambda e: (e.cost, e.candidate_index)).candidate_index


def plan_cameta(grid_map, tasks, params, k=5, penalty_factor=1.2, tile_size=DEFAULT_TILE,
                static=None, t_current=0):
    """Commit one route per robot in id order, each chosen by predicted arrivals.

    For robot i every suggested route is swapped into the current plan set
    (robots not yet planned keep their naive A* route), the model predicts
    every robot's arrival, and :func:`select_path` picks. If no route meets
    all deadlines the least costly one is committed anyway.

    Returns the committed plans and per-robot selection records.
    """
    static = static or build_static_layer(grid_map, tile_size)
    order = sorted(range(len(tasks)), key=lambda i: tasks[i].id)
    plans = [astar(grid_map, t.start, t.goal) for t in tasks]
    tc = np.array([t.time_constraint for t in tasks], dtype=np.float64)
    log = []
    for i in order:
        routes = suggest_routes(grid_map, tasks[i].start, tasks[i].goal, k, penalty_factor)
        etas = []
        for r in routes:
            trial = list(plans)
            trial[i] = r
            g = build_dynamic_layer(static, trial, tasks, t_current=t_current)
            etas.append(g.robot_arrivals(forward_recurrent(g, params, DMS)))
        try:
            pick, valid = select_path(etas, tc), True
        except NoValidPath as exc:
            pick, valid = exc.best_invalid, False
        plans[i] = routes[pick]
        log.append({"agent": tasks[i].id, "n_candidates": len(routes), "chosen": pick, "valid": valid})
    return plans, log
