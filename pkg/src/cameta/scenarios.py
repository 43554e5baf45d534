"""Task sampling shared by the dataset builder, the sweep and the tests."""

import numpy as np

from .errors import GenerationFailed
from .gridworld import GridMap
from .planners import distance_field
from .simulator import AgentTask

TC_SLACK = 1.5


def sample_endpoints(grid_map, n_agents, rng, max_tries=200):
    """Distinct starts and distinct goals forming a well-formed instance.

    Well-formed: every agent can reach its goal without stepping on any other
    agent's start or goal. Under stay-at-target semantics this rules out
    goals sealed off by robots parked on their own goals.
    """
    free = grid_map.free_cells()
    if 2 * n_agents > len(free):
        raise GenerationFailed(
            f"{n_agents} robots need {2 * n_agents} distinct endpoints, map has {len(free)} free cells"
        )
    for _ in range(max_tries):
        pick = rng.choice(len(free), size=2 * n_agents, replace=False)
        starts = [free[i] for i in pick[:n_agents]]
        goals = [free[i] for i in pick[n_agents:]]
        if _well_formed(grid_map, starts, goals):
            return starts, goals
    raise GenerationFailed(f"no well-formed endpoint set after {max_tries} draws")


def _well_formed(grid_map, starts, goals):
    endpoints = set(starts) | set(goals)
    for s, g in zip(starts, goals):
        occ = grid_map.occupancy.copy()
        for c in endpoints:
            if c != s and c != g:
                occ[grid_map.index(c)] = 1
        sub = GridMap(grid_map.width, grid_map.height, occ)
        if not np.isfinite(distance_field(sub, {g: 0})[s[1], s[0]]):
            return False
    return True


def constant_time_constraint(plans, slack=TC_SLACK):
    """One deadline for everyone: ``slack`` x the longest naive travel time."""
    longest = max((len(p.cells) - 1 for p in plans), default=0)
    return int(np.floor(slack * longest + 0.5))


def make_tasks(starts, goals, plans, slack=TC_SLACK):
    tc = constant_time_constraint(plans, slack)
    return [AgentTask(i, s, g, tc) for i, (s, g) in enumerate(zip(starts, goals))]
