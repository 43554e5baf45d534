"""Conflict-aware arrival-time prediction and route selection for warehouse robot fleets."""

from .gridworld import GridMap, generate_warehouse_map, load_map, save_map
from .kernels import BACKEND
from .planners import Path, astar, suggest_routes
from .simulator import AgentTask, SimConfig, detect_conflicts, run

__version__ = "0.1.0"

__all__ = [
    "AgentTask", "BACKEND", "GridMap", "Path", "SimConfig", "astar", "detect_conflicts",
    "generate_warehouse_map", "load_map", "run", "save_map", "suggest_routes",
]
