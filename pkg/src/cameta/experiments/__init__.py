"""Dataset generation, training, evaluation and planner sweeps."""

from .dataset import ScenarioDataset, gen_dataset, sample_scenario
from .sweep import noise_sweep
from .training import evaluate, train

__all__ = ["ScenarioDataset", "evaluate", "gen_dataset", "noise_sweep", "sample_scenario", "train"]
