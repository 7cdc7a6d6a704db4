"""Markov chain approximation for regime-switching harvesting and renewing."""

__version__ = "0.1.0"

from .chain import Grid, StepType, TransitionKernel, build_grid, build_kernel  # noqa: E402
from .model import HarvestModel, example_model  # noqa: E402
from .simulator import SimConfig, estimate_payoff  # noqa: E402
from .solver import PolicyField, ValueField, extract_thresholds, solve  # noqa: E402

__all__ = [
    "Grid", "StepType", "TransitionKernel", "build_grid", "build_kernel",
    "HarvestModel", "example_model", "SimConfig", "estimate_payoff",
    "PolicyField", "ValueField", "extract_thresholds", "solve", "__version__",
]
