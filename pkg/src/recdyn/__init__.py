"""recdyn: agent-based simulation of longitudinal recommender-system dynamics."""

__version__ = "0.1.0"

from .config import Scenario, ScenarioError, parse_scenario, scenario_from_dict
from .simulation import RunResult, initialize, run, step

__all__ = [
    "Scenario",
    "ScenarioError",
    "parse_scenario",
    "scenario_from_dict",
    "RunResult",
    "initialize",
    "run",
    "step",
    "__version__",
]
