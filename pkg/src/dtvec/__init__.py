"""Digital-twin sensing and uploading in vehicular edge computing: simulator and multi-agent trainer."""

__version__ = "0.1.0"

from .channel import ChannelParams
from .env import EnvConfig, Environment
from .mamo import TrainingConfig, evaluate, train
from .metrics import MetricWeights
from .scenario import DeskScenarioParams, Scenario, build_desk_scenario

__all__ = [
    "ChannelParams",
    "DeskScenarioParams",
    "EnvConfig",
    "Environment",
    "MetricWeights",
    "Scenario",
    "TrainingConfig",
    "build_desk_scenario",
    "evaluate",
    "train",
    "__version__",
]
