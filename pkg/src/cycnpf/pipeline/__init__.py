"""Stage orchestration for the post-filter experiments (see ``cli`` for the command line)."""

from .config import ConfigError, ExperimentConfig, config_from_dict, load_config
from .routing import ROUTING, RoutingError, route
from .stages import DataError, PartialEvaluation, Run, StageFailed, degrade, output_name
from .store import RunManifest, StageOrderError, tree_hash

__all__ = [
    "ConfigError", "DataError", "ExperimentConfig", "PartialEvaluation", "ROUTING", "RoutingError", "Run",
    "RunManifest", "StageFailed", "StageOrderError", "config_from_dict", "degrade", "load_config",
    "output_name", "route", "tree_hash",
]
