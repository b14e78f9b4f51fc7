from .cli import main
from .config import ExperimentConfig, build_config
from .experiments import run

__all__ = ["main", "ExperimentConfig", "build_config", "run"]
