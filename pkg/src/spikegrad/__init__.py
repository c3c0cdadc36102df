"""Surrogate-gradient training for spiking neural networks.

Numpy-backed reverse-mode autodiff, integrate-and-fire dynamics with an
arctangent surrogate, three normalization regimes, and an experiment
harness for weight-decay, spike-penalty, and normalization studies.
"""

from .config import ExperimentConfig, load_config, parse_config_text
from .errors import (ConfigError, DataError, DegeneracyError, TrainingDiverged,
                     UsageError)
from .harness import evaluate, run_experiment, run_sweep, train_epoch
from .models import NetworkConfig, build_network
from .objectives import RegularizerConfig

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DataError", "DegeneracyError", "TrainingDiverged",
    "UsageError", "ExperimentConfig", "NetworkConfig", "RegularizerConfig",
    "build_network", "evaluate", "load_config", "parse_config_text",
    "run_experiment", "run_sweep", "train_epoch", "__version__",
]
