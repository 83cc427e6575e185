"""Two-stage lexicographic EE/fairness optimizer for RIS-assisted mmWave MU-MISO."""

from .channel import ChannelConfig, generate_scenario
from .harness import ExperimentSpec, parse_config, run_experiment, run_trial
from .stage1 import stage1_optimize
from .stage2 import stage2_optimize
from .sysmodel import ChannelSet, SolutionReport, SystemConfig

__all__ = [
    "ChannelConfig",
    "ChannelSet",
    "ExperimentSpec",
    "SolutionReport",
    "SystemConfig",
    "generate_scenario",
    "parse_config",
    "run_experiment",
    "run_trial",
    "stage1_optimize",
    "stage2_optimize",
]

__version__ = "0.1.0"
