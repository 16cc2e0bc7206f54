"""SVO-guided decision making for two-vehicle unsignalized-intersection interactions."""

from .config import TrainConfig, desk_config
from .scenario import Scenario, SynthSpec, desk_scenarios, synth_scenario

__all__ = ["Scenario", "SynthSpec", "TrainConfig", "desk_config", "desk_scenarios", "synth_scenario"]
__version__ = "0.1.0"
