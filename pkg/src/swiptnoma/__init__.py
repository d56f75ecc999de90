"""Path-following beamforming for multicell NOMA downlinks with energy-harvesting near users."""
from .netmodel import (ConfigError, NetworkConfig, NetworkInstance, PowerNoiseConfig, Scenario,
                       generate_instance, load_instance, load_scenario, save_instance)
from .perf import BeamStatePS, BeamStateTS, OMAPlan
from .sca import ALGORITHMS, InfeasibleScenario, IterationTrace, ScaSettings, run

__version__ = "0.1.0"

__all__ = [
    "ALGORITHMS", "BeamStatePS", "BeamStateTS", "ConfigError", "InfeasibleScenario", "IterationTrace",
    "NetworkConfig", "NetworkInstance", "OMAPlan", "PowerNoiseConfig", "ScaSettings", "Scenario",
    "generate_instance", "load_instance", "load_scenario", "run", "save_instance",
]
