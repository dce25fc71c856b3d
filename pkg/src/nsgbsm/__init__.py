"""Non-stationary geometry-based stochastic channel simulator."""

from .evolution import ClusterLedger, EvolutionParams, SideState, evolve, joint_survival
from .geometry import ArrayGeometry, MotionProfile, WavefrontMode
from .scattering import ClusterShape, sample_scatterers
from .synthesis import ClusterState, PowerParams, Scene, cir, transfer_function
from .tensorio import ChannelTensor
from .scenario import ScenarioConfig, simulate, run_generate

__all__ = [
    "ArrayGeometry", "ChannelTensor", "ClusterLedger", "ClusterShape", "ClusterState",
    "EvolutionParams", "MotionProfile", "PowerParams", "ScenarioConfig", "Scene", "SideState",
    "WavefrontMode", "cir", "evolve", "joint_survival", "run_generate", "sample_scatterers",
    "simulate", "transfer_function",
]

__version__ = "0.1.0"
