"""STAR-RIS assisted over-the-air computation: channel model, AO-BPC and benchmarks."""
from .aobpc import IterationTrace, run_aobpc
from .baselines import RandomCoupling, SchemeId, run_all, run_scheme
from .channel import ChannelSet, generate_channels
from .model import BeamformerState, compute_mse
from .scenario import ConfigError, SystemConfig, build_geometry, default_config, desk_config, make_rng

__all__ = [
    "BeamformerState",
    "ChannelSet",
    "ConfigError",
    "IterationTrace",
    "RandomCoupling",
    "SchemeId",
    "SystemConfig",
    "build_geometry",
    "compute_mse",
    "default_config",
    "desk_config",
    "generate_channels",
    "make_rng",
    "run_aobpc",
    "run_all",
    "run_scheme",
]
