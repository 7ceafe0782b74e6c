"""ReLU-network to time-to-first-spike SNN conversion and simulation."""

from .core import (
    KernelParams,
    LayerSpec,
    NetworkSpec,
    LayerState,
    PhaseSchedule,
    RunStats,
    validate_network,
    save_network,
    load_network,
)

__all__ = [
    "KernelParams",
    "LayerSpec",
    "NetworkSpec",
    "LayerState",
    "PhaseSchedule",
    "RunStats",
    "validate_network",
    "save_network",
    "load_network",
]

__version__ = "0.1.0"
