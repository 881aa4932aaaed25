"""Cycle-level simulator of a reconfigurable digital compute-in-memory SNN core."""

from .config import (
    ArchParams,
    EnergyParams,
    LayerSpec,
    Mode,
    NetworkSpec,
    NeuronSpec,
    PrecisionMode,
    neurons_per_macro,
    parallel_channels,
    validate_precision,
)
from .golden import run_network
from .mapper import map_network, tile_layer
from .metrics import RunReport, calibrate, make_report
from .netfile import load_network, save_network
from .pipeline import simulate_network

__version__ = "0.1.0"

__all__ = [
    "ArchParams", "EnergyParams", "LayerSpec", "Mode", "NetworkSpec", "NeuronSpec", "PrecisionMode",
    "neurons_per_macro", "parallel_channels", "validate_precision", "run_network", "map_network",
    "tile_layer", "RunReport", "calibrate", "make_report", "load_network", "save_network",
    "simulate_network",
]
