"""Neuron-astrocyte spiking network simulator for fault-tolerance studies."""

from .config import RunConfig, load_config, parse_config
from .network import NetworkSpec, build_feedforward, cover_all, synapse_count
from .report import RunReport, run_experiment

__version__ = "0.1.0"

__all__ = [
    "NetworkSpec",
    "RunConfig",
    "RunReport",
    "build_feedforward",
    "cover_all",
    "load_config",
    "parse_config",
    "run_experiment",
    "synapse_count",
]
