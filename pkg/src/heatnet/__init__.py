"""Slotted-time simulator for heat-diffusion and back-pressure routing on
multihop wireless networks, with a directed-graph heat-calculus solver as
the analytic reference for long-run behavior."""

from .graph import DirectedEdge, DirectedNetwork, network_from_pairs
from .policies import HDParams, VBPParams
from .scheduling import InterferenceModel, ScheduleSet
from .simulator import Metrics, PolicySpec, RunConfig, RunTrace, run
from .thermal import ThermalGraph, ThermalSolution

__all__ = [
    "DirectedEdge", "DirectedNetwork", "network_from_pairs",
    "HDParams", "VBPParams", "InterferenceModel", "ScheduleSet",
    "Metrics", "PolicySpec", "RunConfig", "RunTrace", "run",
    "ThermalGraph", "ThermalSolution",
]

__version__ = "0.1.0"
