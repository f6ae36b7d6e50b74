"""Piecewise-affine gene network analysis and qualitative feedback synthesis."""
from __future__ import annotations

from .control import (
    BoundTerm, BoxInterval, SynthesisResult, extend_with_controller, fast_controller_report,
    focal_region_for_box, synthesize, u_interval,
)
from .cycle import CycleSequence, CycleVerdict, classify_cycle, return_map, return_map_jacobian
from .graph import ControlLaw, TransitionGraph, build_transition_graph, strongly_connected_cycles
from .io import load_example, load_network
from .model import Network, exit_directions, exit_event, focal_point, transition_map, validate_network
from .sim import Budget, Trajectory, sample, simulate

__version__ = "0.1.0"

__all__ = [
    "BoundTerm", "BoxInterval", "Budget", "ControlLaw", "CycleSequence", "CycleVerdict", "Network",
    "SynthesisResult", "Trajectory", "TransitionGraph", "build_transition_graph", "classify_cycle",
    "exit_directions", "exit_event", "extend_with_controller", "fast_controller_report", "focal_point",
    "focal_region_for_box", "load_example", "load_network", "return_map", "return_map_jacobian", "sample",
    "simulate", "strongly_connected_cycles", "synthesize", "transition_map", "u_interval", "validate_network",
]
