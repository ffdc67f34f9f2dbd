"""
Steering engine - operators, stochastic dynamics, decision making and diagnostics
for actively steered, weakly measured qubits.
"""

from steering_core.model import ModelSpec, Outcome, SteeringChoice, build_operators
from steering_core.steering import Protocol, build_protocol, choose_steering
from steering_core.dynamics import RngPolicy, evolve_trajectory, sme_integrate
from steering_core.diagnostics import SweepPoint, TrajectoryRecord

__all__ = [
    "ModelSpec",
    "Outcome",
    "SteeringChoice",
    "build_operators",
    "Protocol",
    "build_protocol",
    "choose_steering",
    "RngPolicy",
    "evolve_trajectory",
    "sme_integrate",
    "SweepPoint",
    "TrajectoryRecord",
]
