"""Pseudo-random Bayesian inference for untrusted collaborative perception.

The package simulates a fleet of vehicles sharing perception, detects the
malicious contributors with two group validations per attacked frame, and
ships closed-form oracles for the convergence behaviour of the attacker-count
estimate.
"""

from prbi.core import PrbiConfig, PrbiState, Rounding, initial_state, step
from prbi.detections import Box2D, DetectionSet, hungarian_match, iou, jaccard
from prbi.fleet import AttackModel, FleetOracle, WorldConfig

__all__ = [
    "AttackModel",
    "Box2D",
    "DetectionSet",
    "FleetOracle",
    "PrbiConfig",
    "PrbiState",
    "Rounding",
    "WorldConfig",
    "hungarian_match",
    "initial_state",
    "iou",
    "jaccard",
    "step",
]

__version__ = "0.1.0"
