"""Sampled-data NMPC on lifted (intersample) trajectories with FSFH gridding."""

from .cost import BoxSet, QuadraticWeights
from .lifting import ConfigurationError, HoldSpec, chain_lift, fsfh_lift, hold_eval
from .mpc import (
    Metrics,
    MpcConfig,
    ScenarioResult,
    compute_metrics,
    run_controller,
    run_conventional_mpc,
    run_lifted_mpc,
)
from .plants import PlantModel, cartpole, make_plant, van_der_pol
from .solver import SolverOptions, minimize_box

__all__ = [
    "BoxSet",
    "QuadraticWeights",
    "ConfigurationError",
    "HoldSpec",
    "chain_lift",
    "fsfh_lift",
    "hold_eval",
    "Metrics",
    "MpcConfig",
    "ScenarioResult",
    "compute_metrics",
    "run_controller",
    "run_conventional_mpc",
    "run_lifted_mpc",
    "PlantModel",
    "cartpole",
    "make_plant",
    "van_der_pol",
    "SolverOptions",
    "minimize_box",
]

__version__ = "0.1.0"
