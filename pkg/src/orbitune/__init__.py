"""Lyapunov-based orbital tracking control with gains tuned by augmented random search."""
from .controller import Gains, control, lyapunov, lyapunov_gradient, xi, xi_dot
from .dynamics import (
    MU_EARTH,
    R_EARTH,
    CartesianState,
    DomainError,
    EquinoctialState,
    KeplerianElements,
    SingularityError,
    equinoctial_to_cartesian,
    equinoctial_to_keplerian,
    error_dynamics,
    from_error_coords,
    keplerian_to_equinoctial,
    output_distance,
    propagate_reference,
    to_error_coords,
)
from .episode import CostParams, EpisodeResult, SimConfig, UnitSystem, compute_cost, run_episode
from .ars import ArsConfig, IterationLog, ars_step, perturb, sample_directions, train

__all__ = [
    "MU_EARTH", "R_EARTH", "CartesianState", "DomainError", "EquinoctialState",
    "KeplerianElements", "SingularityError", "equinoctial_to_cartesian",
    "equinoctial_to_keplerian", "error_dynamics", "from_error_coords",
    "keplerian_to_equinoctial", "output_distance", "propagate_reference",
    "to_error_coords", "Gains", "control", "lyapunov", "lyapunov_gradient", "xi",
    "xi_dot", "CostParams", "EpisodeResult", "SimConfig", "UnitSystem",
    "compute_cost", "run_episode", "ArsConfig", "IterationLog", "ars_step",
    "perturb", "sample_directions", "train",
]
