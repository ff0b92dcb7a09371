"""Two-type jump-and-drift particle model: closed forms, exact simulation,
Monte Carlo estimators and the mean-field transport solvers."""

from .model import (
    AsymptoticConstants,
    DegenerateVelocitiesError,
    InitialMoments,
    ModelParams,
    NumericalInstabilityError,
    asymptotic_constants,
    gap_rate,
    lambda_plus_expansion,
    limiting_velocity,
    mean_trajectories,
    regime_curve,
    spectral_eigen,
    variance_trajectories,
)
from .sim import ParticleState, apply_event, new_state, next_event, observables, run_until

__all__ = [
    "AsymptoticConstants",
    "DegenerateVelocitiesError",
    "InitialMoments",
    "ModelParams",
    "NumericalInstabilityError",
    "ParticleState",
    "apply_event",
    "asymptotic_constants",
    "gap_rate",
    "lambda_plus_expansion",
    "limiting_velocity",
    "mean_trajectories",
    "new_state",
    "next_event",
    "observables",
    "regime_curve",
    "run_until",
    "spectral_eigen",
    "variance_trajectories",
]
