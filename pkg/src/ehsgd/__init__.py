"""Distributed SGD over energy-harvesting users: simulator, scheduling policies, bound checks."""

from .analysis import BoundInputs, VerifierReport, compute_C, convergence_bound, run_suite
from .config import config_from_dict, config_to_dict, group_periods_preset, parse_config
from .energy import (Bernoulli, DeterministicSchedule, EnergyTrace, UniformWindow, inter_arrival,
                     periodic_schedule, realize_arrivals, realize_trace)
from .estimator import EnergyHarvestingSGDClassifier
from .exceptions import EHSGDError
from .objective import LocalDataset, LogisticLoss, Objective, QuadraticLoss, SyntheticSpec, make_synthetic
from .scheduling import make_policy, simulate_participation
from .training import LearningRate, MetricsTrace, RunConfig, run, server_update

__version__ = "0.1.0"

__all__ = [
    "Bernoulli", "BoundInputs", "DeterministicSchedule", "EHSGDError", "EnergyHarvestingSGDClassifier",
    "EnergyTrace", "LearningRate", "LocalDataset", "LogisticLoss", "MetricsTrace", "Objective",
    "QuadraticLoss", "RunConfig", "SyntheticSpec", "UniformWindow", "VerifierReport", "compute_C",
    "config_from_dict", "config_to_dict", "convergence_bound", "inter_arrival", "make_policy",
    "make_synthetic", "group_periods_preset", "parse_config", "periodic_schedule", "realize_arrivals",
    "realize_trace", "run", "run_suite", "server_update", "simulate_participation",
]
