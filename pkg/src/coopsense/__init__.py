"""Accuracy-aware cooperative sensing and computing for connected vehicles.

Pipeline: ray-cast LiDAR scenes (``scene``), voxel quality indicators
(``quality``), a learned accuracy estimator (``accuracy``), the network and
delay model (``netmodel``), the inner resource allocator (``resalloc``), the
genetic outer loop (``ga``), benchmark schemes (``bench``) and the
experiment runner (``cli``).
"""
from .accuracy import AccuracyEstimator, OracleParams, TrainConfig, oracle_accuracy, train_mlp
from .context import TaskContext, build_context, evaluate
from .ga import GaConfig, exhaustive_solve
from .ga import run as run_ga
from .netmodel import Assignment, SystemParams
from .quality import QualityIndicator, compute_indicator, fuse_indicators
from .resalloc import ActiveProblem, AllocationResult, brute_force_oracle, feasibility, solve_p2
from .scene import BoundingBox, LidarConfig, Scenario, make_default_scenario, simulate_lidar

__version__ = "0.1.0"

__all__ = [
    "AccuracyEstimator", "ActiveProblem", "AllocationResult", "Assignment", "BoundingBox",
    "GaConfig", "LidarConfig", "OracleParams", "QualityIndicator", "Scenario", "SystemParams",
    "TaskContext", "TrainConfig", "brute_force_oracle", "build_context", "compute_indicator",
    "evaluate", "exhaustive_solve", "feasibility", "fuse_indicators", "make_default_scenario",
    "oracle_accuracy", "run_ga", "simulate_lidar", "solve_p2", "train_mlp",
]
