"""Proactive autoscaling testbed for microservice call graphs.

Forecast per-service workload with small LSTMs, predict per-service vCPU
demand with a graph convolutional network over the call graph, and size pod
counts one minute ahead. A minute-resolution cluster simulator and a reactive
threshold autoscaler provide the baseline for comparison.
"""
from .autoscaler import (ScalingBounds, ScalingDecision, integrate_step, predict_demand,
                         run_policy_step)
from .cluster_sim import (DemandModel, HpaConfig, PredictivePolicy, ReactivePolicy,
                          SimulationLog, run_simulation)
from .config import ExperimentConfig
from .errors import (ConfigError, DivergenceError, EmptyDatasetError, GraphPhpaError,
                     RunMismatchError, ShapeError, TraceFormatError, ValidationError)
from .forecast_lstm import LstmConfig, LstmModel, lstm_forward, make_windows, train_lstm
from .predict_gcn import (GcnConfig, GcnModel, ServiceGraph, build_resource_dataset,
                          gcn_forward, normalize_adjacency, predict_resource, train_gcn)
from .traces import (WorkloadTrace, generate_synthetic_trace, interpolate_to_minutes,
                     load_trace, save_trace, split_dataset)

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DemandModel", "DivergenceError", "EmptyDatasetError",
    "ExperimentConfig", "GcnConfig", "GcnModel", "GraphPhpaError", "HpaConfig",
    "LstmConfig", "LstmModel", "PredictivePolicy", "ReactivePolicy", "RunMismatchError",
    "ScalingBounds", "ScalingDecision", "ServiceGraph", "ShapeError", "SimulationLog",
    "TraceFormatError", "ValidationError", "WorkloadTrace", "build_resource_dataset",
    "gcn_forward", "generate_synthetic_trace", "integrate_step", "interpolate_to_minutes",
    "load_trace", "lstm_forward", "make_windows", "normalize_adjacency",
    "predict_demand", "predict_resource", "run_policy_step", "run_simulation", "save_trace",
    "split_dataset", "train_gcn", "train_lstm",
]
