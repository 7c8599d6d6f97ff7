"""Proactive pod-count integration: turn predicted vCPU demand into replicas.

The step is deliberately small. Clamp the predicted demand into the allowed
resource band, compare it with what is currently allocated, and move the pod
count by the number of whole pods needed to cover the difference, never below
one and never above the per-service ceiling. Everything that knows about
models or clusters lives elsewhere; this module is pure arithmetic so it can
be fuzzed hard.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import ValidationError
from .forecast_lstm import LstmModel, lstm_forward
from .predict_gcn import GcnModel, ServiceGraph, predict_resource


@dataclass(frozen=True)
class ScalingBounds:
    """Per-service resource band and pod limits."""

    r_lb: float
    r_ub: float
    pod_capacity: float
    max_pods: int

    def __post_init__(self):
        if self.r_lb <= 0:
            raise ValidationError(f"r_lb must be positive, got {self.r_lb}")
        if self.r_ub < self.r_lb:
            raise ValidationError(f"r_ub {self.r_ub} below r_lb {self.r_lb}")
        if self.pod_capacity <= 0:
            raise ValidationError(f"pod_capacity must be positive, got {self.pod_capacity}")
        if self.max_pods < 1:
            raise ValidationError(f"max_pods must be >= 1, got {self.max_pods}")


@dataclass(frozen=True)
class ScalingDecision:
    service: str
    r_prev: float
    r_new: float
    n_prev: int
    n_new: int

    @property
    def delta(self) -> int:
        return self.n_new - self.n_prev


def _check_aligned(current_r, current_n, predicted, bounds):
    keys = set(current_r)
    for name, table in (("current_n", current_n), ("predicted", predicted),
                        ("bounds", bounds)):
        if set(table) != keys:
            missing = sorted(keys.symmetric_difference(table))
            raise ValidationError(f"{name} keys do not match current_r: {missing}")


def integrate_step(current_r: Mapping[str, float],
                   current_n: Mapping[str, int],
                   predicted: Mapping[str, float],
                   bounds: Mapping[str, ScalingBounds]) -> dict[str, ScalingDecision]:
    """One scaling decision per service from predicted vCPU demand.

    The prediction is clamped to [r_lb, r_ub]; the pod count then moves by
    ceil(|clamped - current| / pod_capacity) in the direction of the change,
    bounded to [1, max_pods]. Equal demand leaves the count untouched.
    """
    _check_aligned(current_r, current_n, predicted, bounds)
    decisions = {}
    for service in current_r:
        b = bounds[service]
        r_cur = float(current_r[service])
        n_cur = int(current_n[service])
        if not 1 <= n_cur <= b.max_pods:
            raise ValidationError(f"current pod count for {service!r} outside "
                                  f"[1, {b.max_pods}]: {n_cur}")
        if not b.r_lb <= r_cur <= b.r_ub:
            raise ValidationError(f"current allocation for {service!r} outside "
                                  f"[{b.r_lb}, {b.r_ub}]: {r_cur}")
        raw = float(predicted[service])
        if not math.isfinite(raw):
            raise ValidationError(f"predicted demand for {service!r} is not finite")
        r_new = min(max(raw, b.r_lb), b.r_ub)
        if r_new > r_cur:
            n_new = min(n_cur + math.ceil((r_new - r_cur) / b.pod_capacity), b.max_pods)
        elif r_new < r_cur:
            n_new = max(n_cur - math.ceil((r_cur - r_new) / b.pod_capacity), 1)
            n_new = min(n_new, b.max_pods)
        else:
            n_new = min(max(n_cur, 1), b.max_pods)
        decisions[service] = ScalingDecision(service=service, r_prev=r_cur, r_new=r_new,
                                             n_prev=n_cur, n_new=n_new)
    return decisions


def predict_demand(lstm_models: Mapping[str, LstmModel],
                   gcn_model: GcnModel,
                   graph: ServiceGraph,
                   history: Mapping[str, Sequence[float]]
                   ) -> tuple[dict[str, float], dict[str, float]]:
    """Per-service (next-minute forecast, predicted vCPU demand).

    history carries each service's request rates up to and including now; the
    last k feed the forecaster, the last k-1 plus the forecast feed the graph
    predictor.
    """
    k = gcn_model.config.window
    features = np.empty((graph.size, k))
    forecasts = {}
    for ni, service in enumerate(graph.nodes):
        if service not in lstm_models:
            raise ValidationError(f"no forecaster for service {service!r}")
        series = np.asarray(history[service], dtype=np.float64)
        if len(series) < k:
            raise ValidationError(f"history for {service!r} has {len(series)} points, need {k}")
        window = series[-k:]
        ahead = max(lstm_forward(lstm_models[service], window), 0.0)
        forecasts[service] = ahead
        features[ni, :k - 1] = series[-(k - 1):]
        features[ni, k - 1] = ahead

    demand_vec = predict_resource(gcn_model, graph, features)
    demand = {service: float(demand_vec[ni]) for ni, service in enumerate(graph.nodes)}
    return forecasts, demand


def run_policy_step(lstm_models: Mapping[str, LstmModel],
                    gcn_model: GcnModel,
                    graph: ServiceGraph,
                    history: Mapping[str, Sequence[float]],
                    current_r: Mapping[str, float],
                    current_n: Mapping[str, int],
                    bounds: Mapping[str, ScalingBounds]
                    ) -> tuple[dict[str, ScalingDecision], dict[str, float], dict[str, float]]:
    """Full prediction pipeline for one minute.

    current_r is the allocation state the policy carries between minutes: each
    decision's r_new is the next step's current_r. Seeding it from the clamped
    first prediction avoids a spurious move on the first step; deriving it
    fresh from pods * capacity every minute would re-open the gap the previous
    decision just closed and make the count oscillate around any demand that
    is not a whole number of pods. Returns the decisions plus the per-service
    forecasts and demand predictions so callers can log them.
    """
    forecasts, demand = predict_demand(lstm_models, gcn_model, graph, history)
    decisions = integrate_step(current_r, current_n, demand, bounds)
    return decisions, forecasts, demand
