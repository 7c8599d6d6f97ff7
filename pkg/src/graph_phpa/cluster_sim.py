"""Minute-resolution simulator of a small microservice cluster.

External requests enter at one front service and cascade along directed
fan-out edges; each service burns a fixed vCPU cost per request. Pod counts
move either reactively (threshold autoscaler with a stabilization window for
scale-in) or proactively (forecast plus graph predictor). New pods take a
startup delay before they serve traffic, removals land the next minute, and
the whole cluster shares a hard pod budget.

All randomness is keyed by (seed, absolute minute, service index), so the same
minute of the same trace sees identical noise regardless of warmup, policy, or
how much history was simulated before it.
"""
from __future__ import annotations

import csv
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .autoscaler import ScalingBounds, predict_demand, run_policy_step
from .errors import ValidationError
from .forecast_lstm import LstmModel
from .predict_gcn import GcnModel, ServiceGraph
from .tensor import Rng, mix_seed
from .traces import WorkloadTrace, trace_digest

SIM_COLUMNS = ("minute", "service", "external_rps", "service_rps", "pods",
               "utilization", "overloaded", "policy", "decision_delta")
DECISION_COLUMNS = ("minute", "service", "forecast_rps", "predicted_vcpu",
                    "r_prev", "r_new", "n_prev", "n_new", "delta")


@dataclass(frozen=True)
class DemandModel:
    """How requests fan out between services and what each request costs.

    fan_out[u][v] is the mean number of calls to v per request handled by u;
    the edge set must be acyclic. noise_sigma adds mean-one lognormal jitter
    to every internal service's inbound rate, compounding down the chain.
    """

    services: tuple[str, ...]
    entry: str
    cpu_per_request: dict[str, float]
    fan_out: dict[str, dict[str, float]]
    noise_sigma: float = 0.0

    def __post_init__(self):
        services = tuple(self.services)
        object.__setattr__(self, "services", services)
        if len(set(services)) != len(services) or not services:
            raise ValidationError("services must be non-empty and unique")
        if self.entry not in services:
            raise ValidationError(f"entry service {self.entry!r} not in services")
        if set(self.cpu_per_request) != set(services):
            raise ValidationError("cpu_per_request must cover exactly the services")
        if any(c <= 0 for c in self.cpu_per_request.values()):
            raise ValidationError("cpu_per_request values must be positive")
        if self.noise_sigma < 0:
            raise ValidationError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        for u, targets in self.fan_out.items():
            if u not in services:
                raise ValidationError(f"fan_out source {u!r} not in services")
            for v, mult in targets.items():
                if v not in services:
                    raise ValidationError(f"fan_out target {v!r} not in services")
                if v == u:
                    raise ValidationError(f"fan_out self loop on {u!r}")
                if mult <= 0:
                    raise ValidationError(f"fan_out multiplier {u!r}->{v!r} must be positive")
        object.__setattr__(self, "_topo", self._toposort())

    def _toposort(self) -> tuple[str, ...]:
        indeg = {s: 0 for s in self.services}
        for targets in self.fan_out.values():
            for v in targets:
                indeg[v] += 1
        ready = [s for s in self.services if indeg[s] == 0]
        order = []
        while ready:
            u = ready.pop(0)
            order.append(u)
            for v in self.services:
                if v in self.fan_out.get(u, {}):
                    indeg[v] -= 1
                    if indeg[v] == 0:
                        ready.append(v)
        if len(order) != len(self.services):
            raise ValidationError("fan_out graph has a cycle")
        return tuple(order)

    def propagate_workload(self, external_rps: float, minute: int, seed: int,
                           with_noise: bool = True) -> dict[str, float]:
        """Per-service request rates for one minute of external arrivals."""
        if external_rps < 0:
            raise ValidationError(f"external_rps must be >= 0, got {external_rps}")
        rates = {s: 0.0 for s in self.services}
        rates[self.entry] = float(external_rps)
        index = {s: i for i, s in enumerate(self.services)}
        sigma = self.noise_sigma
        for u in self._topo:
            if with_noise and sigma > 0 and u != self.entry:
                z = Rng(mix_seed(seed, minute, index[u])).normal()
                rates[u] *= math.exp(sigma * z - 0.5 * sigma * sigma)
            for v, mult in self.fan_out.get(u, {}).items():
                rates[v] += rates[u] * mult
        return rates

    def resource_usage(self, rates: Mapping[str, float]) -> dict[str, float]:
        return {s: rates[s] * self.cpu_per_request[s] for s in self.services}

    def demand_series(self, external: np.ndarray, start_minute: int, seed: int,
                      with_noise: bool = True) -> tuple[dict[str, np.ndarray], dict[str, np.ndarray]]:
        """Whole-horizon (request rates, vCPU usage) per service."""
        external = np.asarray(external, dtype=np.float64)
        rps = {s: np.empty(len(external)) for s in self.services}
        usage = {s: np.empty(len(external)) for s in self.services}
        for i, x in enumerate(external):
            rates = self.propagate_workload(float(x), start_minute + i, seed, with_noise)
            for s in self.services:
                rps[s][i] = rates[s]
                usage[s][i] = rates[s] * self.cpu_per_request[s]
        return rps, usage

    def to_json_dict(self) -> dict:
        return {"services": list(self.services), "entry": self.entry,
                "cpu_per_request": dict(self.cpu_per_request),
                "fan_out": {u: dict(v) for u, v in self.fan_out.items()},
                "noise_sigma": self.noise_sigma}

    @classmethod
    def from_json_dict(cls, d: dict) -> "DemandModel":
        return cls(services=tuple(d["services"]), entry=d["entry"],
                   cpu_per_request=dict(d["cpu_per_request"]),
                   fan_out={u: dict(v) for u, v in d.get("fan_out", {}).items()},
                   noise_sigma=float(d.get("noise_sigma", 0.0)))


def compute_utilization(rps: float, cpu_per_request: float, pods: int,
                        pod_capacity: float) -> float:
    """Fraction of allocated vCPU in use; above 1.0 means overload."""
    if pods < 1:
        raise ValidationError(f"pods must be >= 1, got {pods}")
    if pod_capacity <= 0:
        raise ValidationError(f"pod_capacity must be positive, got {pod_capacity}")
    return rps * cpu_per_request / (pods * pod_capacity)


def _utilization_map(rates: Mapping[str, float], pods: Mapping[str, int],
                     demand: DemandModel,
                     bounds: Mapping[str, ScalingBounds]) -> dict[str, float]:
    return {s: compute_utilization(rates[s], demand.cpu_per_request[s], pods[s],
                                   bounds[s].pod_capacity)
            for s in demand.services}


def initial_pod_counts(demand: DemandModel, first_external: float,
                       bounds: Mapping[str, ScalingBounds]) -> dict[str, int]:
    """Noise-free sizing for minute zero, shared by every policy.

    Usage is clamped into the per-service resource band first, so a service
    whose guaranteed floor exceeds its opening demand starts at the floor.
    """
    rates = demand.propagate_workload(first_external, minute=0, seed=0, with_noise=False)
    counts = {}
    for s in demand.services:
        b = bounds[s]
        usage = min(max(rates[s] * demand.cpu_per_request[s], b.r_lb), b.r_ub)
        counts[s] = min(max(math.ceil(usage / b.pod_capacity), 1), b.max_pods)
    return counts


@dataclass(frozen=True)
class HpaConfig:
    scale_out: float = 0.9
    scale_in: float = 0.3
    stabilization_minutes: int = 5

    def __post_init__(self):
        if not 0 < self.scale_in < self.scale_out:
            raise ValidationError(f"need 0 < scale_in < scale_out, got "
                                  f"{self.scale_in} / {self.scale_out}")
        if self.stabilization_minutes < 1:
            raise ValidationError("stabilization_minutes must be >= 1")


class ScalingPolicy(ABC):
    """Produces target pod counts once per minute from current observations."""

    name: str = "policy"
    min_history: int = 0

    def begin(self, services: tuple[str, ...]) -> None:
        """Reset any per-run state."""

    @abstractmethod
    def decide(self, minute: int, history: Mapping[str, list[float]],
               utilization: Mapping[str, float], pods: Mapping[str, int]
               ) -> tuple[dict[str, int], list["DecisionRow"]]:
        ...


class ReactivePolicy(ScalingPolicy):
    """Threshold autoscaler: one pod out on breach, one pod in after a calm window."""

    def __init__(self, config: HpaConfig, bounds: Mapping[str, ScalingBounds]):
        self.config = config
        self.bounds = bounds
        self.name = f"reactive@{config.scale_out:g}"
        self._below: dict[str, int] = {}

    def begin(self, services):
        self._below = {s: 0 for s in services}

    def decide(self, minute, history, utilization, pods):
        targets = {}
        for s, util in utilization.items():
            n = pods[s]
            if util > self.config.scale_out:
                targets[s] = min(n + 1, self.bounds[s].max_pods)
                self._below[s] = 0
            elif util < self.config.scale_in:
                self._below[s] += 1
                if self._below[s] >= self.config.stabilization_minutes and n > 1:
                    targets[s] = n - 1
                    self._below[s] = 0
                else:
                    targets[s] = n
            else:
                self._below[s] = 0
                targets[s] = n
        return targets, []


class PredictivePolicy(ScalingPolicy):
    """Forecast next-minute workload, predict demand on the graph, size pods ahead.

    Carries the clamped prediction forward as its allocation state; each
    decision moves the pod count by the change in that state, so a steady
    prediction leaves the count alone. The state is seeded from the first
    prediction (no pod move on the first decision) rather than from pods times
    capacity, which would manufacture a phantom change whenever the starting
    allocation is not exactly the predicted demand.
    """

    name = "phpa"

    def __init__(self, lstm_models: Mapping[str, LstmModel], gcn_model: GcnModel,
                 graph: ServiceGraph, bounds: Mapping[str, ScalingBounds]):
        self.lstm_models = dict(lstm_models)
        self.gcn_model = gcn_model
        self.graph = graph
        self.bounds = bounds
        self.min_history = gcn_model.config.window
        self._r: dict[str, float] | None = None

    def begin(self, services):
        self._r = None

    def decide(self, minute, history, utilization, pods):
        if self._r is None:
            forecasts, demand = predict_demand(self.lstm_models, self.gcn_model,
                                               self.graph, history)
            self._r = {s: min(max(demand[s], self.bounds[s].r_lb), self.bounds[s].r_ub)
                       for s in self.graph.nodes}
            records = [DecisionRow(minute=minute, service=s, forecast_rps=forecasts[s],
                                   predicted_vcpu=demand[s], r_prev=self._r[s],
                                   r_new=self._r[s], n_prev=pods[s], n_new=pods[s],
                                   delta=0)
                       for s in self.graph.nodes]
            return dict(pods), records
        decisions, forecasts, demand = run_policy_step(
            self.lstm_models, self.gcn_model, self.graph, history, self._r, pods,
            self.bounds)
        self._r = {s: d.r_new for s, d in decisions.items()}
        targets = {s: d.n_new for s, d in decisions.items()}
        records = [DecisionRow(minute=minute, service=s, forecast_rps=forecasts[s],
                               predicted_vcpu=demand[s], r_prev=d.r_prev, r_new=d.r_new,
                               n_prev=d.n_prev, n_new=d.n_new, delta=d.delta)
                   for s, d in decisions.items()]
        return targets, records


@dataclass(frozen=True)
class SimRow:
    minute: int
    service: str
    external_rps: float
    service_rps: float
    pods: int
    utilization: float
    overloaded: bool
    policy: str
    decision_delta: int


@dataclass(frozen=True)
class DecisionRow:
    minute: int
    service: str
    forecast_rps: float
    predicted_vcpu: float
    r_prev: float
    r_new: float
    n_prev: int
    n_new: int
    delta: int


@dataclass
class SimulationLog:
    policy_name: str
    seed: int
    trace_sha256: str
    start_minute: int
    horizon: int
    services: tuple[str, ...]
    rows: list[SimRow] = field(default_factory=list)
    decisions: list[DecisionRow] = field(default_factory=list)

    def pod_minutes(self, service: str | None = None) -> int:
        return sum(r.pods for r in self.rows if service is None or r.service == service)

    def overload_minutes(self, service: str | None = None) -> int:
        return sum(1 for r in self.rows
                   if r.overloaded and (service is None or r.service == service))

    def peak_total_pods(self) -> int:
        totals: dict[int, int] = {}
        for r in self.rows:
            totals[r.minute] = totals.get(r.minute, 0) + r.pods
        return max(totals.values()) if totals else 0

    def summary(self) -> dict:
        per_service = {}
        for s in self.services:
            utils = [r.utilization for r in self.rows if r.service == s]
            per_service[s] = {
                "pod_minutes": self.pod_minutes(s),
                "overload_minutes": self.overload_minutes(s),
                "mean_utilization": sum(utils) / len(utils) if utils else 0.0,
                "max_utilization": max(utils) if utils else 0.0,
            }
        return {
            "policy": self.policy_name,
            "seed": self.seed,
            "trace_sha256": self.trace_sha256,
            "start_minute": self.start_minute,
            "horizon": self.horizon,
            "service_order": list(self.services),
            "services": per_service,
            "totals": {
                "pod_minutes": self.pod_minutes(),
                "overload_minutes": self.overload_minutes(),
                "peak_total_pods": self.peak_total_pods(),
            },
        }

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(SIM_COLUMNS)
            for r in self.rows:
                writer.writerow([r.minute, r.service, repr(r.external_rps),
                                 repr(r.service_rps), r.pods, repr(r.utilization),
                                 int(r.overloaded), r.policy, r.decision_delta])

    def write_decisions_csv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(DECISION_COLUMNS)
            for d in self.decisions:
                writer.writerow([d.minute, d.service, repr(d.forecast_rps),
                                 repr(d.predicted_vcpu), repr(d.r_prev), repr(d.r_new),
                                 d.n_prev, d.n_new, d.delta])


def run_simulation(trace: WorkloadTrace, demand: DemandModel, policy: ScalingPolicy,
                   bounds: Mapping[str, ScalingBounds], *, seed: int,
                   horizon: int | None = None, warmup: int | None = None,
                   startup_delay: int = 1, max_total_pods: int = 79,
                   initial_pods: Mapping[str, int] | None = None) -> SimulationLog:
    """Drive the cluster over a minute trace under one scaling policy.

    Decisions made at minute m schedule pod additions to become ready at
    m + startup_delay and removals at m + 1. No decisions are taken during the
    first max(warmup, policy.min_history) minutes. The cluster-wide pod budget
    is enforced when additions are scheduled, counting pods already pending.
    """
    if trace.resolution != 1:
        raise ValidationError(f"simulation needs a 1-minute trace, got resolution "
                              f"{trace.resolution}")
    if set(bounds) != set(demand.services):
        raise ValidationError("bounds keys must match demand services")
    if startup_delay < 1:
        raise ValidationError(f"startup_delay must be >= 1, got {startup_delay}")
    if horizon is None:
        horizon = len(trace)
    if not 1 <= horizon <= len(trace):
        raise ValidationError(f"horizon {horizon} outside [1, {len(trace)}]")
    warm = max(warmup if warmup is not None else 0, policy.min_history)

    external = trace.values[:horizon]
    if initial_pods is None:
        pods = initial_pod_counts(demand, float(external[0]), bounds)
    else:
        pods = {s: int(initial_pods[s]) for s in demand.services}
        for s, n in pods.items():
            if not 1 <= n <= bounds[s].max_pods:
                raise ValidationError(f"initial pods for {s!r} out of range: {n}")
    if sum(pods.values()) > max_total_pods:
        raise ValidationError(f"initial pods exceed cluster budget {max_total_pods}")

    policy.begin(demand.services)
    log_ = SimulationLog(policy_name=policy.name, seed=seed,
                         trace_sha256=trace_digest(trace),
                         start_minute=trace.start_minute, horizon=len(external),
                         services=demand.services)
    pending: list[tuple[int, str, int]] = []  # (ready_minute, service, delta)
    history: dict[str, list[float]] = {s: [] for s in demand.services}

    for i in range(len(external)):
        minute = trace.start_minute + i

        matured = [p for p in pending if p[0] <= minute]
        pending = [p for p in pending if p[0] > minute]
        for _, s, delta in matured:
            pods[s] = min(max(pods[s] + delta, 1), bounds[s].max_pods)

        rates = demand.propagate_workload(float(external[i]), minute, seed)
        for s in demand.services:
            history[s].append(rates[s])
        utilization = _utilization_map(rates, pods, demand, bounds)

        deltas = {s: 0 for s in demand.services}
        records: list[DecisionRow] = []
        if i >= warm:
            targets, records = policy.decide(minute, history, utilization, pods)
            pending_adds = sum(d for _, _, d in pending if d > 0)
            budget = max_total_pods - sum(pods.values()) - pending_adds
            for s in demand.services:
                want = targets.get(s, pods[s]) - pods[s]
                if want > 0:
                    grant = min(want, budget)
                    budget -= grant
                    if grant > 0:
                        pending.append((minute + startup_delay, s, grant))
                        deltas[s] = grant
                elif want < 0:
                    pending.append((minute + 1, s, want))
                    deltas[s] = want

        for s in demand.services:
            log_.rows.append(SimRow(minute=minute, service=s,
                                    external_rps=float(external[i]),
                                    service_rps=rates[s], pods=pods[s],
                                    utilization=utilization[s],
                                    overloaded=utilization[s] > 1.0,
                                    policy=policy.name, decision_delta=deltas[s]))
        log_.decisions.extend(records)
    return log_
