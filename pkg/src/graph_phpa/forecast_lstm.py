"""Sliding-window LSTM forecaster: next-minute workload per microservice.

A model maps the last k workload observations of one service to a one-step
forecast through stacked LSTM layers and a tanh dense head. Training is
mini-batch Adam over backpropagation-through-time, fully deterministic for a
given config seed. Inputs and targets are min-max scaled to [-0.8, 0.8] with
statistics fitted on the training targets only, so the tanh head can reach
every target.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DivergenceError, EmptyDatasetError, ShapeError, ValidationError
from .tensor import MinMaxScaler, Rng, ensure_finite, glorot_init, sigmoid
from .tensor import AdamState, adam_step

log = logging.getLogger(__name__)

GATES = ("input", "forget", "output", "candidate")

LSTM_SCHEMA = "graph-phpa/lstm-model/v1"


@dataclass(frozen=True)
class WorkloadSeries:
    """Per-service request-rate time series on a minute grid."""

    service_id: str
    start_minute: int
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1:
            raise ValidationError(f"series values must be 1-D, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValidationError(f"series {self.service_id!r} has non-finite values")
        if np.any(values < 0):
            raise ValidationError(f"series {self.service_id!r} has negative values")
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class LstmConfig:
    window: int = 10
    layers: int = 1
    hidden_units: int = 50
    learning_rate: float = 0.01
    epochs: int = 50
    batch_size: int = 64
    seed: int = 42

    def __post_init__(self):
        for name in ("window", "layers", "hidden_units", "epochs", "batch_size"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.learning_rate <= 0:
            raise ValidationError(f"learning_rate must be positive, got {self.learning_rate}")

    def to_dict(self) -> dict:
        return {"window": self.window, "layers": self.layers,
                "hidden_units": self.hidden_units, "learning_rate": self.learning_rate,
                "epochs": self.epochs, "batch_size": self.batch_size, "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "LstmConfig":
        return cls(**d)


class LstmLayer:
    """One LSTM layer: per-gate input weights, recurrent weights, and biases."""

    def __init__(self, w: dict, u: dict, b: dict):
        self.w = {g: np.asarray(w[g], dtype=np.float64) for g in GATES}
        self.u = {g: np.asarray(u[g], dtype=np.float64) for g in GATES}
        self.b = {g: np.asarray(b[g], dtype=np.float64) for g in GATES}
        d_in, hidden = self.w["input"].shape
        for g in GATES:
            if self.w[g].shape != (d_in, hidden) or self.u[g].shape != (hidden, hidden) \
                    or self.b[g].shape != (hidden,):
                raise ShapeError(f"inconsistent gate shapes in layer (gate {g!r})")
        self.input_dim = d_in
        self.hidden = hidden


class LstmModel:
    """Trained workload forecaster for one service."""

    def __init__(self, config: LstmConfig, layers: list[LstmLayer], head_w: np.ndarray,
                 head_b: float, scaler: MinMaxScaler, service_id: str | None = None):
        self.config = config
        self.layers = layers
        self.head_w = np.asarray(head_w, dtype=np.float64)
        self.head_b = float(head_b)
        self.scaler = scaler
        self.service_id = service_id
        if self.head_w.shape != (layers[-1].hidden, 1):
            raise ShapeError(f"head weight shape {self.head_w.shape} does not match "
                             f"hidden size {layers[-1].hidden}")

    def to_json_dict(self) -> dict:
        layers = []
        for layer in self.layers:
            entry: dict = {}
            for g in GATES:
                entry[f"w_{g}"] = layer.w[g].tolist()
                entry[f"u_{g}"] = layer.u[g].tolist()
                entry[f"b_{g}"] = layer.b[g].tolist()
            layers.append(entry)
        return {
            "schema": LSTM_SCHEMA,
            "service": self.service_id,
            "config": self.config.to_dict(),
            "scaler": self.scaler.to_dict(),
            "layers": layers,
            "head_weight": self.head_w.tolist(),
            "head_bias": self.head_b,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "LstmModel":
        if d.get("schema") != LSTM_SCHEMA:
            raise ValidationError(f"unexpected model schema {d.get('schema')!r}")
        layers = [
            LstmLayer(w={g: e[f"w_{g}"] for g in GATES},
                      u={g: e[f"u_{g}"] for g in GATES},
                      b={g: e[f"b_{g}"] for g in GATES})
            for e in d["layers"]
        ]
        return cls(config=LstmConfig.from_dict(d["config"]), layers=layers,
                   head_w=np.asarray(d["head_weight"]), head_b=d["head_bias"],
                   scaler=MinMaxScaler.from_dict(d["scaler"]), service_id=d.get("service"))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), sort_keys=True) + "\n",
                              encoding="utf-8", newline="\n")

    @classmethod
    def load(cls, path: str | Path) -> "LstmModel":
        return cls.from_json_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def make_windows(series: WorkloadSeries | np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """All (window, next value) pairs: X[j] = values[j:j+k], y[j] = values[j+k]."""
    values = series.values if isinstance(series, WorkloadSeries) else np.asarray(series, dtype=np.float64)
    if k < 1:
        raise ValidationError(f"window size must be >= 1, got {k}")
    t = len(values)
    if t < k + 1:
        raise EmptyDatasetError(f"series length {t} yields no windows for k={k} (need >= {k + 1})")
    n = t - k
    x = np.empty((n, k), dtype=np.float64)
    for j in range(n):
        x[j] = values[j:j + k]
    return x, values[k:].copy()


def _init_params(config: LstmConfig, rng: Rng) -> tuple[list[LstmLayer], np.ndarray, float]:
    layers = []
    d_in = 1
    for _ in range(config.layers):
        w = {g: glorot_init(d_in, config.hidden_units, rng) for g in GATES}
        u = {g: glorot_init(config.hidden_units, config.hidden_units, rng) for g in GATES}
        b = {g: np.zeros(config.hidden_units) for g in GATES}
        layers.append(LstmLayer(w, u, b))
        d_in = config.hidden_units
    head_w = glorot_init(config.hidden_units, 1, rng)
    return layers, head_w, 0.0


def _forward_scaled(layers: list[LstmLayer], head_w: np.ndarray, head_b: float,
                    x_seq: np.ndarray, keep_cache: bool = False):
    """Run the stacked recurrence on scaled windows (batch, k); returns (yhat, cache)."""
    batch = x_seq.shape[0]
    current = x_seq[:, :, None]  # (batch, k, 1)
    k = x_seq.shape[1]
    cache = {"layer_steps": [], "layer_inputs": []} if keep_cache else None
    for layer in layers:
        h = np.zeros((batch, layer.hidden))
        c = np.zeros((batch, layer.hidden))
        outputs = np.empty((batch, k, layer.hidden))
        steps = [] if keep_cache else None
        for t in range(k):
            x_t = current[:, t, :]
            gi = sigmoid(x_t @ layer.w["input"] + h @ layer.u["input"] + layer.b["input"])
            gf = sigmoid(x_t @ layer.w["forget"] + h @ layer.u["forget"] + layer.b["forget"])
            go = sigmoid(x_t @ layer.w["output"] + h @ layer.u["output"] + layer.b["output"])
            gg = np.tanh(x_t @ layer.w["candidate"] + h @ layer.u["candidate"] + layer.b["candidate"])
            c_prev, h_prev = c, h
            c = gf * c_prev + gi * gg
            tc = np.tanh(c)
            h = go * tc
            outputs[:, t, :] = h
            if keep_cache:
                steps.append({"x": x_t, "h_prev": h_prev, "c_prev": c_prev,
                              "i": gi, "f": gf, "o": go, "g": gg, "c": c, "tanh_c": tc})
        if keep_cache:
            cache["layer_steps"].append(steps)
            cache["layer_inputs"].append(current)
        current = outputs
    z = current[:, -1, :] @ head_w + head_b  # (batch, 1)
    yhat = np.tanh(z)[:, 0]
    if keep_cache:
        cache["h_last"] = current[:, -1, :]
        cache["yhat"] = yhat
    return yhat, cache


def _loss_and_grads(layers: list[LstmLayer], head_w: np.ndarray, head_b: float,
                    x_seq: np.ndarray, targets: np.ndarray):
    """Mean squared error over the batch plus gradients for every parameter."""
    batch, k = x_seq.shape
    yhat, cache = _forward_scaled(layers, head_w, head_b, x_seq, keep_cache=True)
    err = yhat - targets
    loss = float(np.mean(err ** 2))

    dyhat = 2.0 * err / batch
    dz = (dyhat * (1.0 - yhat ** 2))[:, None]  # (batch, 1)
    d_head_w = cache["h_last"].T @ dz
    d_head_b = float(dz.sum())

    grads = {"head_w": d_head_w, "head_b": d_head_b, "layers": []}
    # Gradient flowing into each timestep's hidden output, for the layer being
    # processed; starts as the head's contribution to the top layer.
    dh_above = np.zeros((batch, k, layers[-1].hidden))
    dh_above[:, -1, :] = dz @ head_w.T

    for li in range(len(layers) - 1, -1, -1):
        layer = layers[li]
        steps = cache["layer_steps"][li]
        dw = {g: np.zeros_like(layer.w[g]) for g in GATES}
        du = {g: np.zeros_like(layer.u[g]) for g in GATES}
        db = {g: np.zeros_like(layer.b[g]) for g in GATES}
        dx_all = np.zeros((batch, k, layer.input_dim))
        dh_carry = np.zeros((batch, layer.hidden))
        dc_carry = np.zeros((batch, layer.hidden))
        for t in range(k - 1, -1, -1):
            s = steps[t]
            dh = dh_above[:, t, :] + dh_carry
            do = dh * s["tanh_c"]
            dc = dc_carry + dh * s["o"] * (1.0 - s["tanh_c"] ** 2)
            df = dc * s["c_prev"]
            di = dc * s["g"]
            dg = dc * s["i"]
            da = {
                "input": di * s["i"] * (1.0 - s["i"]),
                "forget": df * s["f"] * (1.0 - s["f"]),
                "output": do * s["o"] * (1.0 - s["o"]),
                "candidate": dg * (1.0 - s["g"] ** 2),
            }
            dc_carry = dc * s["f"]
            dh_carry = np.zeros((batch, layer.hidden))
            dx_t = np.zeros((batch, layer.input_dim))
            for g in GATES:
                dw[g] += s["x"].T @ da[g]
                du[g] += s["h_prev"].T @ da[g]
                db[g] += da[g].sum(axis=0)
                dx_t += da[g] @ layer.w[g].T
                dh_carry += da[g] @ layer.u[g].T
            dx_all[:, t, :] = dx_t
        grads["layers"].insert(0, {"w": dw, "u": du, "b": db})
        dh_above = dx_all  # becomes the upstream gradient for the layer below
    return loss, grads


def lstm_forward(model: LstmModel, window) -> float:
    """One-step forecast in original units for a raw k-length window."""
    window = np.asarray(window, dtype=np.float64)
    k = model.config.window
    if window.shape != (k,):
        raise ShapeError(f"window shape {window.shape} does not match model window ({k},)")
    scaled = model.scaler.transform(window)[None, :]
    yhat, _ = _forward_scaled(model.layers, model.head_w, model.head_b, scaled)
    return float(model.scaler.inverse_transform(yhat)[0])


def forecast_series(model: LstmModel, values: np.ndarray) -> np.ndarray:
    """Forecast for every index j >= k from the window ending at j-1.

    Returns a full-length array with NaN in the first k slots.
    """
    values = np.asarray(values, dtype=np.float64)
    k = model.config.window
    if len(values) < k + 1:
        raise EmptyDatasetError(f"series length {len(values)} too short for window {k}")
    x, _ = make_windows(values, k)
    scaled = model.scaler.transform(x)
    yhat, _ = _forward_scaled(model.layers, model.head_w, model.head_b, scaled)
    out = np.full(len(values), np.nan)
    out[k:] = model.scaler.inverse_transform(yhat)
    return out


def predict_windows(model: LstmModel, x: np.ndarray) -> np.ndarray:
    """Batched lstm_forward over rows of raw windows."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.config.window:
        raise ShapeError(f"windows shape {x.shape} does not match model window {model.config.window}")
    scaled = model.scaler.transform(x)
    yhat, _ = _forward_scaled(model.layers, model.head_w, model.head_b, scaled)
    return model.scaler.inverse_transform(yhat)


def _adam_states(layers, head_w, lr) -> dict:
    states = {"head_w": AdamState.fresh(head_w, lr), "head_b": AdamState.fresh(np.zeros(1), lr),
              "layers": []}
    for layer in layers:
        states["layers"].append({
            "w": {g: AdamState.fresh(layer.w[g], lr) for g in GATES},
            "u": {g: AdamState.fresh(layer.u[g], lr) for g in GATES},
            "b": {g: AdamState.fresh(layer.b[g], lr) for g in GATES},
        })
    return states


def train_lstm(train: tuple[np.ndarray, np.ndarray],
               valid: tuple[np.ndarray, np.ndarray] | None,
               config: LstmConfig,
               service_id: str | None = None) -> tuple[LstmModel, list[tuple[float, float | None]]]:
    """Fit the forecaster with mini-batch Adam; returns the model and per-epoch losses.

    Loss history entries are (train MSE, valid MSE or None), measured in scaled
    units. The shuffle order is derived from the config seed, so identical
    inputs give bit-identical histories and weights.
    """
    x_train, y_train = np.asarray(train[0], dtype=np.float64), np.asarray(train[1], dtype=np.float64)
    if x_train.ndim != 2 or x_train.shape[1] != config.window:
        raise ShapeError(f"train windows shape {x_train.shape} does not match k={config.window}")
    if len(x_train) == 0:
        raise EmptyDatasetError("training set is empty")
    scaler = MinMaxScaler.fit(y_train)
    xs = scaler.transform(x_train)
    ys = scaler.transform(y_train)
    has_valid = valid is not None and len(valid[0]) > 0
    if has_valid:
        xv = scaler.transform(np.asarray(valid[0], dtype=np.float64))
        yv = scaler.transform(np.asarray(valid[1], dtype=np.float64))

    rng = Rng(config.seed)
    layers, head_w, head_b = _init_params(config, rng)
    states = _adam_states(layers, head_w, config.learning_rate)
    shuffle_rng = rng.child(1)

    n = len(xs)
    history: list[tuple[float, float | None]] = []
    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(n)
        sq_sum = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            loss, grads = _loss_and_grads(layers, head_w, head_b, xs[idx], ys[idx])
            if not np.isfinite(loss):
                raise DivergenceError(f"training loss diverged at epoch {epoch}", epoch=epoch)
            sq_sum += loss * len(idx)
            head_w, states["head_w"] = adam_step(head_w, grads["head_w"], states["head_w"])
            hb, states["head_b"] = adam_step(np.array([head_b]), np.array([grads["head_b"]]),
                                             states["head_b"])
            head_b = float(hb[0])
            for li, layer in enumerate(layers):
                for g in GATES:
                    layer.w[g], states["layers"][li]["w"][g] = adam_step(
                        layer.w[g], grads["layers"][li]["w"][g], states["layers"][li]["w"][g])
                    layer.u[g], states["layers"][li]["u"][g] = adam_step(
                        layer.u[g], grads["layers"][li]["u"][g], states["layers"][li]["u"][g])
                    layer.b[g], states["layers"][li]["b"][g] = adam_step(
                        layer.b[g], grads["layers"][li]["b"][g], states["layers"][li]["b"][g])
        train_mse = sq_sum / n
        valid_mse = None
        if has_valid:
            yhat, _ = _forward_scaled(layers, head_w, head_b, xv)
            valid_mse = float(np.mean((yhat - yv) ** 2))
            if not np.isfinite(valid_mse):
                raise DivergenceError(f"validation loss diverged at epoch {epoch}", epoch=epoch)
        history.append((train_mse, valid_mse))
        log.debug("lstm epoch %d: train=%.6g valid=%s", epoch, train_mse, valid_mse)
    model = LstmModel(config, layers, head_w, head_b, scaler, service_id)
    return model, history


def evaluate(predictions, truth) -> tuple[float, float]:
    """Mean squared error and mean absolute error over aligned arrays."""
    predictions = np.asarray(predictions, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if predictions.shape != truth.shape:
        raise ShapeError(f"prediction shape {predictions.shape} != truth shape {truth.shape}")
    if predictions.size == 0:
        raise ValidationError("cannot evaluate empty arrays")
    ensure_finite(predictions, "predictions")
    ensure_finite(truth, "truth")
    err = predictions - truth
    return float(np.mean(err ** 2)), float(np.mean(np.abs(err)))
