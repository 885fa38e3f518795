"""A small fully-connected classifier trained from scratch.

Architecture is fixed at 4 -> 8 -> 8 -> 1 with ReLU on both hidden
layers and a sigmoid output, so the network maps a window's four
standard-deviation features to the probability of the high-concentration
state. Training minimizes binary cross-entropy

    L = -(1/N) * sum_i [ y_i*log(p_i) + (1 - y_i)*log(1 - p_i) ]

with N the number of samples in the batch, using hand-derived
backpropagation and the Adam update

    m <- b1*m + (1-b1)*g        v <- b2*v + (1-b2)*g^2
    theta <- theta - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps).

Everything is deterministic given the seed: initialization, shuffling,
and fold assignment all draw from seeded generators.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError, InputFormatError, NumericError
from .features import FeatureVector
from .util import atomic_write_text

LAYER_SIZES = (4, 8, 8, 1)
ACTIVATIONS = ("relu", "relu", "sigmoid")
MODEL_FORMAT = "conctrack-mlp"
MODEL_FORMAT_VERSION = 1

# Nearest representable doubles inside (0, 1); keeps sigmoid outputs off
# the exact endpoints even when the pre-activation saturates.
_SIGMOID_LO = float(np.nextafter(0.0, 1.0))
_SIGMOID_HI = float(np.nextafter(1.0, 0.0))

# Prediction clamp applied before logs in the loss.
LOG_CLAMP = 1e-12

_PARAM_FIELDS = ("w1", "b1", "w2", "b2", "w3", "b3")
_PARAM_SHAPES = {
    "w1": (8, 4),
    "b1": (8,),
    "w2": (8, 8),
    "b2": (8,),
    "w3": (1, 8),
    "b3": (1,),
}


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer and protocol settings for training and cross validation."""

    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    epochs: int = 200
    batch_size: int = 32
    seed: int = 0
    folds: int = 5
    threshold: float = 0.5

    def __post_init__(self) -> None:
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ValueError("beta1 and beta2 must lie strictly between 0 and 1")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if not (0.0 < self.threshold < 1.0):
            raise ValueError(f"threshold must lie in (0, 1), got {self.threshold}")


@dataclass(frozen=True)
class MlpModel:
    """Weights and biases of the fixed 4-8-8-1 network.

    Also reused as the gradient container, since gradients share the
    parameter shapes. Construction verifies shape and finiteness, so any
    exploding update or corrupted file is caught at the boundary.
    """

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray

    def __post_init__(self) -> None:
        for name in _PARAM_FIELDS:
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != _PARAM_SHAPES[name]:
                raise ValueError(f"{name} must have shape {_PARAM_SHAPES[name]}, got {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise NumericError(f"{name} contains non-finite values")
            object.__setattr__(self, name, arr)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([getattr(self, name).ravel() for name in _PARAM_FIELDS])

    @classmethod
    def from_vector(cls, vector: np.ndarray) -> "MlpModel":
        vector = np.asarray(vector, dtype=np.float64)
        total = sum(int(np.prod(_PARAM_SHAPES[n])) for n in _PARAM_FIELDS)
        if vector.shape != (total,):
            raise ValueError(f"parameter vector must have shape ({total},), got {vector.shape}")
        parts = {}
        offset = 0
        for name in _PARAM_FIELDS:
            size = int(np.prod(_PARAM_SHAPES[name]))
            parts[name] = vector[offset : offset + size].reshape(_PARAM_SHAPES[name]).copy()
            offset += size
        return cls(**parts)


@dataclass
class AdamState:
    """First/second moment accumulators over the flat parameter vector."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n_params: int) -> "AdamState":
        return cls(m=np.zeros(n_params), v=np.zeros(n_params), t=0)


@dataclass(frozen=True)
class RecognitionSeries:
    """Per-window classifier outputs s_t in (0, 1) with their timestamps."""

    values: tuple[float, ...]
    t_seconds: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        object.__setattr__(self, "t_seconds", tuple(float(t) for t in self.t_seconds))
        if len(self.values) != len(self.t_seconds):
            raise ValueError("values and t_seconds must have the same length")
        for v in self.values:
            if not (0.0 < v < 1.0):
                raise ValueError(f"recognition value {v!r} not strictly inside (0, 1)")

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class TrainResult:
    model: MlpModel
    epoch_losses: tuple[float, ...]


@dataclass(frozen=True)
class KFoldResult:
    fold_accuracies: tuple[float, ...]
    median_accuracy: float
    stratified: bool


def init_model(seed_or_rng: int | np.random.Generator) -> MlpModel:
    """Scaled uniform initialization: He-style fan-in limits for the ReLU
    layers, a Glorot limit for the sigmoid output, zero biases."""
    rng = (
        seed_or_rng
        if isinstance(seed_or_rng, np.random.Generator)
        else np.random.default_rng(seed_or_rng)
    )
    lim1 = np.sqrt(6.0 / LAYER_SIZES[0])
    lim2 = np.sqrt(6.0 / LAYER_SIZES[1])
    lim3 = np.sqrt(6.0 / (LAYER_SIZES[2] + LAYER_SIZES[3]))
    return MlpModel(
        w1=rng.uniform(-lim1, lim1, _PARAM_SHAPES["w1"]),
        b1=np.zeros(_PARAM_SHAPES["b1"]),
        w2=rng.uniform(-lim2, lim2, _PARAM_SHAPES["w2"]),
        b2=np.zeros(_PARAM_SHAPES["b2"]),
        w3=rng.uniform(-lim3, lim3, _PARAM_SHAPES["w3"]),
        b3=np.zeros(_PARAM_SHAPES["b3"]),
    )


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return np.clip(out, _SIGMOID_LO, _SIGMOID_HI)


def _forward_pass(model: MlpModel, x: np.ndarray):
    z1 = x @ model.w1.T + model.b1
    a1 = np.maximum(z1, 0.0)
    z2 = a1 @ model.w2.T + model.b2
    a2 = np.maximum(z2, 0.0)
    z3 = a2 @ model.w3.T + model.b3
    p = _sigmoid(z3)
    return z1, a1, z2, a2, z3, p


def forward(model: MlpModel, x: Sequence[float] | np.ndarray) -> float:
    """Evaluate the network on one 4-vector; output lies strictly in (0, 1)."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.shape != (LAYER_SIZES[0],):
        raise ValueError(f"input must be a {LAYER_SIZES[0]}-vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NumericError("input contains non-finite values")
    return float(_forward_pass(model, arr[None, :])[-1][0, 0])


def forward_batch(model: MlpModel, x: np.ndarray) -> np.ndarray:
    """Evaluate the network on an (n, 4) batch, returning n probabilities."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != LAYER_SIZES[0]:
        raise ValueError(f"batch must have shape (n, {LAYER_SIZES[0]}), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NumericError("batch contains non-finite values")
    return _forward_pass(model, arr)[-1][:, 0]


def bce_loss(predictions: Sequence[float] | np.ndarray, labels: Sequence[int] | np.ndarray) -> float:
    """Mean binary cross-entropy; predictions are clamped before the logs."""
    p = np.asarray(predictions, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if p.shape != y.shape:
        raise ValueError(f"length mismatch: {p.shape} predictions vs {y.shape} labels")
    if p.size == 0:
        raise ValueError("bce_loss needs at least one sample")
    p = np.clip(p, LOG_CLAMP, 1.0 - LOG_CLAMP)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


def backward(model: MlpModel, x: np.ndarray, y: Sequence[int] | np.ndarray) -> MlpModel:
    """Analytic gradient of the mean BCE loss over a batch.

    The sigmoid-BCE composition gives dL/dz3 = (p - y)/n directly; the
    ReLU subgradient at exactly 0 is taken as 0.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != LAYER_SIZES[0]:
        raise ValueError(f"batch must have shape (n, {LAYER_SIZES[0]}), got {x.shape}")
    if x.shape[0] == 0:
        raise ValueError("backward needs a non-empty batch")
    if x.shape[0] != y.shape[0]:
        raise ValueError("features and labels must have the same length")
    n = x.shape[0]
    z1, a1, z2, a2, _, p = _forward_pass(model, x)

    delta3 = (p - y[:, None]) / n
    g_w3 = delta3.T @ a2
    g_b3 = delta3.sum(axis=0)
    delta2 = (delta3 @ model.w3) * (z2 > 0.0)
    g_w2 = delta2.T @ a1
    g_b2 = delta2.sum(axis=0)
    delta1 = (delta2 @ model.w2) * (z1 > 0.0)
    g_w1 = delta1.T @ x
    g_b1 = delta1.sum(axis=0)

    return MlpModel(w1=g_w1, b1=g_b1, w2=g_w2, b2=g_b2, w3=g_w3, b3=g_b3)


def adam_step(
    params: np.ndarray, grads: np.ndarray, state: AdamState, config: TrainConfig
) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam update over flat parameter/gradient vectors."""
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ValueError("params, grads and Adam state must share one shape")
    t = state.t + 1
    m = config.beta1 * state.m + (1.0 - config.beta1) * grads
    v = config.beta2 * state.v + (1.0 - config.beta2) * grads * grads
    m_hat = m / (1.0 - config.beta1**t)
    v_hat = v / (1.0 - config.beta2**t)
    updated = params - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.epsilon)
    return updated, AdamState(m=m, v=v, t=t)


def train(x: np.ndarray, y: np.ndarray, config: TrainConfig | None = None) -> TrainResult:
    """Train a fresh model on labeled feature rows.

    Deterministic given the seed: the same data and config always yield
    bit-identical weights and the same per-epoch mean loss history.
    Warns (but proceeds) when only one class is present.
    """
    config = config or TrainConfig()
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != LAYER_SIZES[0]:
        raise ValueError(f"features must have shape (n, {LAYER_SIZES[0]}), got {x.shape}")
    if x.shape[0] == 0:
        raise DataError("cannot train on an empty dataset")
    if x.shape[0] != y.shape[0]:
        raise ValueError("features and labels must have the same length")
    if not np.all(np.isin(y, (0.0, 1.0))):
        raise ValueError("labels must be 0 or 1")
    if np.unique(y).size < 2:
        warnings.warn("training data contains a single class", stacklevel=2)

    n = x.shape[0]
    batch_size = min(config.batch_size, n)
    rng = np.random.default_rng(config.seed)
    model = init_model(rng)
    theta = model.to_vector()
    state = AdamState.zeros(theta.size)

    epoch_losses: list[float] = []
    for _ in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            batch_x, batch_y = x[idx], y[idx]
            predictions = forward_batch(model, batch_x)
            total += bce_loss(predictions, batch_y) * idx.size
            grads = backward(model, batch_x, batch_y)
            theta, state = adam_step(theta, grads.to_vector(), state, config)
            model = MlpModel.from_vector(theta)
        epoch_losses.append(total / n)
    return TrainResult(model=model, epoch_losses=tuple(epoch_losses))


def predict_series(model: MlpModel, features: Sequence[FeatureVector]) -> RecognitionSeries:
    """Classifier output for each feature window, in window order.

    Evaluates forward() row by row so every entry is bit-identical to a
    standalone forward call on the same feature vector.
    """
    values = tuple(forward(model, f.as_array()) for f in features)
    return RecognitionSeries(values=values, t_seconds=tuple(f.t_seconds for f in features))


def _stratified_folds(y: np.ndarray, k: int, rng: np.random.Generator) -> tuple[list[np.ndarray], bool]:
    classes = np.unique(y)
    stratified = all(np.sum(y == c) >= k for c in classes)
    folds: list[list[int]] = [[] for _ in range(k)]
    if stratified:
        for c in classes:
            idx = rng.permutation(np.flatnonzero(y == c))
            for j in range(k):
                folds[j].extend(idx[j::k].tolist())
    else:
        warnings.warn(
            "a class has fewer members than folds; falling back to unstratified folds",
            stacklevel=3,
        )
        idx = rng.permutation(y.size)
        for j in range(k):
            folds[j].extend(idx[j::k].tolist())
    return [np.array(sorted(f), dtype=np.int64) for f in folds], stratified


def kfold_cv(x: np.ndarray, y: np.ndarray, config: TrainConfig | None = None) -> KFoldResult:
    """K-fold cross validation with per-class balanced (stratified) folds.

    Folds are disjoint and exhaustive; fold j trains on the remaining
    data with seed `config.seed + j` and is scored on its held-out part
    at the configured classification threshold.
    """
    config = config or TrainConfig()
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if config.folds < 2:
        raise DataError(f"k-fold needs at least 2 folds, got {config.folds}")
    if y.size < config.folds:
        raise DataError(f"dataset of {y.size} rows cannot be split into {config.folds} folds")
    rng = np.random.default_rng(config.seed)
    folds, stratified = _stratified_folds(y, config.folds, rng)

    accuracies = []
    for j, held_out in enumerate(folds):
        train_idx = np.setdiff1d(np.arange(y.size), held_out)
        fold_config = replace(config, seed=config.seed + j)
        result = train(x[train_idx], y[train_idx], fold_config)
        predictions = forward_batch(result.model, x[held_out])
        predicted = (predictions >= config.threshold).astype(np.float64)
        accuracies.append(float(np.mean(predicted == y[held_out])))
    return KFoldResult(
        fold_accuracies=tuple(accuracies),
        median_accuracy=float(np.median(accuracies)),
        stratified=stratified,
    )


def save_model(model: MlpModel, path: str | Path, config: TrainConfig | None = None) -> None:
    """Persist the model in a versioned, self-describing JSON file."""
    payload: dict = {
        "format": MODEL_FORMAT,
        "version": MODEL_FORMAT_VERSION,
        "architecture": {"layer_sizes": list(LAYER_SIZES), "activations": list(ACTIVATIONS)},
        "parameters": {name: getattr(model, name).tolist() for name in _PARAM_FIELDS},
        "train_config": None if config is None else vars(config).copy(),
        "seed": None if config is None else config.seed,
    }
    atomic_write_text(path, json.dumps(payload, indent=2) + "\n")


def load_model(path: str | Path) -> tuple[MlpModel, dict]:
    """Load a model file, validating format version and architecture.

    Returns the model plus the metadata dict (train_config, seed). Raises
    InputFormatError on corrupt files, version mismatch, or any
    architecture other than the fixed 4-8-8-1 network.
    """
    try:
        with open(path, "r", encoding="utf-8") as handle:
            payload = json.load(handle)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise InputFormatError(f"corrupt model file ({exc})", source=str(path)) from exc
    if not isinstance(payload, dict) or payload.get("format") != MODEL_FORMAT:
        raise InputFormatError("not a model file", source=str(path))
    if payload.get("version") != MODEL_FORMAT_VERSION:
        raise InputFormatError(
            f"unsupported model format version {payload.get('version')!r}", source=str(path)
        )
    architecture = payload.get("architecture", {})
    if architecture.get("layer_sizes") != list(LAYER_SIZES) or architecture.get(
        "activations"
    ) != list(ACTIVATIONS):
        raise InputFormatError(
            f"architecture mismatch: expected {list(LAYER_SIZES)} with {list(ACTIVATIONS)}, "
            f"got {architecture!r}",
            source=str(path),
        )
    parameters = payload.get("parameters")
    if not isinstance(parameters, dict) or set(parameters) != set(_PARAM_FIELDS):
        raise InputFormatError("parameter block missing or incomplete", source=str(path))
    try:
        model = MlpModel(**{name: np.array(parameters[name], dtype=np.float64) for name in _PARAM_FIELDS})
    except (ValueError, TypeError, NumericError) as exc:
        raise InputFormatError(f"invalid parameters ({exc})", source=str(path)) from exc
    meta = {"train_config": payload.get("train_config"), "seed": payload.get("seed")}
    return model, meta
