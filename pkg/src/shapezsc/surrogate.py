"""Surrogate-network shaping selection.

A 6-32-16-1 rectifier MLP regresses achieved sparse reward on shaping
weights. It is trained with plain minibatch SGD on historical results and
then ranks a pool of uniformly random candidate shapings.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .checkpoint import read_flat, write_flat
from .errors import InsufficientData, NonFiniteLoss, ShapeMismatch, ValidationError
from .kitchen.env import FEATURE_NAMES
from .shaping import DEFAULT_RANGE, N_WEIGHTS, ShapingSet, ShapingVector, random_select, validate_shaping_set

LAYER_SIZES = (N_WEIGHTS, 32, 16, 1)
DIVERGENCE_LIMIT = 1e6


@dataclass(frozen=True)
class ResultRecord:
    shaping: ShapingVector
    best_reward: float
    seed: int = 0
    run_type: str = "random"
    folder: str = ""
    pop_num: int = 0

    def to_json(self) -> dict:
        return {
            "folder": self.folder,
            "pop_num": self.pop_num,
            "seed": self.seed,
            "run_type": self.run_type,
            "best_reward": self.best_reward,
            "reward_shaping_params": self.shaping.to_dict(),
        }

    @classmethod
    def from_json(cls, d: dict) -> "ResultRecord":
        shaping = ShapingVector.from_dict(d["reward_shaping_params"])
        problems = validate_shaping_set([shaping])
        if problems:
            raise ValidationError("; ".join(map(str, problems)))
        return cls(
            shaping=shaping,
            best_reward=float(d["best_reward"]),
            seed=int(d.get("seed", 0)),
            run_type=str(d.get("run_type", "")),
            folder=str(d.get("folder", "")),
            pop_num=int(d.get("pop_num", 0)),
        )


def load_results(path: str | Path) -> list[ResultRecord]:
    doc = json.loads(Path(path).read_text())
    if not isinstance(doc, list):
        raise ValidationError(f"{path}: expected a JSON list of result records")
    try:
        return [ResultRecord.from_json(d) for d in doc]
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"{path}: bad result record ({exc})") from exc


def save_results(records: Sequence[ResultRecord], path: str | Path) -> None:
    Path(path).write_text(json.dumps([r.to_json() for r in records], indent=2) + "\n")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 500
    learning_rate: float = 0.001
    batch_size: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0 or self.learning_rate <= 0 or self.batch_size < 1:
            raise ValueError(f"invalid TrainConfig {self}")


@dataclass
class MlpModel:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    dropout_rate: float = 0.3
    x_low: float = DEFAULT_RANGE.low
    x_span: float = DEFAULT_RANGE.span
    y_mean: float = 0.0
    y_std: float = 1.0

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (self.weights[0].shape[0],) + tuple(w.shape[1] for w in self.weights)

    def copy(self) -> "MlpModel":
        return replace(self, weights=[w.copy() for w in self.weights], biases=[b.copy() for b in self.biases])

    def check(self) -> None:
        if len(self.weights) != len(self.biases):
            raise ShapeMismatch("weights and biases differ in layer count")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ShapeMismatch(f"layer {i}: weight {w.shape} and bias {b.shape} disagree")
            if i and self.weights[i - 1].shape[1] != w.shape[0]:
                raise ShapeMismatch(f"layer {i} expects {w.shape[0]} inputs, previous layer gives "
                                    f"{self.weights[i - 1].shape[1]}")

    def save(self, path: str | Path) -> None:
        arrays = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            arrays[f"W{i}"] = w
            arrays[f"b{i}"] = b
        meta = {
            "layer_sizes": list(self.layer_sizes),
            "dropout_rate": self.dropout_rate,
            "x_low": self.x_low,
            "x_span": self.x_span,
            "y_mean": self.y_mean,
            "y_std": self.y_std,
        }
        write_flat(path, "surrogate-mlp", arrays, meta)

    @classmethod
    def load(cls, path: str | Path) -> "MlpModel":
        arrays, meta = read_flat(path, kind="surrogate-mlp")
        n = len(meta["layer_sizes"]) - 1
        model = cls(
            weights=[arrays[f"W{i}"] for i in range(n)],
            biases=[arrays[f"b{i}"] for i in range(n)],
            dropout_rate=meta["dropout_rate"],
            x_low=meta["x_low"],
            x_span=meta["x_span"],
            y_mean=meta["y_mean"],
            y_std=meta["y_std"],
        )
        model.check()
        return model


def init_mlp(seed, layer_sizes: Sequence[int] = LAYER_SIZES, dropout_rate: float = 0.3) -> MlpModel:
    """Xavier-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(weights, biases, dropout_rate)


def _as_inputs(model: MlpModel, shapings) -> np.ndarray:
    if isinstance(shapings, ShapingVector):
        x = shapings.as_array()[None]
    elif isinstance(shapings, ShapingSet):
        x = shapings.as_array()
    else:
        x = np.atleast_2d(np.asarray(shapings, dtype=np.float64))
    if x.shape[1] != model.weights[0].shape[0]:
        raise ShapeMismatch(f"input has {x.shape[1]} features, model expects {model.weights[0].shape[0]}")
    return (x - model.x_low) / model.x_span


def _forward(model: MlpModel, x: np.ndarray, masks=None):
    """Standardized-output forward pass; returns (output, cache)."""
    acts = [x]
    pre = []
    h = x
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ w + b
        pre.append(z)
        if i == last:
            h = z
        else:
            h = np.maximum(z, 0.0)
            if masks is not None:
                h = h * masks[i]
        acts.append(h)
    return h[:, 0], (acts, pre, masks)


def _dropout_masks(model: MlpModel, n: int, rng: np.random.Generator):
    keep = 1.0 - model.dropout_rate
    return [(rng.random((n, w.shape[1])) < keep) / keep for w in model.weights[:-1]]


def forward(model: MlpModel, shaping, training: bool = False, seed=None):
    """Predicted reward for one shaping (scalar) or a batch (array).

    With ``training`` set, inverted-dropout masks are drawn from ``seed``;
    otherwise the pass is deterministic.
    """
    model.check()
    x = _as_inputs(model, shaping)
    masks = _dropout_masks(model, len(x), np.random.default_rng(seed)) if training else None
    y, _ = _forward(model, x, masks)
    y = y * model.y_std + model.y_mean
    return float(y[0]) if isinstance(shaping, ShapingVector) else y


def loss_and_grads(model: MlpModel, x: np.ndarray, y_std: np.ndarray, masks=None):
    """Mean squared error in standardized target space and its parameter gradients.

    ``x`` is already normalized. Returns (loss, weight grads, bias grads).
    """
    out, (acts, pre, masks) = _forward(model, x, masks)
    n = len(x)
    resid = out - y_std
    loss = float(np.mean(resid ** 2))
    delta = (2.0 / n) * resid[:, None]
    gw = [None] * len(model.weights)
    gb = [None] * len(model.weights)
    for i in range(len(model.weights) - 1, -1, -1):
        gw[i] = acts[i].T @ delta
        gb[i] = delta.sum(axis=0)
        if i > 0:
            delta = delta @ model.weights[i].T
            if masks is not None:
                delta = delta * masks[i - 1]
            delta = delta * (pre[i - 1] > 0)
    return loss, gw, gb


def _targets(model: MlpModel, data: Sequence[ResultRecord]):
    x = _as_inputs(model, np.array([r.shaping.weights for r in data]))
    y = np.array([r.best_reward for r in data], dtype=np.float64)
    return x, y


def train(model: MlpModel, data: Sequence[ResultRecord], cfg: TrainConfig = TrainConfig()):
    """Minibatch SGD on MSE; returns (trained copy, per-epoch mean training loss).

    Targets are standardized by the training-set mean and stdev; the
    constants are stored on the model so predictions come back in reward units.
    """
    if len(data) < cfg.batch_size:
        raise InsufficientData(f"need at least batch_size={cfg.batch_size} records, got {len(data)}")
    model = model.copy()
    model.check()
    x, y = _targets(model, data)
    if not np.all(np.isfinite(y)):
        raise NonFiniteLoss("non-finite target in training data")
    if cfg.epochs == 0:
        return model, []
    model.y_mean = float(y.mean())
    sd = float(y.std())
    model.y_std = sd if sd > 1e-12 else 1.0
    ys = (y - model.y_mean) / model.y_std
    rng = np.random.default_rng(cfg.seed)
    history = []
    for _ in range(cfg.epochs):
        order = rng.permutation(len(x))
        losses, sizes = [], []
        for start in range(0, len(x), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            masks = _dropout_masks(model, len(idx), rng)
            loss, gw, gb = loss_and_grads(model, x[idx], ys[idx], masks)
            if not math.isfinite(loss) or loss > DIVERGENCE_LIMIT:
                raise NonFiniteLoss(f"training loss {loss} diverged")
            for w, g in zip(model.weights, gw):
                w -= cfg.learning_rate * g
            for b, g in zip(model.biases, gb):
                b -= cfg.learning_rate * g
            losses.append(loss)
            sizes.append(len(idx))
        history.append(float(np.average(losses, weights=sizes)))
    return model, history


def _flatten(arrs) -> np.ndarray:
    return np.concatenate([a.ravel() for a in arrs])


def gradient_check(model: MlpModel, record: ResultRecord, epsilon: float = 1e-5,
                   analytic: Callable | None = None) -> float:
    """Max relative error between analytic and central-difference gradients.

    Dropout is off. ``analytic`` may replace ``loss_and_grads`` (used to
    confirm the check catches a broken backward pass).
    """
    grad_fn = analytic or loss_and_grads
    x = _as_inputs(model, record.shaping)
    y = np.array([(record.best_reward - model.y_mean) / model.y_std])
    _, gw, gb = grad_fn(model, x, y)
    g_analytic = _flatten([*gw, *gb])
    params = [*model.weights, *model.biases]
    g_numeric = np.empty_like(g_analytic)
    k = 0
    for p in params:
        flat = p.reshape(-1)
        for j in range(flat.size):
            old = flat[j]
            flat[j] = old + epsilon
            lp = loss_and_grads(model, x, y)[0]
            flat[j] = old - epsilon
            lm = loss_and_grads(model, x, y)[0]
            flat[j] = old
            g_numeric[k] = (lp - lm) / (2 * epsilon)
            k += 1
    denom = np.maximum(np.abs(g_analytic) + np.abs(g_numeric), 1e-8)
    return float(np.max(np.abs(g_analytic - g_numeric) / denom))


@dataclass
class SurrogateSelection:
    shapings: ShapingSet
    model: MlpModel
    loss_history: list[float]
    candidates: np.ndarray
    predictions: np.ndarray
    selected_index: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))


def surrogate_select(data: Sequence[ResultRecord], p: int, n_candidates: int = 1000, seed=0,
                     cfg: TrainConfig | None = None, details: bool = False):
    """Train on ``data``, score ``n_candidates`` random shapings, keep the top ``p``.

    Ties in predicted reward keep candidate generation order.
    """
    if len(data) < (cfg or TrainConfig()).batch_size:
        raise InsufficientData(f"need at least {(cfg or TrainConfig()).batch_size} records, got {len(data)}")
    init_seed, train_seed, cand_seed = np.random.SeedSequence(seed).generate_state(3)
    cfg = replace(cfg or TrainConfig(), seed=int(train_seed))
    model, history = train(init_mlp(int(init_seed)), data, cfg)
    candidates = random_select(n_candidates, int(cand_seed)).as_array()
    preds = forward(model, candidates)
    order = np.argsort(-preds, kind="stable")[:p]
    chosen = ShapingSet.from_array(candidates[order], "Surrogate", seed)
    if not details:
        return chosen
    return SurrogateSelection(chosen, model, history, candidates, preds, order)


def planted_records(n: int, seed, signal: Callable[[np.ndarray], np.ndarray], noise: float = 1.0) -> list[ResultRecord]:
    """Synthetic result records whose reward is ``signal(weights) + noise``."""
    rng = np.random.default_rng(seed)
    w = rng.uniform(DEFAULT_RANGE.low, DEFAULT_RANGE.high, size=(n, N_WEIGHTS))
    r = signal(w) + noise * rng.standard_normal(n)
    return [
        ResultRecord(ShapingVector(tuple(row)), float(v), seed=int(i), run_type="planted",
                     folder=f"planted-{i}", pop_num=0)
        for i, (row, v) in enumerate(zip(w, r))
    ]


__all__ = [
    "FEATURE_NAMES", "LAYER_SIZES", "MlpModel", "ResultRecord", "SurrogateSelection", "TrainConfig",
    "forward", "gradient_check", "init_mlp", "load_results", "loss_and_grads", "planted_records",
    "save_results", "surrogate_select", "train",
]
