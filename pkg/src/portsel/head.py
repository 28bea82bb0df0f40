"""Linear output layer over instance features, its losses and SGD training.

Two modes share one weight layout (``n_algorithms x dim`` plus a bias):

* ``multiclass`` - softmax over algorithms, cross-entropy against the best one;
* ``multilabel`` - independent sigmoids, recall-weighted BCE against
  competitiveness labels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .kernels import PROB_EPS, dlogits_multiclass, dlogits_multilabel, sigmoid, softmax

MULTICLASS = "multiclass"
MULTILABEL = "multilabel"
MODES = (MULTICLASS, MULTILABEL)

MODEL_MAGIC = "PSLH v1"


class ModelFormatError(ValueError):
    pass


@dataclass(eq=False)
class LinearHead:
    weights: np.ndarray
    bias: np.ndarray
    mode: str = MULTILABEL

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        self.weights = np.array(self.weights, dtype=np.float64, order="C")
        self.bias = np.array(self.bias, dtype=np.float64)
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise ValueError(f"inconsistent shapes: weights {self.weights.shape}, bias {self.bias.shape}")
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise ValueError("head parameters must be finite")

    @property
    def n_algorithms(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    def copy(self) -> "LinearHead":
        return LinearHead(self.weights.copy(), self.bias.copy(), self.mode)

    def __eq__(self, other):
        if not isinstance(other, LinearHead):
            return NotImplemented
        return (
            self.mode == other.mode
            and np.array_equal(self.weights, other.weights)
            and np.array_equal(self.bias, other.bias)
        )


def init_head(n_algorithms: int, dim: int, mode: str = MULTILABEL, seed: int = 0) -> LinearHead:
    """Uniform weights in [-1/sqrt(dim), 1/sqrt(dim)], zero bias."""
    bound = 1.0 / math.sqrt(dim)
    rng = np.random.default_rng(seed)
    return LinearHead(rng.uniform(-bound, bound, size=(n_algorithms, dim)), np.zeros(n_algorithms), mode)


def _as_array(x) -> np.ndarray:
    return np.asarray(getattr(x, "values", x), dtype=np.float64)


def forward(head: LinearHead, x) -> np.ndarray:
    x = _as_array(x)
    if x.shape != (head.dim,):
        raise ValueError(f"feature dimension {x.shape[-1] if x.ndim else 0} does not match head dimension {head.dim}")
    return head.weights @ x + head.bias


def activate(logits, mode: str) -> np.ndarray:
    logits = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(logits)):
        raise ValueError("logits must be finite")
    if mode == MULTICLASS:
        return softmax(logits)
    if mode == MULTILABEL:
        return sigmoid(logits)
    raise ValueError(f"unknown mode {mode!r}")


def predict(head: LinearHead, x) -> np.ndarray:
    return activate(forward(head, x), head.mode)


def predict_many(head: LinearHead, X: np.ndarray) -> np.ndarray:
    Z = np.asarray(X, dtype=np.float64) @ head.weights.T + head.bias
    if head.mode == MULTICLASS:
        Z = Z - Z.max(axis=1, keepdims=True)
        E = np.exp(Z)
        return E / E.sum(axis=1, keepdims=True)
    return sigmoid(Z.ravel()).reshape(Z.shape)


def loss_multiclass(probs, best_index: int) -> float:
    probs = np.asarray(probs, dtype=np.float64)
    if not 0 <= best_index < probs.shape[0]:
        raise IndexError(f"best_index {best_index} out of range for {probs.shape[0]} algorithms")
    return -math.log(max(float(probs[best_index]), PROB_EPS))


def loss_weighted_bce(probs, labels, recall_weight: float = 2.0) -> float:
    """Mean BCE with the positive (recall) term scaled by ``recall_weight``."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if probs.shape != labels.shape or probs.ndim != 1:
        raise ValueError(f"length mismatch: {probs.shape} probabilities vs {labels.shape} labels")
    n = probs.shape[0]
    if n < 1:
        raise ValueError("need at least one algorithm")
    p = np.clip(probs, PROB_EPS, 1.0 - PROB_EPS)
    q = np.clip(1.0 - probs, PROB_EPS, 1.0 - PROB_EPS)
    return float(-(recall_weight * labels * np.log(p) + (1.0 - labels) * np.log(q)).sum() / n)


def loss(head: LinearHead, x, target, recall_weight: float = 1.0) -> float:
    probs = predict(head, x)
    if head.mode == MULTICLASS:
        return loss_multiclass(probs, int(target))
    return loss_weighted_bce(probs, target, recall_weight)


def gradients(head: LinearHead, x, target, mode: str | None = None, recall_weight: float = 1.0):
    """Analytic (dW, db) of the configured loss at one sample."""
    mode = mode or head.mode
    x = _as_array(x)
    z = forward(head, x)
    if mode == MULTICLASS:
        g = dlogits_multiclass(z, int(target))
    elif mode == MULTILABEL:
        g = dlogits_multilabel(z, np.asarray(target, dtype=np.float64), recall_weight)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return np.outer(g, x), g


def finite_difference_gradients(head: LinearHead, x, target, recall_weight: float = 1.0, h: float = 1e-5):
    """Central-difference estimate of (dW, db) for the head's loss."""
    x = _as_array(x)
    probe = head.copy()
    estimates = []
    for params in (probe.weights, probe.bias):
        flat = params.reshape(-1)
        est = np.empty(flat.shape[0])
        for k in range(flat.shape[0]):
            keep = flat[k]
            flat[k] = keep + h
            up = loss(probe, x, target, recall_weight)
            flat[k] = keep - h
            down = loss(probe, x, target, recall_weight)
            flat[k] = keep
            est[k] = (up - down) / (2 * h)
        estimates.append(est.reshape(params.shape))
    return estimates[0], estimates[1]


def finite_difference_check(head: LinearHead, x, target, recall_weight: float = 1.0, h: float = 1e-5) -> float:
    """Relative error of the analytic gradient against central differences.

    Normwise: max |analytic - numeric| over all entries divided by the larger
    of the two gradients' max magnitudes. Per-entry ratios are dominated by
    difference round-off (~1e-10) on entries that are themselves ~1e-7.
    """
    dW, db = gradients(head, x, target, head.mode, recall_weight)
    nW, nb = finite_difference_gradients(head, x, target, recall_weight, h)
    a = np.concatenate([dW.ravel(), db])
    f = np.concatenate([nW.ravel(), nb])
    scale = max(np.abs(a).max(), np.abs(f).max())
    if scale == 0:
        return 0.0
    return float(np.abs(a - f).max() / scale)


@dataclass(frozen=True)
class Phase:
    epochs: int
    learning_rate: float
    recall_weight: float = 1.0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"phase epochs must be positive, got {self.epochs}")
        if self.learning_rate < 0:
            raise ValueError(f"learning rate must be nonnegative, got {self.learning_rate}")
        if self.recall_weight < 1:
            raise ValueError(f"recall weight must be >= 1, got {self.recall_weight}")


MULTILABEL_SCHEDULE = (Phase(3, 1e-4, 2.0), Phase(3, 1e-4, 1.0), Phase(4, 1e-5, 1.0))
MULTICLASS_SCHEDULE = (Phase(10, 1e-4, 1.0),)


@dataclass(frozen=True)
class TrainSchedule:
    phases: tuple[Phase, ...] = MULTILABEL_SCHEDULE
    seed: int = 0
    batch_size: int = 1

    def __post_init__(self):
        object.__setattr__(self, "phases", tuple(self.phases))
        if not self.phases:
            raise ValueError("schedule needs at least one phase")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be positive, got {self.batch_size}")

    @classmethod
    def default(cls, mode: str, seed: int = 0) -> "TrainSchedule":
        return cls(MULTICLASS_SCHEDULE if mode == MULTICLASS else MULTILABEL_SCHEDULE, seed)

    @property
    def total_epochs(self) -> int:
        return sum(p.epochs for p in self.phases)

    def epochs(self):
        """Yield (epoch_number, phase) for every epoch, 1-based."""
        e = 0
        for phase in self.phases:
            for _ in range(phase.epochs):
                e += 1
                yield e, phase

    @classmethod
    def parse(cls, text: str, seed: int = 0, batch_size: int = 1) -> "TrainSchedule":
        """Parse ``epochs:lr[:recall_weight],...`` e.g. ``3:1e-4:2,3:1e-4,4:1e-5``."""
        phases = []
        for chunk in text.split(","):
            parts = [p.strip() for p in chunk.strip().split(":")]
            if len(parts) not in (2, 3) or not all(parts):
                raise ValueError(f"bad schedule phase {chunk!r}; expected epochs:lr[:recall_weight]")
            phases.append(Phase(int(parts[0]), float(parts[1]), float(parts[2]) if len(parts) == 3 else 1.0))
        return cls(tuple(phases), seed, batch_size)

    def format(self) -> str:
        return ",".join(f"{p.epochs}:{p.learning_rate!r}:{p.recall_weight!r}" for p in self.phases)


@dataclass
class EpochRecord:
    epoch: int
    learning_rate: float
    recall_weight: float
    train_loss: float
    train_accuracy: float
    train_f1: float
    val_loss: float = float("nan")
    val_accuracy: float = float("nan")
    val_f1: float = float("nan")


TRACE_FIELDS = [
    "epoch",
    "learning_rate",
    "recall_weight",
    "train_loss",
    "train_accuracy",
    "train_f1",
    "val_loss",
    "val_accuracy",
    "val_f1",
]


@dataclass
class TrainResult:
    head: LinearHead
    trace: list[EpochRecord] = field(default_factory=list)


def _stack(dataset):
    X = np.ascontiguousarray(np.stack([_as_array(x) for x, _ in dataset]), dtype=np.float64)
    targets = [t for _, t in dataset]
    return X, targets


def _targets_array(targets, mode):
    if mode == MULTICLASS:
        return np.asarray(targets, dtype=np.int64)
    return np.ascontiguousarray(np.stack([np.asarray(t, dtype=np.float64) for t in targets]))


def dataset_metrics(head: LinearHead, X: np.ndarray, T: np.ndarray, recall_weight: float):
    """Mean loss, accuracy and macro-F1 of ``head`` on stacked data."""
    from .evaluation import classification_metrics

    P = predict_many(head, X)
    if head.mode == MULTICLASS:
        losses = [loss_multiclass(p, int(t)) for p, t in zip(P, T)]
        pred = np.argmax(P, axis=1)
        m = classification_metrics(pred, T, MULTICLASS)
    else:
        losses = [loss_weighted_bce(p, t, recall_weight) for p, t in zip(P, T)]
        m = classification_metrics(P >= 0.5, T >= 0.5, MULTILABEL)
    return float(np.mean(losses)), m["accuracy"], m["macro_f1"]


def train(
    dataset: Sequence[tuple[object, object]],
    head_init: LinearHead,
    schedule: TrainSchedule,
    validation: Sequence[tuple[object, object]] = (),
    on_epoch: Callable[[EpochRecord], None] | None = None,
) -> TrainResult:
    """Fit ``head_init`` (copied, not modified) by SGD over the schedule's phases.

    Targets are best-algorithm indices in multiclass mode and 0/1 label rows
    in multilabel mode. Each epoch visits the data in a fresh seeded
    permutation.
    """
    if not dataset:
        raise ValueError("training dataset is empty")
    head = head_init.copy()
    X, targets = _stack(dataset)
    if X.shape[1] != head.dim:
        raise ValueError(f"feature dimension {X.shape[1]} does not match head dimension {head.dim}")
    T = _targets_array(targets, head.mode)
    if validation:
        Xv, tv = _stack(validation)
        Tv = _targets_array(tv, head.mode)
    multilabel = head.mode == MULTILABEL
    rng = np.random.default_rng(schedule.seed)
    trace = []
    for epoch, phase in schedule.epochs():
        order = rng.permutation(len(X)).astype(np.int64)
        if schedule.batch_size == 1:
            kernels.sgd_epoch(head.weights, head.bias, X, T, order, phase.learning_rate, multilabel, phase.recall_weight)
        else:
            _minibatch_epoch(head, X, T, order, phase, schedule.batch_size)
        rec = EpochRecord(epoch, phase.learning_rate, phase.recall_weight, *dataset_metrics(head, X, T, phase.recall_weight))
        if validation:
            rec.val_loss, rec.val_accuracy, rec.val_f1 = dataset_metrics(head, Xv, Tv, phase.recall_weight)
        trace.append(rec)
        if on_epoch is not None:
            on_epoch(rec)
    return TrainResult(head, trace)


def _minibatch_epoch(head, X, T, order, phase, batch_size):
    for start in range(0, len(order), batch_size):
        batch = order[start:start + batch_size]
        dW = np.zeros_like(head.weights)
        db = np.zeros_like(head.bias)
        for k in batch:
            gW, gb = gradients(head, X[k], T[k], head.mode, phase.recall_weight)
            dW += gW
            db += gb
        head.weights -= phase.learning_rate * dW / len(batch)
        head.bias -= phase.learning_rate * db / len(batch)


def save_head(head: LinearHead, path) -> None:
    lines = [MODEL_MAGIC, f"{head.mode} {head.n_algorithms} {head.dim}"]
    for r in range(head.n_algorithms):
        nums = list(head.weights[r]) + [head.bias[r]]
        lines.append(" ".join(format(float(v), ".17g") for v in nums))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_head(path) -> LinearHead:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except UnicodeDecodeError:
        raise ModelFormatError(f"{path}: not a text model file") from None
    if not lines or lines[0].strip() != MODEL_MAGIC:
        raise ModelFormatError(f"{path}:1: expected '{MODEL_MAGIC}'")
    parts = lines[1].split() if len(lines) > 1 else []
    if len(parts) != 3 or parts[0] not in MODES:
        raise ModelFormatError(f"{path}:2: expected 'mode n dim'")
    try:
        n, dim = int(parts[1]), int(parts[2])
    except ValueError:
        raise ModelFormatError(f"{path}:2: n and dim must be integers") from None
    if n < 1 or dim < 1:
        raise ModelFormatError(f"{path}:2: n and dim must be positive")
    if len(lines) < 2 + n:
        raise ModelFormatError(f"{path}:{len(lines) + 1}: expected {n} parameter rows, found {len(lines) - 2}")
    W = np.empty((n, dim))
    b = np.empty(n)
    for r in range(n):
        lineno = r + 3
        fields = lines[r + 2].split()
        if len(fields) != dim + 1:
            raise ModelFormatError(f"{path}:{lineno}: expected {dim + 1} numbers, found {len(fields)}")
        try:
            row = [float(v) for v in fields]
        except ValueError as exc:
            raise ModelFormatError(f"{path}:{lineno}: {exc}") from None
        if not all(math.isfinite(v) for v in row):
            raise ModelFormatError(f"{path}:{lineno}: non-finite parameter")
        W[r] = row[:-1]
        b[r] = row[-1]
    if any(line.strip() for line in lines[2 + n:]):
        raise ModelFormatError(f"{path}:{n + 3}: unexpected trailing content")
    return LinearHead(W, b, parts[0])
