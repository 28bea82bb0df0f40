"""Cross-validated selection experiments and their metrics."""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from . import head as nh
from .head import MULTICLASS, MULTILABEL, LinearHead, TrainSchedule
from .kmeans import KMeansModel, kmeans_bind, kmeans_fit, kmeans_select, standardizer
from .portfolio import (
    DataError,
    PerformanceMatrix,
    competitiveness_labels,
    par10_columns,
    par10_of_choices,
    vbs_choices,
)
from .selectors import KMEANS, NN_SBS, SELECTOR_KINDS, SelectionContext, choose
from .text_encoder import EncoderConfig, FeatureVector, encode, tokenize

log = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")
FEATURE_COMPOSITIONS = ("concat", "encoder", "probs")
REPORT_METRICS = (
    "par10",
    "normalized_par10",
    "vbs_par10",
    "sbs_par10",
    "accuracy",
    "macro_f1",
    "selection_accuracy",
)
TIMING_METRIC = "mean_prediction_seconds"


@dataclass(frozen=True)
class Fold:
    train: tuple[str, ...]
    val: tuple[str, ...]
    test: tuple[str, ...]

    def split(self, name: str) -> tuple[str, ...]:
        return getattr(self, name)


@dataclass(frozen=True)
class FoldPlan:
    folds: tuple[Fold, ...]
    seed: int

    @property
    def n_folds(self) -> int:
        return len(self.folds)


def make_folds(instance_ids: Sequence[str], n_folds: int = 10, seed: int = 0, val_fraction: float = 0.1) -> FoldPlan:
    """Seeded shuffle, round-robin test folds, train/val split of the rest.

    Position ``p`` of the shuffled order goes to the test set of fold
    ``p % n_folds``, so earlier folds absorb any remainder. Within a fold the
    non-test instances keep their shuffled order; the last
    ``round(val_fraction * len)`` of them (at least one when two or more
    remain) form the validation set.
    """
    ids = list(instance_ids)
    if n_folds < 2:
        raise ValueError(f"n_folds must be at least 2, got {n_folds}")
    if len(ids) < n_folds:
        raise ValueError(f"{len(ids)} instances cannot fill {n_folds} folds")
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate instance ids")
    order = [ids[i] for i in np.random.default_rng(seed).permutation(len(ids))]
    folds = []
    for f in range(n_folds):
        test = tuple(order[p] for p in range(f, len(order), n_folds))
        rest = [order[p] for p in range(len(order)) if p % n_folds != f]
        n_val = int(round(val_fraction * len(rest)))
        if len(rest) >= 2:
            n_val = min(max(n_val, 1), len(rest) - 1)
        else:
            n_val = 0
        folds.append(Fold(tuple(rest[: len(rest) - n_val]), tuple(rest[len(rest) - n_val:]), test))
    return FoldPlan(tuple(folds), seed)


def normalized_par10(selector_par10: float, sbs_par10: float, vbs_par10: float) -> float:
    """0 at the virtual best, 1 at the single best; above 1 when worse than the single best."""
    if sbs_par10 < vbs_par10:
        raise ValueError(f"single best PAR10 {sbs_par10} is below the VBS PAR10 {vbs_par10}")
    if selector_par10 < vbs_par10 - 1e-9 * max(1.0, abs(vbs_par10)):
        raise ValueError(f"selector PAR10 {selector_par10} beats the VBS {vbs_par10}; scoring bug")
    if sbs_par10 == vbs_par10:
        return 0.0
    return max(0.0, (selector_par10 - vbs_par10) / (sbs_par10 - vbs_par10))


def _f1(tp, fp, fn) -> float:
    if tp + fp + fn == 0:
        return 1.0
    return 2.0 * tp / (2.0 * tp + fp + fn)


def classification_metrics(predictions, truths, mode: str) -> dict[str, float]:
    """Accuracy and macro-F1.

    multiclass: predictions/truths are class indices; accuracy is exact
    match, macro-F1 averages over every class seen in either array.
    multilabel: 0/1 matrices (instances x labels); accuracy is the mean
    per-cell agreement, macro-F1 averages over label columns.
    """
    pred = np.asarray(predictions)
    true = np.asarray(truths)
    if pred.shape != true.shape:
        raise ValueError(f"length mismatch: {pred.shape} predictions vs {true.shape} truths")
    if pred.size == 0:
        raise ValueError("no predictions to score")
    if mode == MULTICLASS:
        pred = pred.astype(np.int64)
        true = true.astype(np.int64)
        classes = np.union1d(pred, true)
        f1s = [
            _f1(np.sum((pred == c) & (true == c)), np.sum((pred == c) & (true != c)), np.sum((pred != c) & (true == c)))
            for c in classes
        ]
        return {"accuracy": float(np.mean(pred == true)), "macro_f1": float(np.mean(f1s))}
    if mode == MULTILABEL:
        pred = pred.astype(bool)
        true = true.astype(bool)
        if pred.ndim == 1:
            pred, true = pred[:, None], true[:, None]
        tp = (pred & true).sum(axis=0)
        fp = (pred & ~true).sum(axis=0)
        fn = (~pred & true).sum(axis=0)
        f1s = [_f1(*c) for c in zip(tp, fp, fn)]
        return {"accuracy": float(np.mean(pred == true)), "macro_f1": float(np.mean(f1s))}
    raise ValueError(f"unknown mode {mode!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str = MULTILABEL
    selector: str = NN_SBS
    kmeans_features: str = "concat"
    k: int = 12
    standardize: bool = False
    filter_threshold: float = 0.5
    abs_threshold: float = 10.0
    rel_factor: float = 2.0
    n_folds: int = 10
    seed: int = 0
    encoder: EncoderConfig = EncoderConfig()
    schedule: TrainSchedule | None = None
    kmeans_max_iters: int = 300
    kmeans_tol: float = 1e-6

    def __post_init__(self):
        if self.mode not in (MULTICLASS, MULTILABEL):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.selector not in SELECTOR_KINDS:
            raise ValueError(f"unknown selector {self.selector!r}; choose from {SELECTOR_KINDS}")
        if self.kmeans_features not in FEATURE_COMPOSITIONS:
            raise ValueError(f"unknown kmeans feature composition {self.kmeans_features!r}")
        if self.k < 1:
            raise ValueError(f"k must be positive, got {self.k}")
        if not 0 < self.filter_threshold < 1:
            raise ValueError(f"filter threshold must lie in (0, 1), got {self.filter_threshold}")

    def train_schedule(self) -> TrainSchedule:
        return self.schedule if self.schedule is not None else TrainSchedule.default(self.mode, self.seed)

    def describe(self) -> dict:
        sched = self.train_schedule()
        return {
            "mode": self.mode,
            "selector": self.selector,
            "kmeans_features": self.kmeans_features,
            "k": self.k,
            "standardize": self.standardize,
            "filter_threshold": self.filter_threshold,
            "abs_threshold": self.abs_threshold,
            "rel_factor": self.rel_factor,
            "n_folds": self.n_folds,
            "seed": self.seed,
            "dim": self.encoder.dim,
            "max_tokens": self.encoder.max_tokens,
            "ngram_orders": list(self.encoder.ngram_orders),
            "hash_seed": self.encoder.hash_seed,
            "schedule": sched.format(),
            "batch_size": sched.batch_size,
        }


@dataclass
class EvalReport:
    """Per fold x split metrics plus their mean/std over folds."""

    config: dict
    folds: list[dict[str, dict[str, float]]]

    def aggregate(self, include_timing: bool = True) -> dict[str, dict[str, dict[str, float]]]:
        out = {}
        for split in SPLITS:
            metrics = {}
            for name in self._metric_names(include_timing):
                vals = [f[split][name] for f in self.folds if f[split].get(name) is not None]
                if vals:
                    metrics[name] = {"mean": float(np.mean(vals)), "std": float(np.std(vals))}
            out[split] = metrics
        return out

    @staticmethod
    def _metric_names(include_timing):
        return REPORT_METRICS + ((TIMING_METRIC,) if include_timing else ())

    def mean(self, split: str, metric: str) -> float:
        return self.aggregate()[split][metric]["mean"]

    def to_dict(self, include_timing: bool = False) -> dict:
        names = self._metric_names(include_timing)
        folds = {
            str(i): {split: {m: fold[split].get(m) for m in names} for split in SPLITS}
            for i, fold in enumerate(self.folds)
        }
        return {"config": self.config, "folds": folds, "aggregate": self.aggregate(include_timing)}

    def write_json(self, path, include_timing: bool = False) -> None:
        Path(path).write_text(json.dumps(self.to_dict(include_timing), indent=2) + "\n", encoding="utf-8")

    def write_csv(self, path, include_timing: bool = False) -> None:
        names = self._metric_names(include_timing)
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["fold", "split", "metric", "value"])
            for i, fold in enumerate(self.folds):
                for split in SPLITS:
                    for m in names:
                        v = fold[split].get(m)
                        writer.writerow([i, split, m, "" if v is None else repr(float(v))])
            agg = self.aggregate(include_timing)
            for stat in ("mean", "std"):
                for split in SPLITS:
                    for m in names:
                        if m in agg[split]:
                            writer.writerow([stat, split, m, repr(agg[split][m][stat])])


REPORT_SCHEMA = {
    "type": "object",
    "required": ["config", "folds", "aggregate"],
    "properties": {
        "config": {"type": "object"},
        "folds": {
            "type": "object",
            "patternProperties": {
                "^[0-9]+$": {
                    "type": "object",
                    "required": list(SPLITS),
                    "additionalProperties": False,
                    "properties": {
                        s: {
                            "type": "object",
                            "required": list(REPORT_METRICS),
                            "additionalProperties": {"type": ["number", "null"]},
                        }
                        for s in SPLITS
                    },
                }
            },
            "additionalProperties": False,
        },
        "aggregate": {
            "type": "object",
            "required": list(SPLITS),
            "additionalProperties": {
                "type": "object",
                "additionalProperties": {
                    "type": "object",
                    "required": ["mean", "std"],
                    "properties": {"mean": {"type": "number"}, "std": {"type": "number", "minimum": 0}},
                },
            },
        },
    },
}


def timing_table(seconds: Sequence[float]) -> dict[str, float]:
    s = np.asarray(seconds, dtype=np.float64)
    return {"median": float(np.median(s)), "mean": float(s.mean()), "max": float(s.max()), "min": float(s.min())}


def format_timing_table(stats: Mapping[str, float], label: str = "NN") -> str:
    """Median/Mean/Max/Min row in seconds with 3 decimals."""
    header = f"{'':10s} {'Median':>8s} {'Mean':>8s} {'Max':>8s} {'Min':>8s}"
    row = f"{label:10s} " + " ".join(f"{stats[k]:8.3f}" for k in ("median", "mean", "max", "min"))
    return header + "\n" + row


@dataclass
class FoldArtifacts:
    head: LinearHead
    trace: list
    context: SelectionContext
    kmeans: KMeansModel | None = None


@dataclass
class ExperimentResult:
    report: EvalReport
    plan: FoldPlan
    folds: list[FoldArtifacts] = field(default_factory=list)
    prediction_seconds: list[float] = field(default_factory=list)


def _fold_seeds(seed: int, fold: int) -> tuple[int, int, int]:
    init, shuffle, km = np.random.SeedSequence([seed, fold]).generate_state(3, dtype=np.uint64)
    return int(init), int(shuffle), int(km)


def _feature_matrix(composition, enc: np.ndarray, probs: np.ndarray) -> np.ndarray:
    if composition == "encoder":
        return enc
    if composition == "probs":
        return probs
    return np.hstack([enc, probs])


def run_experiment(
    matrix: PerformanceMatrix,
    texts: Mapping[str, str] | None = None,
    config: ExperimentConfig = ExperimentConfig(),
    embeddings: Mapping[str, FeatureVector] | None = None,
    oracle: Callable[[str], np.ndarray] | None = None,
) -> ExperimentResult:
    """Cross-validate the configured head + selector on ``matrix``.

    Features come from ``texts`` (hashed encoder) or ``embeddings``
    (imported vectors). ``oracle``, when given, replaces the trained head's
    probabilities at selection time (used to check scoring against known
    answers); the head is still trained and reported.
    """
    if (texts is None) == (embeddings is None):
        raise ValueError("provide exactly one of texts or embeddings")
    source = texts if texts is not None else embeddings
    missing = [i for i in matrix.instances if i not in source]
    if missing:
        shown = ", ".join(missing[:10]) + (" ..." if len(missing) > 10 else "")
        raise DataError(f"{len(missing)} instances have runtimes but no features: {shown}")

    ids = list(matrix.instances)
    index = {iid: r for r, iid in enumerate(ids)}
    feat_seconds = np.zeros(len(ids))
    vectors = []
    for r, iid in enumerate(ids):
        if texts is not None:
            t0 = time.perf_counter()
            fv = encode(tokenize(texts[iid], config.encoder.max_tokens), config.encoder)
            feat_seconds[r] = time.perf_counter() - t0
        else:
            fv = embeddings[iid]
        vectors.append(fv.values)
    X = np.ascontiguousarray(np.stack(vectors))
    dims = X.shape[1]

    if config.mode == MULTILABEL:
        labels = competitiveness_labels(matrix, config.abs_threshold, config.rel_factor).labels
        targets = [labels[r] for r in range(len(ids))]
        truth = labels
    else:
        best = vbs_choices(matrix, ids)
        targets = [int(b) for b in best]
        truth = best
    best_all = vbs_choices(matrix, ids)

    plan = make_folds(ids, config.n_folds, config.seed)
    base_schedule = config.train_schedule()
    fold_metrics = []
    artifacts = []
    prediction_seconds = []
    for f, fold in enumerate(plan.folds):
        init_seed, shuffle_seed, km_seed = _fold_seeds(config.seed, f)
        schedule = dataclasses.replace(base_schedule, seed=shuffle_seed)
        rows = {s: np.array([index[i] for i in fold.split(s)], dtype=np.intp) for s in SPLITS}
        train_set = [(X[r], targets[r]) for r in rows["train"]]
        val_set = [(X[r], targets[r]) for r in rows["val"]]
        init = nh.init_head(matrix.n_algorithms, dims, config.mode, init_seed)
        result = nh.train(train_set, init, schedule, val_set)
        fitted = result.head
        ctx = SelectionContext.from_training(matrix, fold.train)

        km_model = None
        if config.selector == KMEANS:
            P_train = nh.predict_many(fitted, X[rows["train"]])
            F_train = _feature_matrix(config.kmeans_features, X[rows["train"]], P_train)
            mean = scale = None
            if config.standardize:
                mean, scale = standardizer(F_train)
                F_train = (F_train - mean) / scale
            k = min(config.k, len(fold.train))
            fit = kmeans_fit(F_train, k, km_seed, config.kmeans_max_iters, config.kmeans_tol)
            km_model = kmeans_bind(fit.centroids, F_train, fold.train, matrix, km_seed, mean, scale)

        per_split = {}
        for split in SPLITS:
            split_ids = fold.split(split)
            if not split_ids:
                per_split[split] = {m: None for m in REPORT_METRICS + (TIMING_METRIC,)}
                continue
            choices = np.empty(len(split_ids), dtype=np.intp)
            probs_all = np.empty((len(split_ids), matrix.n_algorithms))
            seconds = np.empty(len(split_ids))
            for k_, iid in enumerate(split_ids):
                r = index[iid]
                t0 = time.perf_counter()
                probs = nh.predict(fitted, X[r])
                if oracle is not None:
                    probs = np.asarray(oracle(iid), dtype=np.float64)
                if config.selector == KMEANS:
                    feat = _feature_matrix(config.kmeans_features, X[r][None, :], probs[None, :])[0]
                    choice = matrix.algorithm_index(kmeans_select(km_model, feat))
                else:
                    choice = choose(config.selector, probs, ctx, config.filter_threshold)
                seconds[k_] = time.perf_counter() - t0 + feat_seconds[r]
                choices[k_] = choice
                probs_all[k_] = probs
            if split == "test":
                prediction_seconds.extend(seconds.tolist())
            per_split[split] = _split_metrics(matrix, split_ids, choices, probs_all, truth[rows[split]], best_all[rows[split]], config)
            per_split[split][TIMING_METRIC] = float(seconds.mean())
        fold_metrics.append(per_split)
        artifacts.append(FoldArtifacts(fitted, result.trace, ctx, km_model))
        log.info(
            "fold %d: test PAR10 %.3f (normalized %.4f)",
            f,
            per_split["test"]["par10"],
            per_split["test"]["normalized_par10"],
        )

    report = EvalReport(config.describe(), fold_metrics)
    return ExperimentResult(report, plan, artifacts, prediction_seconds)


def _split_metrics(matrix, split_ids, choices, probs, truth, best, config) -> dict[str, float]:
    sel = par10_of_choices(matrix, split_ids, choices)
    cols = par10_columns(matrix, split_ids)
    sbs = float(cols.min())
    vbs_val = par10_of_choices(matrix, split_ids, best)
    if config.mode == MULTILABEL:
        cls = classification_metrics(probs >= 0.5, truth >= 0.5, MULTILABEL)
    else:
        cls = classification_metrics(np.argmax(probs, axis=1), truth, MULTICLASS)
    return {
        "par10": sel,
        "normalized_par10": normalized_par10(sel, sbs, vbs_val),
        "vbs_par10": vbs_val,
        "sbs_par10": sbs,
        "accuracy": cls["accuracy"],
        "macro_f1": cls["macro_f1"],
        "selection_accuracy": float(np.mean(choices == best)),
    }


def write_traces(traces, path) -> None:
    """One CSV row per (fold, epoch); empty cells where there was no validation split."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["fold"] + nh.TRACE_FIELDS)
        for f, trace in enumerate(traces):
            for rec in trace:
                row = dataclasses.asdict(rec)
                writer.writerow([f] + ["" if isinstance(row[k], float) and math.isnan(row[k]) else repr(row[k]) for k in nh.TRACE_FIELDS])
