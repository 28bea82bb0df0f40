"""Turning head outputs and instance features into an algorithm choice."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .portfolio import AlgorithmId, DataError, PerformanceMatrix, par10_columns, vbs_choices
from .text_encoder import CONCATENATED, FeatureVector

ARGMAX = "argmax"
NN_SBS = "nn-sbs"
NN_WS = "nn-ws"
KMEANS = "kmeans"
SELECTOR_KINDS = (ARGMAX, NN_SBS, NN_WS, KMEANS)


@dataclass(frozen=True, eq=False)
class SelectionContext:
    """Training-split statistics used to rank filtered candidates."""

    algorithms: tuple[AlgorithmId, ...]
    par10: np.ndarray
    wins: np.ndarray

    @classmethod
    def from_training(cls, matrix: PerformanceMatrix, train_ids: Sequence[str]) -> "SelectionContext":
        cols = par10_columns(matrix, train_ids)
        wins = np.bincount(vbs_choices(matrix, train_ids), minlength=matrix.n_algorithms)
        return cls(matrix.algorithms, cols, wins)

    def __eq__(self, other):
        if not isinstance(other, SelectionContext):
            return NotImplemented
        return (
            self.algorithms == other.algorithms
            and np.array_equal(self.par10, other.par10)
            and np.array_equal(self.wins, other.wins)
        )

    def save(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["algorithm", "par10", "wins"])
            for a, p, w in zip(self.algorithms, self.par10, self.wins):
                writer.writerow([str(a), format(float(p), ".17g"), int(w)])

    @classmethod
    def load(cls, path) -> "SelectionContext":
        with Path(path).open(newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            raise DataError(f"{path}: empty selection context")
        try:
            return cls(
                tuple(AlgorithmId.parse(r["algorithm"]) for r in rows),
                np.array([float(r["par10"]) for r in rows]),
                np.array([int(r["wins"]) for r in rows]),
            )
        except (KeyError, ValueError) as exc:
            raise DataError(f"{path}: malformed selection context: {exc}") from None


def select_argmax(probs) -> int:
    """Index of the highest probability; the earliest algorithm wins ties."""
    return int(np.argmax(np.asarray(probs)))


def filter_candidates(probs, threshold: float = 0.5) -> list[int]:
    """Algorithms predicted competitive (prob >= threshold), or all if none are."""
    if not 0 < threshold < 1:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    probs = np.asarray(probs)
    kept = [int(i) for i in np.flatnonzero(probs >= threshold)]
    return kept or list(range(len(probs)))


def _check_candidates(candidates: Sequence[int], n: int) -> None:
    if not candidates:
        raise ValueError("candidate set is empty")
    if min(candidates) < 0 or max(candidates) >= n:
        raise IndexError(f"candidate index out of range for a portfolio of {n}")


def select_sbs(candidates: Sequence[int], ctx: SelectionContext) -> int:
    """Candidate with the lowest training PAR10."""
    _check_candidates(candidates, len(ctx.algorithms))
    return min(sorted(candidates), key=lambda j: ctx.par10[j])


def select_ws(candidates: Sequence[int], ctx: SelectionContext) -> int:
    """Candidate that won the most training instances."""
    _check_candidates(candidates, len(ctx.algorithms))
    return max(sorted(candidates), key=lambda j: (ctx.wins[j], -j))


def concat_features(enc, probs) -> FeatureVector:
    enc = np.asarray(getattr(enc, "values", enc), dtype=np.float64)
    probs = np.asarray(getattr(probs, "values", probs), dtype=np.float64)
    if np.any((probs < 0) | (probs > 1)):
        raise ValueError("probability part must lie in [0, 1]")
    return FeatureVector(np.concatenate([enc, probs]), CONCATENATED)


def export_features(features: Mapping[str, object], path) -> None:
    """Write ``instance,f0,f1,...`` CSV with round-trippable decimals."""
    items = [(iid, np.asarray(getattr(v, "values", v), dtype=np.float64)) for iid, v in features.items()]
    widths = {v.shape[0] for _, v in items}
    if len(widths) > 1:
        raise DataError(f"feature vectors have differing lengths {sorted(widths)}")
    width = widths.pop() if widths else 0
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["instance"] + [f"f{j}" for j in range(width)])
        for iid, v in items:
            writer.writerow([iid] + [format(float(x), ".17g") for x in v])


def choose(
    kind: str,
    probs,
    ctx: SelectionContext | None = None,
    threshold: float = 0.5,
) -> int:
    """Apply one of the probability-driven selectors (argmax, nn-sbs, nn-ws)."""
    if kind == ARGMAX:
        return select_argmax(probs)
    if ctx is None:
        raise ValueError(f"selector {kind!r} needs a selection context")
    if kind == NN_SBS:
        return select_sbs(filter_candidates(probs, threshold), ctx)
    if kind == NN_WS:
        return select_ws(filter_candidates(probs, threshold), ctx)
    raise ValueError(f"selector {kind!r} is not probability-driven")


def stack(vectors: Iterable[object]) -> np.ndarray:
    return np.stack([np.asarray(getattr(v, "values", v), dtype=np.float64) for v in vectors])
