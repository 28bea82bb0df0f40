"""Cluster-based selector: Lloyd's k-means with k-means++ seeding.

Each cluster is bound to the algorithm with the lowest PAR10 over the
training instances that fell into it; a new instance gets the algorithm of
its nearest centroid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .portfolio import AlgorithmId, PerformanceMatrix, par10_columns, single_best_index

KMEANS_MAGIC = "KMEANS v1"


class KMeansFormatError(ValueError):
    pass


def nearest(X: np.ndarray, C: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nearest centroid per row (lowest index on ties) and its squared distance."""
    d = ((X[:, None, :] - C[None, :, :]) ** 2).sum(axis=2)
    idx = np.argmin(d, axis=1)
    return idx, d[np.arange(X.shape[0]), idx]


def kmeans_plusplus(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    centers = [X[rng.integers(n)]]
    d2 = ((X - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            nxt = rng.choice(n, p=d2 / total)
        else:
            nxt = rng.integers(n)
        centers.append(X[nxt])
        d2 = np.minimum(d2, ((X - X[nxt]) ** 2).sum(axis=1))
    return np.array(centers, dtype=np.float64)


@dataclass
class KMeansFit:
    centroids: np.ndarray
    labels: np.ndarray
    inertia_history: list[float] = field(default_factory=list)
    n_iter: int = 0


def kmeans_fit(points, k: int, seed: int = 0, max_iters: int = 300, tol: float = 1e-6) -> KMeansFit:
    """Lloyd iterations from a seeded k-means++ start.

    Stops once no centroid moves by ``tol`` or more, or after ``max_iters``.
    A cluster that loses all its points is moved onto the point farthest
    from its current centroid. ``inertia_history[t]`` is the within-cluster
    sum of squares after the assignment step of iteration ``t``.
    """
    X = np.asarray(points, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("need a nonempty 2-D array of points")
    if not np.all(np.isfinite(X)):
        raise ValueError("points must be finite")
    if not 1 <= k <= X.shape[0]:
        raise ValueError(f"k={k} must be between 1 and the number of points ({X.shape[0]})")
    rng = np.random.default_rng(seed)
    C = kmeans_plusplus(X, k, rng)
    history = []
    it = 0
    for it in range(1, max_iters + 1):
        labels, d2 = nearest(X, C)
        history.append(float(d2.sum()))
        new = C.copy()
        taken = set()
        for j in range(k):
            members = labels == j
            if members.any():
                new[j] = X[members].mean(axis=0)
        for j in range(k):
            if not (labels == j).any():
                # farthest point from its own centroid, not already used for a reseed
                order = np.argsort(-d2, kind="stable")
                pick = next(int(i) for i in order if int(i) not in taken)
                taken.add(pick)
                new[j] = X[pick]
                d2[pick] = 0.0
        shift = np.sqrt(((new - C) ** 2).sum(axis=1)).max()
        C = new
        if shift < tol:
            break
    labels, d2 = nearest(X, C)
    history.append(float(d2.sum()))
    return KMeansFit(C, labels, history, it)


@dataclass(eq=False)
class KMeansModel:
    centroids: np.ndarray
    cluster_algorithm: list[AlgorithmId]
    seed: int = 0
    mean: np.ndarray | None = None
    scale: np.ndarray | None = None

    def __post_init__(self):
        self.centroids = np.asarray(self.centroids, dtype=np.float64)
        if self.centroids.ndim != 2 or len(self.cluster_algorithm) != self.centroids.shape[0]:
            raise ValueError("every centroid needs exactly one bound algorithm")
        if not np.all(np.isfinite(self.centroids)):
            raise ValueError("centroids must be finite")

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]

    def transform(self, X: np.ndarray) -> np.ndarray:
        if self.mean is None:
            return X
        return (X - self.mean) / self.scale


def standardizer(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0] = 1.0
    return mean, scale


def kmeans_bind(
    centroids: np.ndarray,
    train_features: np.ndarray,
    train_ids: Sequence[str],
    matrix: PerformanceMatrix,
    seed: int = 0,
    mean: np.ndarray | None = None,
    scale: np.ndarray | None = None,
) -> KMeansModel:
    """Bind each cluster to the best-PAR10 algorithm among its training instances.

    ``train_features`` must already be in the centroid space (standardized if
    ``mean``/``scale`` are given). Clusters with no training instances fall
    back to the training-set single best.
    """
    centroids = np.asarray(centroids, dtype=np.float64)
    X = np.asarray(train_features, dtype=np.float64)
    if X.shape[0] != len(train_ids):
        raise ValueError(f"{X.shape[0]} feature rows for {len(train_ids)} training instances")
    labels, _ = nearest(X, centroids)
    fallback = single_best_index(matrix, train_ids)
    bound = []
    ids = np.asarray(train_ids, dtype=object)
    for j in range(centroids.shape[0]):
        members = list(ids[labels == j])
        if members:
            bound.append(matrix.algorithms[int(np.argmin(par10_columns(matrix, members)))])
        else:
            bound.append(matrix.algorithms[fallback])
    return KMeansModel(centroids, bound, seed, mean, scale)


def kmeans_select(model: KMeansModel, feature) -> AlgorithmId:
    x = np.asarray(getattr(feature, "values", feature), dtype=np.float64)
    if x.shape != (model.dim,):
        raise ValueError(f"feature length {x.shape[0]} does not match centroid dimension {model.dim}")
    idx, _ = nearest(model.transform(x)[None, :], model.centroids)
    return model.cluster_algorithm[int(idx[0])]


def _fmt(values) -> str:
    return " ".join(format(float(v), ".17g") for v in values)


def save_kmeans(model: KMeansModel, path) -> None:
    lines = [KMEANS_MAGIC, f"{model.k} {model.dim}"]
    lines += [_fmt(c) for c in model.centroids]
    lines += [f"{j} {a}" for j, a in enumerate(model.cluster_algorithm)]
    if model.mean is not None:
        lines.append("mean " + _fmt(model.mean))
        lines.append("scale " + _fmt(model.scale))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_kmeans(path) -> KMeansModel:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].strip() != KMEANS_MAGIC:
        raise KMeansFormatError(f"{path}:1: expected '{KMEANS_MAGIC}'")
    try:
        k, dim = (int(v) for v in lines[1].split())
    except (IndexError, ValueError):
        raise KMeansFormatError(f"{path}:2: expected 'k dim'") from None

    def numbers(lineno, text, count):
        fields = text.split()
        if len(fields) != count:
            raise KMeansFormatError(f"{path}:{lineno}: expected {count} numbers, found {len(fields)}")
        try:
            vals = [float(v) for v in fields]
        except ValueError as exc:
            raise KMeansFormatError(f"{path}:{lineno}: {exc}") from None
        if not all(math.isfinite(v) for v in vals):
            raise KMeansFormatError(f"{path}:{lineno}: non-finite value")
        return vals

    if len(lines) < 2 + 2 * k:
        raise KMeansFormatError(f"{path}: truncated, expected {k} centroids and {k} bindings")
    C = np.array([numbers(3 + j, lines[2 + j], dim) for j in range(k)])
    bound = []
    for j in range(k):
        lineno = 3 + k + j
        parts = lines[2 + k + j].split()
        if len(parts) != 2 or parts[0] != str(j):
            raise KMeansFormatError(f"{path}:{lineno}: expected '{j} <algorithm>'")
        bound.append(AlgorithmId.parse(parts[1]))
    mean = scale = None
    rest = [(2 + 2 * k + i, line) for i, line in enumerate(lines[2 + 2 * k:]) if line.strip()]
    for idx, line in rest:
        key, _, body = line.partition(" ")
        if key == "mean":
            mean = np.array(numbers(idx + 1, body, dim))
        elif key == "scale":
            scale = np.array(numbers(idx + 1, body, dim))
        else:
            raise KMeansFormatError(f"{path}:{idx + 1}: unexpected line")
    if (mean is None) != (scale is None):
        raise KMeansFormatError(f"{path}: 'mean' and 'scale' must appear together")
    return KMeansModel(C, bound, mean=mean, scale=scale)
