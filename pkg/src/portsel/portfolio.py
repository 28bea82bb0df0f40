"""Runtime data for an algorithm portfolio and everything scored from it.

An *algorithm* is a (model, solver) pair such as ``M2-chuffed``. Runtimes
arrive as a CSV grid over instances x algorithms; PAR10, the virtual best
solver (VBS), the single best solver and competitiveness labels are all
derived from that grid.

Ties are broken everywhere by declared portfolio order (lowest index wins).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

SOLVED = "solved"
TIMEOUT = "timeout"
ERROR = "error"
STATUSES = (SOLVED, TIMEOUT, ERROR)

RUNTIME_HEADER = ["instance", "algorithm", "status", "runtime"]


class DataError(ValueError):
    """Malformed or incomplete runtime/feature data."""


@dataclass(frozen=True, order=True)
class AlgorithmId:
    model_tag: str
    solver_tag: str

    def __post_init__(self):
        if not self.model_tag or not self.solver_tag:
            raise DataError(f"empty tag in algorithm id {self.model_tag!r}-{self.solver_tag!r}")
        if "-" in self.model_tag:
            raise DataError(f"model tag may not contain '-': {self.model_tag!r}")

    @classmethod
    def parse(cls, text: str) -> "AlgorithmId":
        model, sep, solver = text.strip().partition("-")
        if not sep:
            raise DataError(f"algorithm {text!r} is not of the form model-solver")
        return cls(model, solver)

    def __str__(self) -> str:
        return f"{self.model_tag}-{self.solver_tag}"


@dataclass(frozen=True)
class RuntimeRecord:
    instance_id: str
    algorithm: AlgorithmId
    status: str
    runtime_seconds: float


@dataclass(frozen=True, eq=False)
class PerformanceMatrix:
    """Complete instance x algorithm runtime grid.

    ``runtimes`` and ``solved`` are (n_instances, n_algorithms) arrays in
    the declared order. Raw runtimes are kept as recorded; penalties are
    applied only when scoring.
    """

    instances: tuple[str, ...]
    algorithms: tuple[AlgorithmId, ...]
    runtimes: np.ndarray
    solved: np.ndarray
    statuses: np.ndarray
    cutoff_seconds: float = 3600.0
    penalty_factor: float = 10.0
    _index: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        n, m = len(self.instances), len(self.algorithms)
        if self.cutoff_seconds <= 0:
            raise DataError(f"cutoff must be positive, got {self.cutoff_seconds}")
        if self.penalty_factor <= 0:
            raise DataError(f"penalty factor must be positive, got {self.penalty_factor}")
        if m < 1:
            raise DataError("portfolio is empty")
        if len(set(self.algorithms)) != m:
            raise DataError("duplicate algorithm in portfolio")
        if len(set(self.instances)) != n:
            raise DataError("duplicate instance id")
        for name in ("runtimes", "solved", "statuses"):
            arr = getattr(self, name)
            if arr.shape != (n, m):
                raise DataError(f"{name} has shape {arr.shape}, expected {(n, m)}")
        if np.any(self.runtimes < 0) or not np.all(np.isfinite(self.runtimes)):
            raise DataError("runtimes must be finite and nonnegative")
        over = self.solved & (self.runtimes > self.cutoff_seconds)
        if np.any(over):
            i, j = np.argwhere(over)[0]
            raise DataError(
                f"({self.instances[i]}, {self.algorithms[j]}) is solved in "
                f"{self.runtimes[i, j]} s, beyond the {self.cutoff_seconds} s cutoff"
            )
        for arr in (self.runtimes, self.solved, self.statuses):
            arr.setflags(write=False)
        object.__setattr__(self, "_index", {iid: k for k, iid in enumerate(self.instances)})

    @classmethod
    def from_records(
        cls,
        records: Iterable[RuntimeRecord],
        cutoff: float = 3600.0,
        penalty_factor: float = 10.0,
        algorithms: Sequence[AlgorithmId] | None = None,
    ) -> "PerformanceMatrix":
        """Assemble a matrix, insisting on a complete grid.

        Instance and algorithm order follow first appearance unless
        ``algorithms`` fixes the portfolio order.
        """
        instances: dict[str, int] = {}
        algs: dict[AlgorithmId, int] = {}
        if algorithms is not None:
            algs = {a: k for k, a in enumerate(algorithms)}
        cells: dict[tuple[str, AlgorithmId], RuntimeRecord] = {}
        duplicates = []
        for rec in records:
            if rec.status not in STATUSES:
                raise DataError(f"unknown status {rec.status!r} for ({rec.instance_id}, {rec.algorithm})")
            if not math.isfinite(rec.runtime_seconds) or rec.runtime_seconds < 0:
                raise DataError(
                    f"invalid runtime {rec.runtime_seconds} for ({rec.instance_id}, {rec.algorithm})"
                )
            instances.setdefault(rec.instance_id, len(instances))
            if rec.algorithm not in algs:
                if algorithms is not None:
                    raise DataError(f"algorithm {rec.algorithm} is not in the declared portfolio")
                algs[rec.algorithm] = len(algs)
            key = (rec.instance_id, rec.algorithm)
            if key in cells:
                duplicates.append(key)
            cells[key] = rec
        if duplicates:
            listed = ", ".join(f"({i}, {a})" for i, a in duplicates)
            raise DataError(f"duplicate cells: {listed}")

        inst = tuple(instances)
        alg = tuple(algs)
        missing = [(i, a) for i in inst for a in alg if (i, a) not in cells]
        if missing:
            listed = ", ".join(f"({i}, {a})" for i, a in missing)
            raise DataError(f"missing cells: {listed}")

        shape = (len(inst), len(alg))
        runtimes = np.empty(shape)
        statuses = np.empty(shape, dtype=object)
        for r, i in enumerate(inst):
            for c, a in enumerate(alg):
                rec = cells[(i, a)]
                runtimes[r, c] = rec.runtime_seconds
                statuses[r, c] = rec.status
        return cls(
            instances=inst,
            algorithms=alg,
            runtimes=runtimes,
            solved=statuses == SOLVED,
            statuses=statuses,
            cutoff_seconds=float(cutoff),
            penalty_factor=float(penalty_factor),
        )

    @property
    def n_algorithms(self) -> int:
        return len(self.algorithms)

    @property
    def penalty(self) -> float:
        return self.penalty_factor * self.cutoff_seconds

    def rows(self, instance_subset: Iterable[str]) -> np.ndarray:
        ids = list(instance_subset)
        if not ids:
            raise DataError("instance subset is empty")
        try:
            return np.array([self._index[i] for i in ids], dtype=np.intp)
        except KeyError as exc:
            raise DataError(f"instance {exc.args[0]!r} is not in the matrix") from None

    def algorithm_index(self, algorithm: AlgorithmId | str) -> int:
        if isinstance(algorithm, str):
            algorithm = AlgorithmId.parse(algorithm)
        try:
            return self.algorithms.index(algorithm)
        except ValueError:
            raise DataError(f"algorithm {algorithm} is not in the portfolio") from None

    def penalized(self) -> np.ndarray:
        """Runtime grid with every unsolved cell replaced by the PAR penalty."""
        return np.where(self.solved, self.runtimes, self.penalty)

    def subset(self, instance_subset: Iterable[str]) -> "PerformanceMatrix":
        rows = self.rows(instance_subset)
        return PerformanceMatrix(
            instances=tuple(self.instances[r] for r in rows),
            algorithms=self.algorithms,
            runtimes=self.runtimes[rows].copy(),
            solved=self.solved[rows].copy(),
            statuses=self.statuses[rows].copy(),
            cutoff_seconds=self.cutoff_seconds,
            penalty_factor=self.penalty_factor,
        )

    def records(self) -> list[RuntimeRecord]:
        return [
            RuntimeRecord(i, a, self.statuses[r, c], float(self.runtimes[r, c]))
            for r, i in enumerate(self.instances)
            for c, a in enumerate(self.algorithms)
        ]


def _parse_runtime_rows(rows: Iterable[dict], source: str) -> list[RuntimeRecord]:
    records = []
    for lineno, row in enumerate(rows, start=2):
        try:
            instance = row["instance"].strip()
            algorithm = AlgorithmId.parse(row["algorithm"])
            status = row["status"].strip().lower()
            runtime = float(row["runtime"])
        except (KeyError, AttributeError, ValueError) as exc:
            raise DataError(f"{source}:{lineno}: cannot parse row {row!r}: {exc}") from None
        if not instance:
            raise DataError(f"{source}:{lineno}: empty instance id")
        if status not in STATUSES:
            raise DataError(f"{source}:{lineno}: unknown status {status!r}")
        if runtime < 0 or not math.isfinite(runtime):
            raise DataError(f"{source}:{lineno}: negative or non-finite runtime {row['runtime']!r}")
        records.append(RuntimeRecord(instance, algorithm, status, runtime))
    return records


def ingest_runtimes(path, cutoff: float = 3600.0, penalty_factor: float = 10.0) -> PerformanceMatrix:
    """Read a runtime CSV (``instance,algorithm,status,runtime``)."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = [h.strip() for h in (reader.fieldnames or [])]
        if header != RUNTIME_HEADER:
            raise DataError(f"{path}: expected header {','.join(RUNTIME_HEADER)}, got {','.join(header)}")
        reader.fieldnames = header
        records = _parse_runtime_rows(reader, str(path))
    if not records:
        raise DataError(f"{path}: no runtime rows")
    try:
        return PerformanceMatrix.from_records(records, cutoff=cutoff, penalty_factor=penalty_factor)
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from None


def write_runtimes(matrix: PerformanceMatrix, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RUNTIME_HEADER)
        for rec in matrix.records():
            writer.writerow([rec.instance_id, str(rec.algorithm), rec.status, repr(rec.runtime_seconds)])


def par10(matrix: PerformanceMatrix, algorithm, instance_subset: Iterable[str]) -> float:
    """Penalized average runtime of one algorithm over a set of instances."""
    rows = matrix.rows(instance_subset)
    col = algorithm if isinstance(algorithm, (int, np.integer)) else matrix.algorithm_index(algorithm)
    return float(matrix.penalized()[rows, col].mean())


def par10_columns(matrix: PerformanceMatrix, instance_subset: Iterable[str]) -> np.ndarray:
    """PAR10 of every algorithm over the subset, in portfolio order."""
    rows = matrix.rows(instance_subset)
    return matrix.penalized()[rows].mean(axis=0)


def par10_of_choices(matrix: PerformanceMatrix, instance_subset: Sequence[str], choices: Sequence[int]) -> float:
    """PAR10 of a selector that picked ``choices[k]`` for ``instance_subset[k]``."""
    rows = matrix.rows(instance_subset)
    choices = np.asarray(choices, dtype=np.intp)
    if choices.shape != rows.shape:
        raise DataError(f"{len(choices)} choices for {len(rows)} instances")
    return float(matrix.penalized()[rows, choices].mean())


def vbs_choices(matrix: PerformanceMatrix, instance_subset: Iterable[str]) -> np.ndarray:
    # np.argmin returns the first minimum, which is the portfolio-order tie-break
    rows = matrix.rows(instance_subset)
    return np.argmin(matrix.penalized()[rows], axis=1)


def vbs(matrix: PerformanceMatrix, instance_subset: Iterable[str]) -> tuple[list[AlgorithmId], float]:
    """Per-instance best algorithm and the PAR10 of the virtual best solver."""
    rows = matrix.rows(instance_subset)
    pen = matrix.penalized()[rows]
    best = np.argmin(pen, axis=1)
    return [matrix.algorithms[j] for j in best], float(pen.min(axis=1).mean())


def single_best_index(matrix: PerformanceMatrix, instance_subset: Iterable[str]) -> int:
    return int(np.argmin(par10_columns(matrix, instance_subset)))


def single_best(matrix: PerformanceMatrix, instance_subset: Iterable[str]) -> AlgorithmId:
    """Algorithm with the lowest PAR10 over the subset."""
    return matrix.algorithms[single_best_index(matrix, instance_subset)]


@dataclass(frozen=True, eq=False)
class CompetitivenessLabels:
    instances: tuple[str, ...]
    algorithms: tuple[AlgorithmId, ...]
    labels: np.ndarray
    abs_threshold_seconds: float = 10.0
    rel_factor: float = 2.0

    def row(self, instance_id: str) -> np.ndarray:
        return self.labels[self.instances.index(instance_id)]


def competitive_mask(runtimes: np.ndarray, solved: np.ndarray, abs_threshold: float, rel_factor: float) -> np.ndarray:
    """Boolean grid: solved and (under the absolute or relative threshold)."""
    best = np.where(solved, runtimes, np.inf).min(axis=1, keepdims=True)
    with np.errstate(invalid="ignore"):
        rel = runtimes < rel_factor * best
    return solved & ((runtimes < abs_threshold) | rel)


def competitiveness_labels(
    matrix: PerformanceMatrix, abs_threshold: float = 10.0, rel_factor: float = 2.0
) -> CompetitivenessLabels:
    """Label each (instance, algorithm) cell competitive (1) or not (0).

    A solved cell is competitive when it finishes strictly under
    ``abs_threshold`` seconds or strictly under ``rel_factor`` times the
    fastest solved runtime on that instance. Unsolved cells are never
    competitive. An instance nobody solves gets an all-zero row.
    """
    if abs_threshold <= 0:
        raise ValueError(f"abs_threshold must be positive, got {abs_threshold}")
    if not rel_factor > 1:
        raise ValueError(f"rel_factor must exceed 1, got {rel_factor}")
    mask = competitive_mask(matrix.runtimes, matrix.solved, abs_threshold, rel_factor)
    labels = mask.astype(np.float64)
    labels.setflags(write=False)
    return CompetitivenessLabels(matrix.instances, matrix.algorithms, labels, float(abs_threshold), float(rel_factor))


@dataclass(frozen=True)
class AlgorithmStats:
    algorithm: AlgorithmId
    par10: float
    win_fraction: float
    competitive_fraction: float


def portfolio_stats(
    matrix: PerformanceMatrix, labels: CompetitivenessLabels, instance_subset: Iterable[str]
) -> list[AlgorithmStats]:
    """Per-algorithm PAR10, share of VBS wins and share of competitive instances."""
    ids = list(instance_subset)
    rows = matrix.rows(ids)
    if labels.instances != matrix.instances:
        label_rows = np.array([labels.instances.index(i) for i in ids])
    else:
        label_rows = rows
    cols = par10_columns(matrix, ids)
    wins = np.bincount(vbs_choices(matrix, ids), minlength=matrix.n_algorithms) / len(ids)
    comp = labels.labels[label_rows].mean(axis=0)
    return [
        AlgorithmStats(a, float(cols[j]), float(wins[j]), float(comp[j]))
        for j, a in enumerate(matrix.algorithms)
    ]


STATS_HEADER = ["algorithm", "par10", "win_fraction", "competitive_fraction"]


def write_stats(stats: Sequence[AlgorithmStats], csv_path, json_path) -> None:
    with Path(csv_path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(STATS_HEADER)
        for s in stats:
            writer.writerow([str(s.algorithm), repr(s.par10), repr(s.win_fraction), repr(s.competitive_fraction)])
    payload = {
        "algorithms": [
            {
                "algorithm": str(s.algorithm),
                "par10": s.par10,
                "win_fraction": s.win_fraction,
                "competitive_fraction": s.competitive_fraction,
            }
            for s in stats
        ]
    }
    Path(json_path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
