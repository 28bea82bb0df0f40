"""Synthetic car-sequencing-style scenarios with a planted best algorithm.

Every instance carries a ``layout`` pattern token; the algorithm planted for
that pattern runs in 1-5 s while the others take 20-200 s (multiplicative
log-normal noise clipped at three sigma, plus occasional timeouts on the
slow algorithms). For ``noise`` below about 0.23 the planted algorithm is
therefore always the fastest and always competitive.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .portfolio import SOLVED, TIMEOUT, AlgorithmId, PerformanceMatrix, RuntimeRecord, write_runtimes

SOLVERS = ("chuffed", "kissat", "cplex", "ortools")


def portfolio(n_algorithms: int) -> tuple[AlgorithmId, ...]:
    """``M1-chuffed, M1-kissat, ...`` - models outer, solvers inner."""
    solvers = SOLVERS if n_algorithms <= 3 * len(SOLVERS) else SOLVERS + tuple(f"solver{j}" for j in range(5, n_algorithms + 1))
    per_model = len(solvers)
    models = [f"M{m}" for m in range(1, -(-n_algorithms // per_model) + 1)]
    algs = [AlgorithmId(m, s) for m, s in itertools.product(models, solvers)]
    return tuple(algs[:n_algorithms])


@dataclass(frozen=True)
class SyntheticDataset:
    texts: dict[str, str]
    matrix: PerformanceMatrix
    patterns: dict[str, int]
    planted: tuple[int, ...]

    def planted_best(self, instance_id: str) -> int:
        return self.planted[self.patterns[instance_id]]

    def write(self, directory) -> Path:
        directory = Path(directory)
        inst_dir = directory / "instances"
        inst_dir.mkdir(parents=True, exist_ok=True)
        for iid, text in self.texts.items():
            (inst_dir / f"{iid}.param").write_text(text, encoding="utf-8")
        write_runtimes(self.matrix, directory / "runtimes.csv")
        return directory


def _function_literal(rng, size, lo, hi):
    vals = rng.integers(lo, hi + 1, size=size)
    return "function(" + ", ".join(f"{i + 1} --> {v}" for i, v in enumerate(vals)) + ")"


def instance_text(rng: np.random.Generator, pattern: int) -> str:
    n_classes = int(rng.integers(3, 9))
    n_options = int(rng.integers(2, 6))
    n_cars = int(rng.integers(10, 60))
    usage = sorted({(int(rng.integers(1, n_classes + 1)), int(rng.integers(1, n_options + 1))) for _ in range(n_classes)})
    lines = [
        "language Essence 1.3",
        "",
        f"letting n_cars be {n_cars}",
        f"letting n_classes be {n_classes}",
        f"letting n_options be {n_options}",
        f"letting layout be layout_{pattern}",
        f"letting quantity be {_function_literal(rng, n_classes, 1, 9)}",
        f"letting maxcars be {_function_literal(rng, n_options, 1, 3)}",
        f"letting blksize be {_function_literal(rng, n_options, 2, 5)}",
        "letting usage be relation(" + ", ".join(f"({c}, {o})" for c, o in usage) + ")",
    ]
    return "\n".join(lines) + "\n"


def gen_synthetic(
    seed: int,
    n_instances: int,
    n_algorithms: int,
    n_patterns: int,
    noise: float = 0.1,
    timeout_rate: float = 0.02,
    pattern_weights: Sequence[float] | None = None,
    cutoff: float = 3600.0,
    penalty_factor: float = 10.0,
) -> SyntheticDataset:
    if n_algorithms < 1 or n_instances < 1:
        raise ValueError("need at least one instance and one algorithm")
    if not 1 <= n_patterns <= n_algorithms:
        raise ValueError(f"n_patterns must be in [1, n_algorithms], got {n_patterns}")
    if noise < 0 or not 0 <= timeout_rate < 1:
        raise ValueError("noise must be >= 0 and timeout_rate in [0, 1)")
    if pattern_weights is None:
        weights = np.full(n_patterns, 1.0 / n_patterns)
    else:
        weights = np.asarray(pattern_weights, dtype=np.float64)
        if weights.shape != (n_patterns,) or np.any(weights < 0) or weights.sum() <= 0:
            raise ValueError("pattern_weights must be n_patterns nonnegative numbers")
        weights = weights / weights.sum()

    rng = np.random.default_rng(seed)
    algs = portfolio(n_algorithms)
    planted = tuple(int(j) for j in rng.choice(n_algorithms, size=n_patterns, replace=False))
    width = len(str(n_instances - 1))
    texts, patterns, records = {}, {}, []
    for i in range(n_instances):
        iid = f"inst{i:0{width}d}"
        p = int(rng.choice(n_patterns, p=weights))
        texts[iid] = instance_text(rng, p)
        patterns[iid] = p
        mult = np.exp(noise * np.clip(rng.standard_normal(n_algorithms), -3.0, 3.0))
        runtimes = rng.uniform(20.0, 200.0, size=n_algorithms) * mult
        runtimes[planted[p]] = rng.uniform(1.0, 5.0) * mult[planted[p]]
        timeouts = rng.random(n_algorithms) < timeout_rate
        timeouts[planted[p]] = False
        runtimes = np.minimum(runtimes, cutoff)
        for j, a in enumerate(algs):
            if timeouts[j] or runtimes[j] >= cutoff:
                records.append(RuntimeRecord(iid, a, TIMEOUT, float(cutoff)))
            else:
                records.append(RuntimeRecord(iid, a, SOLVED, float(round(runtimes[j], 6))))
    matrix = PerformanceMatrix.from_records(records, cutoff=cutoff, penalty_factor=penalty_factor, algorithms=algs)
    return SyntheticDataset(texts, matrix, patterns, planted)
