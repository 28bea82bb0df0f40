"""Flat ``key = value`` run configuration.

Lines starting with ``#`` or ``;`` are comments. Relative paths are
resolved against the config file's directory. Unknown keys are rejected so
typos do not silently fall back to defaults.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

from .evaluation import FEATURE_COMPOSITIONS, ExperimentConfig
from .head import MODES, MULTICLASS, TrainSchedule
from .selectors import SELECTOR_KINDS
from .text_encoder import EncoderConfig


class ConfigError(ValueError):
    pass


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.replace(" ", "").split(",") if v)


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace(" ", "").split(",") if v)


PATH_KEYS = ("runtimes", "texts", "embeddings", "out")


@dataclass(frozen=True)
class RunConfig:
    runtimes: Path | None = None
    texts: Path | None = None
    embeddings: Path | None = None
    out: Path = Path("out")
    text_suffix: str = ".param"
    dim: int = 768
    max_tokens: int = 2048
    ngram_orders: tuple[int, ...] = (1, 2)
    hash_seed: int = 0
    mode: str = "multilabel"
    schedule: str | None = None
    batch_size: int = 1
    selector: str = "nn-sbs"
    kmeans_features: str = "concat"
    k: int = 12
    standardize: bool = False
    filter_threshold: float = 0.5
    abs_threshold: float = 10.0
    rel_factor: float = 2.0
    cutoff: float = 3600.0
    penalty_factor: float = 10.0
    seed: int = 0
    n_folds: int = 10
    synth_instances: int = 500
    synth_algorithms: int = 12
    synth_patterns: int = 4
    synth_noise: float = 0.1
    synth_timeout_rate: float = 0.02
    synth_pattern_weights: tuple[float, ...] | None = None

    def __post_init__(self):
        checks = [
            (self.mode in MODES, f"mode must be one of {MODES}"),
            (self.selector in SELECTOR_KINDS, f"selector must be one of {SELECTOR_KINDS}"),
            (self.kmeans_features in FEATURE_COMPOSITIONS, f"kmeans_features must be one of {FEATURE_COMPOSITIONS}"),
            (self.dim >= 8, "dim must be >= 8"),
            (self.max_tokens >= 1, "max_tokens must be >= 1"),
            (all(n >= 1 for n in self.ngram_orders) and self.ngram_orders, "ngram_orders must be positive integers"),
            (self.batch_size >= 1, "batch_size must be >= 1"),
            (self.k >= 1, "k must be >= 1"),
            (0 < self.filter_threshold < 1, "filter_threshold must lie in (0, 1)"),
            (self.abs_threshold > 0, "abs_threshold must be positive"),
            (self.rel_factor > 1, "rel_factor must exceed 1"),
            (self.cutoff > 0, "cutoff must be positive"),
            (self.penalty_factor > 0, "penalty_factor must be positive"),
            (self.n_folds >= 2, "n_folds must be >= 2"),
            (self.synth_instances >= 1, "synth_instances must be >= 1"),
            (self.synth_algorithms >= 1, "synth_algorithms must be >= 1"),
            (1 <= self.synth_patterns <= self.synth_algorithms, "synth_patterns must be in [1, synth_algorithms]"),
            (self.synth_noise >= 0, "synth_noise must be >= 0"),
            (0 <= self.synth_timeout_rate < 1, "synth_timeout_rate must be in [0, 1)"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        if self.schedule is not None:
            try:
                TrainSchedule.parse(self.schedule)
            except ValueError as exc:
                raise ConfigError(f"schedule: {exc}") from None

    @classmethod
    def load(cls, path: str | Path | None = None, overrides: Mapping[str, str] | None = None) -> "RunConfig":
        raw: dict[str, str] = {}
        base = Path.cwd()
        if path is not None:
            path = Path(path)
            if not path.is_file():
                raise ConfigError(f"config file {path} does not exist")
            parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"), inline_comment_prefixes=("#",))
            parser.optionxform = str
            try:
                parser.read_string("[run]\n" + path.read_text(encoding="utf-8"), source=str(path))
            except configparser.Error as exc:
                raise ConfigError(f"{path}: {exc}") from None
            raw.update(parser["run"])
            base = path.resolve().parent
        raw.update(overrides or {})
        return cls.from_mapping(raw, base)

    @classmethod
    def from_mapping(cls, raw: Mapping[str, str], base: Path = Path(".")) -> "RunConfig":
        fields = {f.name: f for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, text in raw.items():
            key = key.strip()
            if key not in fields:
                raise ConfigError(f"unknown config key {key!r}")
            text = str(text).strip()
            try:
                kwargs[key] = _convert(key, text, base)
            except ValueError as exc:
                raise ConfigError(f"{key}: {exc}") from None
        return cls(**kwargs)

    def encoder(self) -> EncoderConfig:
        return EncoderConfig(self.dim, self.max_tokens, self.ngram_orders, self.hash_seed)

    def train_schedule(self) -> TrainSchedule:
        if self.schedule is None:
            sched = TrainSchedule.default(self.mode, self.seed)
            return dataclasses.replace(sched, batch_size=self.batch_size)
        return TrainSchedule.parse(self.schedule, self.seed, self.batch_size)

    def experiment(self) -> ExperimentConfig:
        return ExperimentConfig(
            mode=self.mode,
            selector=self.selector,
            kmeans_features=self.kmeans_features,
            k=self.k,
            standardize=self.standardize,
            filter_threshold=self.filter_threshold,
            abs_threshold=self.abs_threshold,
            rel_factor=self.rel_factor,
            n_folds=self.n_folds,
            seed=self.seed,
            encoder=self.encoder(),
            schedule=self.train_schedule(),
        )

    def require(self, *keys: str) -> None:
        for key in keys:
            value = getattr(self, key)
            if value is None:
                raise ConfigError(f"config key {key!r} is required for this command")
            if key in ("runtimes", "embeddings") and not Path(value).is_file():
                raise ConfigError(f"{key}: file {value} does not exist")
            if key == "texts" and not Path(value).is_dir():
                raise ConfigError(f"texts: directory {value} does not exist")


def _convert(key: str, text: str, base: Path):
    if key in PATH_KEYS:
        p = Path(text).expanduser()
        return p if p.is_absolute() else base / p
    if key in ("text_suffix", "mode", "selector", "kmeans_features"):
        return text
    if key == "schedule":
        return text or None
    if key == "ngram_orders":
        return _ints(text)
    if key == "synth_pattern_weights":
        return _floats(text) or None
    if key == "standardize":
        return _bool(text)
    if key in (
        "dim",
        "max_tokens",
        "hash_seed",
        "batch_size",
        "k",
        "seed",
        "n_folds",
        "synth_instances",
        "synth_algorithms",
        "synth_patterns",
    ):
        return int(text, 0)
    return float(text)


# Desk-scale training presets: the 3/3/4 phase proportions and the final
# tenfold rate drop over 30 epochs; the multilabel rate is scaled by the
# portfolio size because its loss averages over labels.
DESK_SCHEDULES = {
    "multilabel": "9:60:2,9:60:1,12:6:1",
    MULTICLASS: "9:5:1,9:5:1,12:0.5:1",
}
