"""``portsel`` command line."""

from __future__ import annotations

import json
import logging
import sys
import time
from pathlib import Path

import click

from . import head as nh
from .config import ConfigError, RunConfig
from .evaluation import (
    ExperimentResult,
    format_timing_table,
    run_experiment,
    timing_table,
    write_traces,
)
from .head import ModelFormatError
from .kmeans import KMeansFormatError, kmeans_select, load_kmeans, save_kmeans
from .portfolio import DataError, competitiveness_labels, ingest_runtimes, portfolio_stats, write_stats
from .selectors import KMEANS, SelectionContext, choose, concat_features, export_features
from .synthetic import gen_synthetic
from .text_encoder import encode_text, import_embeddings, read_text_dir

log = logging.getLogger("portsel")

USER_ERRORS = (ConfigError, DataError, ModelFormatError, KMeansFormatError, ValueError, OSError)


def _load_config(ctx) -> RunConfig:
    obj = ctx.obj
    overrides = dict(obj["set"])
    if obj["seed"] is not None:
        overrides["seed"] = str(obj["seed"])
    if obj["out"] is not None:
        overrides["out"] = str(Path(obj["out"]).resolve())
    return RunConfig.load(obj["config"], overrides)


def _out_dir(cfg: RunConfig) -> Path:
    cfg.out.mkdir(parents=True, exist_ok=True)
    return cfg.out


def _matrix(cfg: RunConfig):
    cfg.require("runtimes")
    return ingest_runtimes(cfg.runtimes, cfg.cutoff, cfg.penalty_factor)


def _features_source(cfg: RunConfig):
    if cfg.embeddings is not None:
        cfg.require("embeddings")
        return None, import_embeddings(cfg.embeddings)
    cfg.require("texts")
    return read_text_dir(cfg.texts, cfg.text_suffix), None


def _run(cfg: RunConfig) -> ExperimentResult:
    matrix = _matrix(cfg)
    texts, embeddings = _features_source(cfg)
    return run_experiment(matrix, texts, cfg.experiment(), embeddings=embeddings)


def _write_fold_artifacts(result: ExperimentResult, out: Path) -> list[Path]:
    written = []
    traces = []
    for f, art in enumerate(result.folds):
        path = out / f"model_fold{f}.pslh"
        nh.save_head(art.head, path)
        written.append(path)
        art.context.save(out / f"context_fold{f}.csv")
        if art.kmeans is not None:
            save_kmeans(art.kmeans, out / f"kmeans_fold{f}.txt")
        traces.append(art.trace)
    write_traces(traces, out / "trace.csv")
    return written


class Group(click.Group):
    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except USER_ERRORS as exc:
            raise click.ClickException(str(exc)) from exc


@click.group(cls=Group)
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None, help="Run config (key = value).")
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--out", type=click.Path(file_okay=False), default=None, help="Override the output directory.")
@click.option("--set", "sets", multiple=True, metavar="KEY=VALUE", help="Override any config key.")
@click.option("-v", "--verbose", count=True)
@click.pass_context
def cli(ctx, config_path, seed, out, sets, verbose):
    """Select (model, solver) pairs for constraint problem instances from their text."""
    logging.basicConfig(level=logging.WARNING - 10 * min(verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    pairs = []
    for item in sets:
        key, sep, value = item.partition("=")
        if not sep:
            raise click.BadParameter(f"expected KEY=VALUE, got {item!r}", param_hint="--set")
        pairs.append((key.strip(), value.strip()))
    ctx.obj = {"config": config_path, "seed": seed, "out": out, "set": pairs}


@cli.command()
@click.pass_context
def stats(ctx):
    """Per-algorithm PAR10, VBS participation and competitiveness."""
    cfg = _load_config(ctx)
    matrix = _matrix(cfg)
    labels = competitiveness_labels(matrix, cfg.abs_threshold, cfg.rel_factor)
    rows = portfolio_stats(matrix, labels, matrix.instances)
    out = _out_dir(cfg)
    write_stats(rows, out / "stats.csv", out / "stats.json")
    click.echo(f"{'algorithm':20s} {'par10':>12s} {'win':>7s} {'comp':>7s}")
    for s in rows:
        click.echo(f"{str(s.algorithm):20s} {s.par10:12.3f} {s.win_fraction:7.3f} {s.competitive_fraction:7.3f}")
    click.echo(f"wrote {out / 'stats.csv'} and {out / 'stats.json'}")


@cli.command()
@click.pass_context
def train(ctx):
    """Train one head per cross-validation fold."""
    cfg = _load_config(ctx)
    t0 = time.perf_counter()
    result = _run(cfg)
    written = _write_fold_artifacts(result, _out_dir(cfg))
    click.echo(f"trained {len(written)} fold models in {time.perf_counter() - t0:.3f} s")


@cli.command()
@click.pass_context
def evaluate(ctx):
    """Full cross-validated experiment: models, traces and the report."""
    cfg = _load_config(ctx)
    t0 = time.perf_counter()
    result = _run(cfg)
    out = _out_dir(cfg)
    _write_fold_artifacts(result, out)
    result.report.write_json(out / "report.json")
    result.report.write_csv(out / "report.csv")
    table = timing_table(result.prediction_seconds)
    (out / "timing.json").write_text(
        json.dumps(
            {
                "feature_seconds": table,
                "per_fold": {str(f): m["test"]["mean_prediction_seconds"] for f, m in enumerate(result.report.folds)},
            },
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )
    agg = result.report.aggregate()
    click.echo(f"{'split':6s} {'par10':>12s} {'vbs':>12s} {'sbs':>12s} {'norm':>8s} {'acc':>7s} {'f1':>7s}")
    for split in ("train", "val", "test"):
        m = agg[split]
        click.echo(
            f"{split:6s} {m['par10']['mean']:12.3f} {m['vbs_par10']['mean']:12.3f} {m['sbs_par10']['mean']:12.3f} "
            f"{m['normalized_par10']['mean']:8.4f} {m['accuracy']['mean']:7.4f} {m['macro_f1']['mean']:7.4f}"
        )
    click.echo(format_timing_table(table))
    click.echo(f"evaluated {len(result.folds)} folds in {time.perf_counter() - t0:.3f} s; report in {out}")


def _portfolio_names(cfg: RunConfig, context: SelectionContext | None):
    if context is not None:
        return context.algorithms
    if cfg.runtimes is not None:
        return _matrix(cfg).algorithms
    raise ConfigError("algorithm names unknown: pass --context or set 'runtimes' in the config")


@cli.command()
@click.option("--model", "model_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--context", "context_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Training statistics (context_foldN.csv) for nn-sbs/nn-ws.")
@click.option("--kmeans", "kmeans_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="k-means model for the kmeans selector.")
@click.argument("instance", type=click.Path(exists=True, dir_okay=False))
@click.pass_context
def select(ctx, model_path, context_path, kmeans_path, instance):
    """Choose an algorithm for one instance text file."""
    cfg = _load_config(ctx)
    head = nh.load_head(model_path)
    enc_cfg = cfg.encoder()
    if head.dim != enc_cfg.dim:
        raise ConfigError(f"model {model_path} expects dimension {head.dim} but the encoder produces {enc_cfg.dim}")
    context = SelectionContext.load(context_path) if context_path else None
    names = _portfolio_names(cfg, context)
    if len(names) != head.n_algorithms:
        raise ConfigError(f"model has {head.n_algorithms} outputs but the portfolio has {len(names)} algorithms")
    fv = encode_text(Path(instance).read_text(encoding="utf-8"), enc_cfg)
    probs = nh.predict(head, fv)
    if cfg.selector == KMEANS:
        if kmeans_path is None:
            raise ConfigError("selector 'kmeans' needs --kmeans")
        km = load_kmeans(kmeans_path)
        if cfg.kmeans_features == "encoder":
            feat = fv.values
        elif cfg.kmeans_features == "probs":
            feat = probs
        else:
            feat = concat_features(fv, probs).values
        chosen = kmeans_select(km, feat)
    else:
        chosen = names[choose(cfg.selector, probs, context, cfg.filter_threshold)]
    click.echo(f"algorithm {chosen}")
    click.echo("probs " + " ".join(format(float(p), ".6f") for p in probs))


@cli.command("export-features")
@click.option("--model", "model_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Head whose probabilities are appended (needed for concat/probs).")
@click.pass_context
def export_features_cmd(ctx, model_path):
    """Write per-instance feature vectors for an external selector."""
    cfg = _load_config(ctx)
    texts, embeddings = _features_source(cfg)
    enc_cfg = cfg.encoder()
    if texts is not None:
        base = {iid: encode_text(t, enc_cfg) for iid, t in texts.items()}
    else:
        base = dict(embeddings)
    comp = cfg.kmeans_features
    if comp == "encoder":
        feats = {iid: v.values for iid, v in base.items()}
    else:
        if model_path is None:
            raise ConfigError(f"feature composition {comp!r} needs --model")
        head = nh.load_head(model_path)
        feats = {}
        for iid, v in base.items():
            p = nh.predict(head, v)
            feats[iid] = p if comp == "probs" else concat_features(v, p).values
    out = _out_dir(cfg) / "features.csv"
    export_features(feats, out)
    width = len(next(iter(feats.values()))) if feats else 0
    click.echo(f"wrote {len(feats)} feature vectors of length {width} to {out}")


@cli.command("gen-synth")
@click.pass_context
def gen_synth(ctx):
    """Generate a synthetic scenario: runtimes.csv plus instances/*.param."""
    cfg = _load_config(ctx)
    ds = gen_synthetic(
        cfg.seed,
        cfg.synth_instances,
        cfg.synth_algorithms,
        cfg.synth_patterns,
        noise=cfg.synth_noise,
        timeout_rate=cfg.synth_timeout_rate,
        pattern_weights=cfg.synth_pattern_weights,
        cutoff=cfg.cutoff,
        penalty_factor=cfg.penalty_factor,
    )
    out = ds.write(_out_dir(cfg))
    planted = ", ".join(str(ds.matrix.algorithms[j]) for j in ds.planted)
    click.echo(f"wrote {len(ds.texts)} instances to {out} (planted: {planted})")


def main(argv=None):
    return cli.main(args=argv, prog_name="portsel")


if __name__ == "__main__":
    sys.exit(main())
