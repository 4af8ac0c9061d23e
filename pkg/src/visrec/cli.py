"""Batch command-line interface: one subcommand per pipeline stage.

Exit code 0 on success; every error class maps to its own nonzero code
(see errors.py).
"""

from __future__ import annotations

import sys
from pathlib import Path

import click

from .errors import ToolkitError
from .pipeline import FAMILIES, PipelineConfig, run_stage


def _load_config(ctx) -> PipelineConfig:
    params = ctx.obj
    if params["config"] is None:
        raise click.UsageError("--config is required for pipeline stages")
    cfg = PipelineConfig.from_json(params["config"])
    if params["seed"] is not None:
        cfg.seed = params["seed"]
    return cfg


def _run(ctx, stage: str, **kwargs):
    params = ctx.obj
    cfg = _load_config(ctx)
    try:
        outputs = run_stage(
            stage, cfg, force=params["force"], jobs=params["jobs"], **kwargs
        )
    except ToolkitError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(exc.exit_code)
    if outputs:
        click.echo(f"{stage}: wrote {len(outputs)} artifact(s) under {cfg.cache_dir}")
    else:
        click.echo(f"{stage}: up to date")


@click.group()
@click.option("--config", type=click.Path(exists=True, path_type=Path), default=None,
              help="Pipeline config JSON.")
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--jobs", type=int, default=1, show_default=True,
              help="Worker processes for per-movie stages.")
@click.option("--force", is_flag=True, help="Rebuild even if cached artifacts exist.")
@click.pass_context
def main(ctx, config, seed, jobs, force):
    """Visual-feature movie recommendation pipeline."""
    ctx.obj = {"config": config, "seed": seed, "jobs": jobs, "force": force}


@main.command()
@click.pass_context
def segment(ctx):
    """Detect shots and dump one keyframe per shot."""
    _run(ctx, "segment")


@main.command()
@click.pass_context
def extract(ctx):
    """Compute the five visual descriptors for every keyframe."""
    _run(ctx, "extract")


_AGG_CHOICES = click.Choice(["intersection", "average", "median", "union"])


@main.command()
@click.option("--agg-mpeg7", type=_AGG_CHOICES, default=None,
              help="Aggregation for the MPEG-7 family (default from config).")
@click.option("--agg-dnn", type=_AGG_CHOICES, default=None,
              help="Aggregation for the DNN family (default from config).")
@click.pass_context
def aggregate(ctx, agg_mpeg7, agg_dnn):
    """Collapse keyframe vectors into movie-level vectors."""
    cfg_overrides = {}
    if agg_mpeg7:
        cfg_overrides["agg_mpeg7"] = agg_mpeg7
    if agg_dnn:
        cfg_overrides["agg_dnn"] = agg_dnn
    params = ctx.obj
    cfg = _load_config(ctx)
    for key, value in cfg_overrides.items():
        setattr(cfg, key, value)
    try:
        outputs = run_stage("aggregate", cfg, force=params["force"], jobs=params["jobs"])
    except ToolkitError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(exc.exit_code)
    click.echo("aggregate: " + (f"wrote {len(outputs)} artifact(s)" if outputs else "up to date"))


@main.command()
@click.pass_context
def fuse(ctx):
    """Fit CCA on the two visual families and emit fused vectors."""
    _run(ctx, "fuse")


@main.command()
@click.pass_context
def textfeat(ctx):
    """Build the genre and tag-LSA baseline features."""
    _run(ctx, "textfeat")


_FAMILY_CHOICE = click.Choice(sorted(FAMILIES))


def _hyper_options(fn):
    fn = click.option("--alpha", type=float, default=None)(fn)
    fn = click.option("--gamma", type=float, default=None)(fn)
    fn = click.option("--lr", "learning_rate", type=float, default=None)(fn)
    fn = click.option("--epochs", type=int, default=None)(fn)
    return fn


def _apply_hypers(cfg, alpha, gamma, learning_rate, epochs):
    for name, value in (
        ("alpha", alpha), ("gamma", gamma),
        ("learning_rate", learning_rate), ("epochs", epochs),
    ):
        if value is not None:
            setattr(cfg, name, value)


@main.command()
@click.option("--features", type=_FAMILY_CHOICE, default="mpeg7", show_default=True)
@_hyper_options
@click.pass_context
def train(ctx, features, alpha, gamma, learning_rate, epochs):
    """Train a similarity model on the full rating set."""
    params = ctx.obj
    cfg = _load_config(ctx)
    _apply_hypers(cfg, alpha, gamma, learning_rate, epochs)
    try:
        outputs = run_stage("train", cfg, family=features,
                            force=params["force"], jobs=params["jobs"])
    except ToolkitError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(exc.exit_code)
    click.echo("train: " + (f"wrote {len(outputs)} artifact(s)" if outputs else "up to date"))


@main.command()
@click.option("--features", type=_FAMILY_CHOICE, default=None,
              help="Single family; default: every family from the config.")
@_hyper_options
@click.pass_context
def evaluate(ctx, features, alpha, gamma, learning_rate, epochs):
    """Run the 5-fold top-N evaluation protocol."""
    params = ctx.obj
    cfg = _load_config(ctx)
    _apply_hypers(cfg, alpha, gamma, learning_rate, epochs)
    families = [features] if features else list(cfg.families)
    for family in families:
        try:
            run_stage("evaluate", cfg, family=family,
                      force=params["force"], jobs=params["jobs"])
        except ToolkitError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(exc.exit_code)
    click.echo("evaluate: done")


@main.command()
@click.option("--features", type=_FAMILY_CHOICE, default="mpeg7", show_default=True)
@click.option("--user", type=int, required=True)
@click.option("-n", "--top-n", type=int, default=10, show_default=True)
@click.pass_context
def recommend(ctx, features, user, top_n):
    """Print the trained model's top-N items for one user."""
    _run(ctx, "recommend", family=features, user=user, top_n=top_n)


@main.command("run-all")
@click.pass_context
def run_all(ctx):
    """Run segment, extract, aggregate, fuse, textfeat and evaluate in order."""
    params = ctx.obj
    cfg = _load_config(ctx)
    stages = ["segment", "extract", "aggregate", "fuse", "textfeat"]
    try:
        for stage in stages:
            run_stage(stage, cfg, force=params["force"], jobs=params["jobs"])
            click.echo(f"{stage}: ok")
        for family in cfg.families:
            run_stage("evaluate", cfg, family=family,
                      force=params["force"], jobs=params["jobs"])
    except ToolkitError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(exc.exit_code)
    click.echo("run-all: done")


@main.command("make-mini-dataset")
@click.option("--out", type=click.Path(path_type=Path), required=True)
@click.option("--seed", type=int, default=7, show_default=True)
def make_mini_dataset(out, seed):
    """Generate the bundled synthetic mini-corpus."""
    from .minidata import generate

    config_path = generate(out, seed=seed)
    click.echo(f"mini dataset written; config at {config_path}")


if __name__ == "__main__":
    main()
