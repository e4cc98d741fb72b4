"""Command-line entry points: retrieve | refine | plan | run | robustness | serve."""

from __future__ import annotations

import click

from .pipeline import (
    PipelineConfig,
    cmd_plan,
    cmd_refine,
    cmd_retrieve,
    cmd_robustness,
    cmd_run,
    write_manifest,
)


def _load(config, out, seed, oracle):
    overrides = {}
    if out is not None:
        overrides["out"] = out
    if seed is not None:
        overrides["seed"] = seed
    if oracle is not None:
        overrides["oracle"] = oracle
    return PipelineConfig.load(config, overrides)


def common_options(fn):
    fn = click.option("--config", required=True, type=click.Path(exists=True))(fn)
    fn = click.option("--out", default=None, type=click.Path())(fn)
    fn = click.option("--seed", default=None, type=int)(fn)
    fn = click.option("--oracle", default=None, type=click.Choice(["synthetic", "remote", "human"]))(fn)
    return fn


@click.group()
def main():
    """Desk-scale camera-tour planner."""


@main.command()
@common_options
def retrieve(config, out, seed, oracle):
    cfg = _load(config, out, seed, oracle)
    waypoints = cmd_retrieve(cfg)
    write_manifest(cfg, ["retrieve"])
    click.echo(f"retrieved {len(waypoints.picks)} waypoints -> {cfg.out_dir}")


@main.command()
@common_options
def refine(config, out, seed, oracle):
    cfg = _load(config, out, seed, oracle)
    refined = cmd_refine(cfg)
    write_manifest(cfg, ["refine"])
    click.echo(f"refined {len(refined)} waypoints -> {cfg.out_dir}")


@main.command()
@common_options
def plan(config, out, seed, oracle):
    cfg = _load(config, out, seed, oracle)
    _, corridor, _, _, controls = cmd_plan(cfg)
    write_manifest(cfg, ["plan"])
    click.echo(f"planned {len(controls)} control samples through {len(corridor)} corridor boxes")


@main.command()
@common_options
def run(config, out, seed, oracle):
    cfg = _load(config, out, seed, oracle)
    waypoints, refined, _ = cmd_run(cfg)
    click.echo(f"run complete: {len(refined)} waypoints -> {cfg.out_dir}")


@main.command()
@common_options
def robustness(config, out, seed, oracle):
    cfg = _load(config, out, seed, oracle)
    path = cmd_robustness(cfg)
    write_manifest(cfg, ["robustness"])
    click.echo(f"robustness CSV -> {path}")


@main.command()
@common_options
@click.option("--port", default=8000, type=int)
@click.option("--host", default="127.0.0.1")
@click.option("--static-dir", default=None, type=click.Path())
def serve(config, out, seed, oracle, port, host, static_dir):
    import uvicorn

    from .service import create_app

    cfg = _load(config, out, seed, oracle)
    app = create_app(cfg, static_dir=static_dir)
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
