"""Command-line interface: run, list-scenarios, validate."""

import os
import sys
from concurrent.futures import ProcessPoolExecutor

import click

from . import config as cfgmod
from . import scenarios
from .runner import run_scenario


@click.group()
def main():
    """Discrete-event simulator of data-center congestion control."""


def _load_scenario(scenario, variant, seed):
    if os.path.exists(scenario):
        cfg = cfgmod.load(scenario)
        if variant:
            cfg.variant = variant
        if seed is not None:
            cfg.seed = seed
        return cfg
    if scenario in scenarios.builtin_names():
        return scenarios.build(scenario, variant or "baseline-ecn",
                               seed if seed is not None else 1)
    raise cfgmod.ConfigError(
        [f"scenario: '{scenario}' is neither a file nor a built-in "
         f"(try: {', '.join(scenarios.builtin_names())})"])


def _run_one(args):
    scenario, variant, seed, out_dir, duration = args
    cfg = _load_scenario(scenario, variant, seed)
    if duration is not None:
        cfg.duration_s = duration
        cfg.periods_s = [p for p in cfg.periods_s if p <= duration]
        if not cfg.periods_s or cfg.periods_s[-1] < duration:
            cfg.periods_s.append(duration)
        cfg.flows = [f for f in cfg.flows if f.start_s < duration]
        for f in cfg.flows:
            if f.stop_s is None or f.stop_s > duration:
                f.stop_s = duration
    run_scenario(cfg, out_dir)
    return out_dir


@main.command()
@click.option("--scenario", required=True,
              help="Config file path or a built-in scenario name.")
@click.option("--variant",
              type=click.Choice(cfgmod.VARIANTS), default=None,
              help="Control variant (overrides the config file).")
@click.option("--seed", type=int, default=None)
@click.option("--out-dir", envvar="DCCSIM_OUT_DIR", default="out",
              show_default=True,
              help="Output directory (env: DCCSIM_OUT_DIR).")
@click.option("--duration-s", type=float, default=None,
              help="Override the configured duration.")
@click.option("--jobs", type=int, default=1, show_default=True,
              help="Parallel workers for multi-point scenarios.")
def run(scenario, variant, seed, out_dir, duration_s, jobs):
    """Run a scenario and write CSV outputs."""
    try:
        if scenarios.is_meta(scenario):
            points = scenarios.meta_points(scenario)
            tasks = [(p, variant or "sdngcc", seed, os.path.join(out_dir, p),
                      duration_s) for p in points]
            if jobs > 1:
                with ProcessPoolExecutor(max_workers=jobs) as pool:
                    for done in pool.map(_run_one, tasks):
                        click.echo(f"wrote {done}")
            else:
                for t in tasks:
                    click.echo(f"wrote {_run_one(t)}")
        else:
            _run_one((scenario, variant, seed, out_dir, duration_s))
            click.echo(f"wrote {out_dir}")
    except cfgmod.ConfigError as exc:
        click.echo(str(exc), err=True)
        sys.exit(2)
    except OSError as exc:
        click.echo(f"i/o error: {exc}", err=True)
        sys.exit(3)


@main.command("list-scenarios")
def list_scenarios():
    """List the built-in scenario names."""
    for name in scenarios.builtin_names():
        click.echo(name)


@main.command()
@click.option("--scenario", required=True, help="Config file to validate.")
def validate(scenario):
    """Validate a scenario config file; nonzero exit on problems."""
    try:
        cfg = cfgmod.load(scenario)
        cfg.validate()
    except FileNotFoundError:
        click.echo(f"no such file: {scenario}", err=True)
        sys.exit(3)
    except cfgmod.ConfigError as exc:
        for p in exc.problems:
            click.echo(p, err=True)
        sys.exit(2)
    click.echo("ok")


if __name__ == "__main__":
    main()
