"""Command line interface.

Exit codes: 0 success, 2 configuration error, 3 solver non-convergence,
4 validation or property failure.
"""
import logging
import os
import sys

import click
from threadpoolctl import threadpool_limits

from .config import parse_config
from .errors import ConfigError, NotConverged, PermahomError
from .pipeline import (run_pipeline, stage_cell, stage_compare, stage_darcy, stage_dns,
                       stage_k, stage_verify_unfold)

EXIT_CONFIG, EXIT_SOLVER, EXIT_CHECK = 2, 3, 4
LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


def _setup_logging():
    level = os.environ.get("PERMAHOM_LOG", "error").lower()
    logging.basicConfig(level=LOG_LEVELS.get(level, logging.ERROR),
                        format="%(levelname)s %(name)s: %(message)s")


def _fail(code, msg):
    click.echo(f"error: {msg}", err=True)
    sys.exit(code)


def _run(ctx, fn):
    """Call ``fn`` under the thread limit and map package errors to exit codes."""
    try:
        with threadpool_limits(limits=ctx.obj.get("threads")):
            result = fn()
    except ConfigError as e:
        _fail(EXIT_CONFIG, e)
    except NotConverged as e:
        _fail(EXIT_SOLVER, e)
    except PermahomError as e:
        _fail(EXIT_CHECK, f"{type(e).__name__}: {e}")
    except (FileNotFoundError, IsADirectoryError) as e:
        _fail(EXIT_CONFIG, e)
    checks = getattr(result, "checks", {}) or {}
    failed = [k for k, ok in checks.items() if not ok]
    if failed:
        _fail(EXIT_CHECK, "checks failed: " + ", ".join(failed))
    return result


def _load(ctx, config):
    path = config or ctx.obj.get("config")
    if path is None:
        _fail(EXIT_CONFIG, "--config is required")
    try:
        return parse_config(path)
    except ConfigError as e:
        _fail(EXIT_CONFIG, e)
    except OSError as e:
        _fail(EXIT_CONFIG, e)


def _out(ctx, out, default):
    return out or ctx.obj.get("out") or default


def common(f):
    f = click.option("--config", "config", type=click.Path(dir_okay=False),
                     help="Run configuration file.")(f)
    f = click.option("--out", "out", type=click.Path(), help="Output directory or file.")(f)
    return f


@click.group()
@click.option("--config", type=click.Path(dir_okay=False), help="Run configuration file.")
@click.option("--out", type=click.Path(), help="Output directory.")
@click.option("--threads", type=click.IntRange(min=1), default=None,
              help="Thread cap for BLAS/OpenMP pools.")
@click.option("--override-grid-cap", is_flag=True, help="Allow DNS grids above the cap.")
@click.version_option(package_name="artifact")
@click.pass_context
def main(ctx, config, out, threads, override_grid_cap):
    """Stokes-to-Darcy homogenization toolkit for thin porous media."""
    _setup_logging()
    ctx.ensure_object(dict)
    ctx.obj.update(config=config, out=out, threads=threads, override=override_grid_cap)


@main.command()
@common
@click.pass_context
def cell(ctx, config, out):
    """Solve the two cell problems."""
    cfg = _load(ctx, config)
    _run(ctx, lambda: stage_cell(cfg, _out(ctx, out, "cell")))


@main.command()
@common
@click.option("--cell", "cell_dir", type=click.Path(file_okay=False),
              help="Output of a previous 'cell' run; solved afresh when omitted.")
@click.pass_context
def k(ctx, config, out, cell_dir):
    """Assemble and certify the permeability tensor."""
    cfg = _load(ctx, config)
    dest = _out(ctx, out, "k")

    def go():
        src = cell_dir
        if src is None:
            src = os.path.join(dest, "cell")
            stage_cell(cfg, src)
        r = stage_k(cfg, src, dest)
        click.echo(" ".join(f"{v:.10g}" for row in r.info["K"] for v in row))
        return r
    _run(ctx, go)


@main.command()
@common
@click.option("--k", "k_path", required=True, type=click.Path(dir_okay=False, exists=True),
              help="K.csv written by the 'k' command.")
@click.pass_context
def darcy(ctx, config, out, k_path):
    """Solve the homogenized Darcy problem."""
    cfg = _load(ctx, config)
    _run(ctx, lambda: stage_darcy(cfg, k_path, _out(ctx, out, "darcy")))


@main.command()
@common
@click.pass_context
def dns(ctx, config, out):
    """Direct Stokes simulation of the thin perforated slab."""
    cfg = _load(ctx, config)
    _run(ctx, lambda: stage_dns(cfg, _out(ctx, out, "dns"), ctx.obj["override"]))


@main.command()
@click.option("--dns", "dns_dir", required=True, type=click.Path(file_okay=False, exists=True))
@click.option("--darcy", "darcy_dir", required=True,
              type=click.Path(file_okay=False, exists=True))
@click.option("--out", "out", type=click.Path(dir_okay=False), help="Report CSV path.")
@click.pass_context
def compare(ctx, dns_dir, darcy_dir, out):
    """Compare averaged DNS velocity and pressure with the Darcy solution."""
    _run(ctx, lambda: stage_compare(dns_dir, darcy_dir, _out(ctx, out, "report.csv")))


@main.command("verify-unfold")
@common
@click.option("--trials", type=click.IntRange(min=1), default=None)
@click.pass_context
def verify_unfold(ctx, config, out, trials):
    """Check the unfolding norm identities on random fields."""
    cfg = _load(ctx, config)
    if not cfg.domains:
        _fail(EXIT_CONFIG, "domain.epsilon, domain.a_eps and domain.n_c are required")
    r = _run(ctx, lambda: stage_verify_unfold(cfg, _out(ctx, out, "unfold_report.csv"),
                                              trials))
    click.echo(f"max defect {r.info['max_defect']:.3e}")


@main.command()
@common
@click.pass_context
def pipeline(ctx, config, out):
    """Run the configured stages and write a manifest."""
    cfg = _load(ctx, config)
    m = _run(ctx, lambda: run_pipeline(cfg, _out(ctx, out, "run"), ctx.obj["override"]))
    for s in m.stages:
        click.echo(f"{s['name']}: {s['status']} ({s['seconds']:.1f} s)")


if __name__ == "__main__":
    main()
