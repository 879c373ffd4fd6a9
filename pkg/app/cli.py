"""
Command Line Interface

Entry point for the benchmark harness:

    python -m app.cli run --method hybrid5 --m 2 --sigma 1 --out run.csv
    python -m app.cli sweep --method hybrid5 --sigmas 0.1,1,5 --out sweep.csv
    python -m app.cli nodes --h 0.05 --seed 1 --out nodes.csv
    python -m app.cli convergence --hs 0.1,0.05,0.025 --layout grid
    python -m app.cli timing --degrees 2,4,6 --repeats 25
    python -m app.cli serve

Settings come from model defaults, then an optional key-value file
(--config), then explicit flags.
"""

import logging
import os
import sys
from typing import Any, Callable, List, Optional

import click
from dotenv import load_dotenv
from pydantic import ValidationError

from app.models.config import Method, NodeLayout, load_experiment_config
from app.services.benchmark_service import (
    build_nodes,
    run_convergence_study,
    run_experiment,
    run_method_sweep,
    run_timing_table,
    write_results_csv,
)
from app.services.errors import MeshlessError
from app.services.node_service import save_nodes_csv
from app.services.solver_service import export_matrix_market

logger = logging.getLogger(__name__)

METHOD_CHOICE = click.Choice([method.value for method in Method])
LAYOUT_CHOICE = click.Choice([layout.value for layout in NodeLayout])


def configure_logging() -> None:
    load_dotenv()
    level = os.getenv("MESHLESS_LOG_LEVEL", "INFO").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )


def _split(value: Optional[str], cast: Callable[[str], Any]) -> Optional[List[Any]]:
    if value is None:
        return None
    try:
        return [cast(item.strip()) for item in value.split(",") if item.strip()]
    except ValueError as e:
        raise click.BadParameter(f"invalid list '{value}': {e}")


def _fatal(error: Exception) -> None:
    message = str(error).replace("\n", "; ")
    logger.error(f"❌ {message}")
    click.echo(f"Error: {message}", err=True)
    sys.exit(1)


def config_options(command: Callable) -> Callable:
    """Options shared by every experiment command."""
    options = [
        click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
                     help="Key-value settings file (flags override it)."),
        click.option("--h", type=float, help="Fill distance."),
        click.option("--seed", type=int, help="Node generation seed."),
        click.option("--m", type=int, help="Monomial augmentation degree."),
        click.option("--layout", type=LAYOUT_CHOICE, help="Node layout."),
        click.option("--repeats", type=int, help="Timed runs per phase."),
        click.option("--tol", type=float, help="BiCGSTAB relative tolerance."),
        click.option("--max-iter", type=int, help="BiCGSTAB iteration cap (default 10 N)."),
        click.option("--fill-factor", type=float, help="ILUT fill factor."),
        click.option("--drop-tol", type=float, help="ILUT drop tolerance."),
        click.option("--workers", type=int, help="Threads for weight computation."),
    ]
    for option in reversed(options):
        command = option(command)
    return command


@click.group()
def cli() -> None:
    """Meshless RBF-FD / hybrid FD benchmark harness."""
    configure_logging()


@cli.command()
@config_options
@click.option("--method", type=METHOD_CHOICE, help="Operator discretization.")
@click.option("--sigma", type=float, help="Virtual stencil scale.")
@click.option("--out", type=click.Path(dir_okay=False), help="Results CSV.")
@click.option("--export-matrix", type=click.Path(dir_okay=False), help="Matrix Market file.")
def run(config_path, out, export_matrix, **flags):
    """Run a single configuration."""
    try:
        cfg = load_experiment_config(config_path, **flags)
        result = run_experiment(cfg)
        row = result.to_row()
        if out:
            write_results_csv([row], out, {"layout": cfg.layout.value})
        if export_matrix:
            export_matrix_market(result.system, export_matrix)
    except (MeshlessError, ValidationError) as e:
        _fatal(e)

    click.echo(
        f"{row.method} m={row.m} n={row.n} sigma={row.sigma:g} h={row.h:g}: "
        f"mean_rel={row.mean_rel:.6e} max_rel={row.max_rel:.6e} "
        f"iterations={row.iterations} converged={row.converged} "
        f"phase1={row.phase1_ms:.3f}ms phase2={row.phase2_ms:.3f}ms"
    )


@cli.command()
@config_options
@click.option("--method", type=METHOD_CHOICE, help="Single method to sweep.")
@click.option("--methods", help="Comma-separated methods (overrides --method).")
@click.option("--degrees", help="Comma-separated augmentation degrees (overrides --m).")
@click.option("--sigmas", help="Comma-separated sigma values (default: 40 log-spaced in [1e-2, 1e1]).")
@click.option("--out", type=click.Path(dir_okay=False), default="sweep.csv", show_default=True)
def sweep(config_path, methods, degrees, sigmas, out, **flags):
    """Sigma sweep over one or more methods and degrees."""
    method_list = _split(methods, str)
    degree_list = _split(degrees, int)
    sigma_list = _split(sigmas, float)
    try:
        cfg = load_experiment_config(config_path, **flags)
        selected = [Method(name) for name in method_list] if method_list else [cfg.method]
        rows = run_method_sweep(cfg, selected, degree_list or [cfg.m], sigma_list)
        write_results_csv(rows, out, {"layout": cfg.layout.value})
    except (MeshlessError, ValueError) as e:
        _fatal(e)

    failed = sum(1 for row in rows if not row.converged)
    click.echo(f"Wrote {len(rows)} rows to {out} ({failed} not converged)")


@cli.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--h", type=float, help="Fill distance.")
@click.option("--seed", type=int, help="Node generation seed.")
@click.option("--layout", type=LAYOUT_CHOICE, help="Node layout.")
@click.option("--out", type=click.Path(dir_okay=False), default="nodes.csv", show_default=True)
def nodes(config_path, out, **flags):
    """Generate a node set and write it as x,y,boundary CSV."""
    try:
        cfg = load_experiment_config(config_path, **flags)
        node_set = build_nodes(cfg)
        save_nodes_csv(node_set, out)
    except (MeshlessError, ValidationError) as e:
        _fatal(e)
    click.echo(
        f"Wrote {node_set.size} nodes ({len(node_set.interior_indices)} interior) to {out}"
    )


@cli.command()
@config_options
@click.option("--method", type=METHOD_CHOICE, help="Operator discretization.")
@click.option("--sigma", type=float, help="Virtual stencil scale.")
@click.option("--hs", default="0.1,0.05,0.025", show_default=True,
              help="Comma-separated refinement sequence.")
@click.option("--out", type=click.Path(dir_okay=False), help="Results CSV.")
def convergence(config_path, hs, out, **flags):
    """Observed convergence order over a refinement sequence."""
    spacings = _split(hs, float)
    if flags["repeats"] is None:
        flags["repeats"] = 1
    try:
        cfg = load_experiment_config(config_path, **flags)
        rows = run_convergence_study(cfg, spacings)
        if out:
            write_results_csv(rows, out, {"layout": cfg.layout.value})
    except (MeshlessError, ValidationError) as e:
        _fatal(e)

    for row in rows:
        click.echo(
            f"h={row.h:.5f} nodes={row.nodes} max_rel={row.max_rel:.3e} "
            f"mean_rel={row.mean_rel:.3e} order_max={row.order_max:.2f} "
            f"order_mean={row.order_mean:.2f}"
        )


@cli.command()
@config_options
@click.option("--degrees", default="2,4,6", show_default=True)
@click.option("--methods", default="rbf_fd,hybrid5,hybrid9", show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), help="Results CSV.")
def timing(config_path, degrees, methods, out, **flags):
    """Median phase timings at sigma = 1."""
    degree_list = _split(degrees, int)
    try:
        selected = [Method(name) for name in _split(methods, str)]
        cfg = load_experiment_config(config_path, **flags)
        rows = run_timing_table(cfg, degree_list, selected)
        if out:
            write_results_csv(rows, out, {"layout": cfg.layout.value})
    except (MeshlessError, ValueError) as e:
        _fatal(e)

    click.echo(f"{'method':<12}{'m':>3}{'n':>5}{'phase1_ms':>14}{'phase2_ms':>14}")
    for row in rows:
        click.echo(f"{row.method:<12}{row.m:>3}{row.n:>5}{row.phase1_ms:>14.3f}{row.phase2_ms:>14.3f}")


@cli.command()
@click.option("--host", default=None, help="Bind address (MESHLESS_API_HOST).")
@click.option("--port", type=int, default=None, help="Port (MESHLESS_API_PORT).")
def serve(host, port):
    """Start the HTTP service."""
    import uvicorn

    uvicorn.run(
        "app.main:app",
        host=host or os.getenv("MESHLESS_API_HOST", "0.0.0.0"),
        port=port or int(os.getenv("MESHLESS_API_PORT", "8000")),
    )


if __name__ == "__main__":
    cli()
