import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Union

import click

from app.mesh.svg import write_svg
from app.models.schemas import RunConfig
from app.services.adapt import StudyResult, adaptive_solve, uniform_solve
from app.services.problems import get_problem
from app.utils.exceptions import ConfigError, InputError, TableParseError
from app.utils.helpers import compare_tables, load_run_config, output_dir, rate_summary, write_table

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2


@dataclass
class RunOutcome:
    config: RunConfig
    result: StudyResult
    table_path: Optional[Path] = None
    svg_paths: List[Path] = field(default_factory=list)

    @property
    def summary(self) -> str:
        return rate_summary(self.result.records)


def execute_run(config_path: Union[str, Path], out_dir: Optional[Union[str, Path]] = None,
                progress: bool = False) -> RunOutcome:
    """
    Run the study a config file describes and write its artifacts.

    Artifacts are written even when a level fails, so a partial table is
    kept; the failure is returned in `outcome.result.error`.
    """
    config = load_run_config(config_path)
    problem = get_problem(config.problem)
    settings = config.adaptive_config(problem.default_theta, progress=progress)
    mesh = problem.initial_mesh(*(config.initial_mesh or ()))

    logger.info(
        f"Running {config.stem}: {problem.name}, {config.mode}, theta={settings.theta}, "
        f"ratio={settings.refine_ratio}, max_levels={settings.max_levels}"
    )
    solve = adaptive_solve if config.mode == "adaptive" else uniform_solve
    outcome = RunOutcome(config=config, result=solve(problem, mesh, settings))

    target = output_dir(out_dir)
    if "table" in config.outputs:
        outcome.table_path = write_table(outcome.result.records, target / f"{config.stem}.dat")
    if "svg_meshes" in config.outputs:
        for record, level_mesh in zip(outcome.result.records, outcome.result.meshes):
            outcome.svg_paths.append(write_svg(level_mesh, target / f"{config.stem}_L{record.level}.svg"))
        logger.info(f"Wrote {len(outcome.svg_paths)} meshes to {target}")
    return outcome


@click.group()
def cli():
    """Adaptive least-squares space-time finite element studies."""


@cli.command()
@click.argument("config_path", type=click.Path(dir_okay=False))
@click.option("--output-dir", "out_dir", type=click.Path(file_okay=False), default=None,
              help="Directory for tables and meshes (default: $STRATUM_OUTPUT_DIR or ./output).")
@click.option("--progress/--no-progress", default=False, help="Show a progress bar over levels.")
def run(config_path, out_dir, progress):
    """Run the refinement study described by CONFIG_PATH."""
    try:
        outcome = execute_run(config_path, out_dir, progress=progress)
    except (ConfigError, InputError) as e:
        logger.error(f"Invalid configuration {config_path}: {e}")
        click.echo(f"error: {e}", err=True)
        sys.exit(EXIT_CONFIG)

    click.echo(outcome.summary)
    if outcome.table_path is not None:
        click.echo(f"table: {outcome.table_path}")
    if not outcome.result.ok:
        click.echo(f"error: {outcome.result.error}", err=True)
        sys.exit(EXIT_RUNTIME)


@cli.command()
@click.argument("table_a", type=click.Path(dir_okay=False))
@click.argument("table_b", type=click.Path(dir_okay=False))
def compare(table_a, table_b):
    """Compare the convergence rates of two result tables."""
    try:
        report = compare_tables(table_a, table_b)
    except TableParseError as e:
        logger.error(f"Cannot compare tables: {e}")
        click.echo(f"error: {e}", err=True)
        sys.exit(EXIT_CONFIG)

    click.echo(f"column: {report.column}")
    click.echo(f"{table_a}: slope {report.slope_a:.3f}, final {report.final_error_a:.3e}, "
               f"dofs for final error of b {report.dofs_a:.0f}")
    click.echo(f"{table_b}: slope {report.slope_b:.3f}, final {report.final_error_b:.3e}, "
               f"dofs for final error of a {report.dofs_b:.0f}")
    click.echo(f"dof ratio at matched error {report.target_error:.3e}: {report.dof_ratio:.3f}")
