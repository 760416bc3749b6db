import json
import logging
from collections.abc import Callable, Iterator
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Annotated

import typer
from rich.console import Console
from rich.progress import (
    BarColumn,
    Progress,
    SpinnerColumn,
    TextColumn,
    TimeRemainingColumn,
)

from mmforge import workflow
from mmforge.cli.configuration import build_run_configuration
from mmforge.evaluation.reporting import grid_table, metrics_table
from mmforge.exceptions import (
    CheckpointError,
    ConfigurationError,
    DataError,
    MmforgeError,
    PipelineStepError,
)
from mmforge.logging import configure_logging
from mmforge.models import ProgressUpdate, RunConfig

cli = typer.Typer(no_args_is_help=True)
console = Console()
logger = logging.getLogger("mmforge.cli")

USAGE_ERRORS = (DataError, ConfigurationError, CheckpointError)


@dataclass
class CliState:
    """Global options shared by every subcommand."""

    config: Path | None = None
    seed: int | None = None
    output_dir: Path | None = None
    force: bool = False
    overrides: list[str] = field(default_factory=list)


def exit_code_for(error: MmforgeError) -> int:
    """Map a failure to the process exit code.

    Returns:
        2 for input or usage problems, 1 for compute failures.
    """
    if isinstance(error, PipelineStepError):
        return exit_code_for(error.cause) if isinstance(
            error.cause, MmforgeError
        ) else 1
    return 2 if isinstance(error, USAGE_ERRORS) else 1


def _path_override(key: str, path: Path | None) -> list[str]:
    return [] if path is None else [f"{key}={json.dumps(str(path))}"]


@contextmanager
def _progress_bar() -> Iterator[Callable[[ProgressUpdate], None]]:
    with Progress(
        SpinnerColumn(),
        TextColumn("[progress.description]{task.description}"),
        BarColumn(),
        TextColumn("[progress.percentage]{task.percentage:>3.0f}%"),
        TimeRemainingColumn(),
        console=console,
    ) as progress:
        tasks: dict[str, int] = {}

        def handle_progress(update: ProgressUpdate) -> None:
            if update.stage not in tasks:
                tasks[update.stage] = progress.add_task(
                    update.stage.capitalize(), total=update.total
                )
            progress.update(
                tasks[update.stage],
                completed=update.current,
                total=update.total,
                description=f"{update.stage}: {update.message}",
            )

        yield handle_progress


def _execute(
    ctx: typer.Context,
    command: str,
    action: Callable[[RunConfig], str],
    extra_overrides: list[str] | None = None,
) -> None:
    state: CliState = ctx.obj
    try:
        config = build_run_configuration(
            state.config,
            [*state.overrides, *(extra_overrides or [])],
            state.seed,
            state.output_dir,
        )
        logger.info(f"Running {command} (config {config.config_hash()[:12]})")
        message = action(config)
    except MmforgeError as e:
        logger.debug(f"{command} failed", exc_info=True)
        console.print(f"[bold red]{command} failed:[/bold red] {e}")
        for note in getattr(e, "__notes__", []):
            console.print(f"  {note}")
        raise typer.Exit(exit_code_for(e)) from e
    console.print(f"[bold green]Complete![/bold green] {message}")


@cli.callback()
def main(
    ctx: typer.Context,
    config: Annotated[
        Path | None,
        typer.Option("--config", help="TOML or JSON run configuration"),
    ] = None,
    seed: Annotated[
        int | None, typer.Option("--seed", help="Override the run seed", min=0)
    ] = None,
    output_dir: Annotated[
        Path | None,
        typer.Option("--output-dir", help="Run directory to write into"),
    ] = None,
    force: Annotated[
        bool,
        typer.Option("--force", help="Overwrite a non-empty output directory"),
    ] = False,
    overrides: Annotated[
        list[str] | None,
        typer.Option("--set", help="Override a config key: dotted.key=value"),
    ] = None,
    log_file: Annotated[
        Path | None, typer.Option("--log-file", help="Path to save logs")
    ] = None,
    verbose: Annotated[
        bool, typer.Option("--verbose", help="Enable verbose logging")
    ] = False,
) -> None:
    """mmforge: multivariate forecasting with meta-learned attention."""
    configure_logging(log_file, verbose)
    ctx.obj = CliState(
        config=config,
        seed=seed,
        output_dir=output_dir,
        force=force,
        overrides=overrides or [],
    )


@cli.command()
def preprocess(
    ctx: typer.Context,
    input_path: Annotated[
        Path | None, typer.Option("--input", help="Raw CSV to preprocess")
    ] = None,
) -> None:
    """Impute, clip, split, normalize and verify a raw CSV."""

    def action(config: RunConfig) -> str:
        storage = workflow.open_run(config, "preprocess", ctx.obj.force)
        report = workflow.cmd_preprocess(config, storage)
        return (
            f"{report.imputation.imputations} imputations, "
            f"{report.imputation.clips} clips, split {report.split}; "
            f"saved to {storage.path}"
        )

    _execute(
        ctx, "preprocess", action, _path_override("data.raw_path", input_path)
    )


DataOption = Annotated[
    Path | None,
    typer.Option("--data", help="Processed dataset directory"),
]
CheckpointOption = Annotated[
    Path, typer.Option("--checkpoint", help="Checkpoint produced by train")
]


@cli.command()
def train(ctx: typer.Context, data: DataOption = None) -> None:
    """Train the configured model and keep the best-validation checkpoint."""

    def action(config: RunConfig) -> str:
        dataset = workflow.load_processed(config)
        config = workflow.bind_dataset(config, dataset)
        storage = workflow.open_run(config, "train", ctx.obj.force)
        with _progress_bar() as progress:
            result = workflow.cmd_train(config, storage, dataset, progress)
        return (
            f"{len(result.history.records)} epochs, best epoch "
            f"{result.best_epoch}; saved to {storage.path}"
        )

    _execute(ctx, "train", action, _path_override("data.processed_dir", data))


@cli.command()
def evaluate(
    ctx: typer.Context,
    checkpoint: CheckpointOption,
    data: DataOption = None,
    split: Annotated[
        str | None, typer.Option("--split", help="train, val or test")
    ] = None,
    denormalized: Annotated[
        bool, typer.Option("--denormalized", help="Score in raw units")
    ] = False,
    horizons: Annotated[
        list[int] | None,
        typer.Option("--horizons", help="Forecast lengths to average over"),
    ] = None,
) -> None:
    """Score a checkpoint and dump its predictions."""
    extra = _path_override("data.processed_dir", data)
    if split:
        extra.append(f"evaluation.split={json.dumps(split)}")
    if denormalized:
        extra.append("evaluation.denormalized=true")
    if horizons:
        extra.append(f"evaluation.horizons={json.dumps(horizons)}")

    def action(config: RunConfig) -> str:
        dataset = workflow.load_processed(config)
        config = workflow.bind_dataset(config, dataset)
        storage = workflow.open_run(config, "evaluate", ctx.obj.force)
        result = workflow.cmd_evaluate(config, storage, dataset, checkpoint)
        console.print(metrics_table(result.report))
        return f"report saved to {storage.path}"

    _execute(ctx, "evaluate", action, extra)


@cli.command()
def ablate(ctx: typer.Context, data: DataOption = None) -> None:
    """Run the MAML / MC-dropout ablation grid over the configured seeds."""

    def action(config: RunConfig) -> str:
        dataset = workflow.load_processed(config)
        config = workflow.bind_dataset(config, dataset)
        storage = workflow.open_run(config, "ablate", ctx.obj.force)
        with _progress_bar() as progress:
            grid = workflow.cmd_ablate(config, storage, dataset, progress)
        console.print(grid_table(grid, "Ablation"))
        return f"{len(grid.runs)} runs saved to {storage.path}"

    _execute(ctx, "ablate", action, _path_override("data.processed_dir", data))


@cli.command()
def compare(ctx: typer.Context, data: DataOption = None) -> None:
    """Compare MMformer with the temporal and variate baselines."""

    def action(config: RunConfig) -> str:
        dataset = workflow.load_processed(config)
        config = workflow.bind_dataset(config, dataset)
        storage = workflow.open_run(config, "compare", ctx.obj.force)
        with _progress_bar() as progress:
            grid = workflow.cmd_compare(config, storage, dataset, progress)
        console.print(grid_table(grid, "Comparison"))
        return f"{len(grid.runs)} runs saved to {storage.path}"

    _execute(
        ctx, "compare", action, _path_override("data.processed_dir", data)
    )


@cli.command()
def forecast(
    ctx: typer.Context,
    checkpoint: CheckpointOption,
    entity: Annotated[str, typer.Option("--entity", help="Entity id")],
    from_timestamp: Annotated[
        str,
        typer.Option("--from", help="First forecast timestamp"),
    ],
    data: DataOption = None,
) -> None:
    """Forecast one entity's next horizon from a checkpoint."""

    def action(config: RunConfig) -> str:
        dataset = workflow.load_processed(config)
        config = workflow.bind_dataset(config, dataset)
        storage = workflow.open_run(config, "forecast", ctx.obj.force)
        frame = workflow.cmd_forecast(
            config, storage, dataset, checkpoint, entity, from_timestamp
        )
        return f"{len(frame)} forecast rows saved to {storage.path}"

    _execute(
        ctx, "forecast", action, _path_override("data.processed_dir", data)
    )


@cli.command()
def synth(ctx: typer.Context) -> None:
    """Generate a seeded synthetic raw CSV."""

    def action(config: RunConfig) -> str:
        storage = workflow.open_run(config, "synth", ctx.obj.force)
        frame = workflow.cmd_synth(config, storage)
        return f"{len(frame)} rows saved to {storage.path}"

    _execute(ctx, "synth", action)


if __name__ == "__main__":
    cli()
