"""Ablation and model-comparison grids trained under one shared budget."""

import logging
from collections.abc import Callable

import numpy as np

from mmforge import __version__
from mmforge.data.dataset import MtsDataset
from mmforge.evaluation.evaluate import evaluate_model
from mmforge.exceptions import MmforgeError
from mmforge.forecasting.network import Forecaster
from mmforge.meta.training import train
from mmforge.models import (
    AblationGrid,
    GridMedian,
    GridRun,
    MetricsReport,
    ModelConfig,
    ProgressUpdate,
    RunConfig,
    RunMetadata,
)
from mmforge.tensor.rng import Rng, Stream

logger = logging.getLogger(__name__)

ABLATION_VARIANTS: dict[str, dict[str, bool]] = {
    "full": {"disable_maml": False, "disable_mc_dropout": False},
    "no_maml": {"disable_maml": True, "disable_mc_dropout": False},
    "no_mc_dropout": {"disable_maml": False, "disable_mc_dropout": True},
    "no_maml_no_mc_dropout": {"disable_maml": True, "disable_mc_dropout": True},
}

COMPARISON_VARIANTS = ("temporal_transformer", "variate_transformer", "mmformer")


def build_metadata(
    config: RunConfig, model: ModelConfig, seed: int
) -> RunMetadata:
    """Provenance for a report produced under ``config`` and ``seed``.

    The hash covers the effective configuration, with ``model`` and
    ``seed`` in place of the base values.

    Returns:
        The metadata, recording every behavioral model flag.
    """
    effective = config.model_copy(update={"model": model, "seed": seed})
    return RunMetadata(
        config_hash=effective.config_hash(),
        seed=seed,
        version=__version__,
        variant=model.variant,
        flags={
            "disable_maml": model.disable_maml,
            "disable_mc_dropout": model.disable_mc_dropout,
            "time_encoding": model.uses_time_encoding,
            "mc_dropout_in_training": model.mc_dropout_in_training,
            "decoder": model.decoder,
            "lookback": model.lookback,
            "horizon": model.horizon,
            "adapt_scope": config.meta.adapt_scope,
            "inner_lr": config.meta.inner_lr,
            "meta_lr": config.meta.meta_lr,
            "mc_passes": model.mc_passes,
        },
    )


def fit_and_score(
    dataset: MtsDataset,
    config: RunConfig,
    model: ModelConfig,
    seed: int,
    threads: int | None = None,
) -> MetricsReport:
    """Train ``model`` with ``seed`` and score it on the configured split.

    Returns:
        The evaluation report.
    """
    forecaster = Forecaster(model, threads)
    rng = Rng(seed)
    result = train(forecaster, dataset, config.meta, config.training, rng)
    return evaluate_model(
        forecaster,
        result.params,
        dataset,
        config.evaluation,
        rng.substream(Stream.EVAL),
        stride=config.training.eval_stride,
        metadata=build_metadata(config, model, seed),
    ).report


def _medians(runs: list[GridRun], variants: list[str]) -> list[GridMedian]:
    medians = []
    for name in variants:
        reports = [r.report for r in runs if r.variant == name]
        medians.append(
            GridMedian(
                variant=name,
                mse=float(np.median([r.mse for r in reports])),
                mae=float(np.median([r.mae for r in reports])),
                mape_percent=float(np.median([r.mape_percent for r in reports])),
                n_points=int(np.median([r.n_points for r in reports])),
                n_excluded_mape=int(
                    np.median([r.n_excluded_mape for r in reports])
                ),
            )
        )
    return medians


def _run_grid(
    dataset: MtsDataset,
    config: RunConfig,
    cells: dict[str, ModelConfig],
    seeds: list[int],
    stage: str,
    progress: Callable[[ProgressUpdate], None] | None,
    threads: int | None,
) -> AblationGrid:
    if not seeds:
        raise ValueError("a grid needs at least one seed")
    runs = []
    total = len(cells) * len(seeds)
    for seed in seeds:
        for name, model in cells.items():
            logger.info(f"{stage}: variant {name}, seed {seed}")
            try:
                report = fit_and_score(dataset, config, model, seed, threads)
            except MmforgeError as e:
                e.add_note(f"while running variant '{name}' with seed {seed}")
                raise
            runs.append(
                GridRun(
                    variant=name,
                    seed=seed,
                    flags={
                        "disable_maml": model.disable_maml,
                        "disable_mc_dropout": model.disable_mc_dropout,
                    },
                    report=report,
                )
            )
            if progress:
                progress(
                    ProgressUpdate(
                        stage=stage,
                        current=len(runs),
                        total=total,
                        message=f"{name} seed {seed}: mse={report.mse:.4g}",
                    )
                )
    return AblationGrid(runs=runs, medians=_medians(runs, list(cells)))


def run_ablation(
    dataset: MtsDataset,
    config: RunConfig,
    seeds: list[int],
    progress: Callable[[ProgressUpdate], None] | None = None,
    threads: int | None = None,
) -> AblationGrid:
    """Train and score MMformer with each MAML / MC-dropout switch removed.

    All four variants use the same dataset, splits and seed list.

    Returns:
        The grid with per-variant medians across seeds.

    Raises:
        ValueError: If ``seeds`` is empty.
    """
    base = config.model.model_copy(update={"variant": "mmformer"})
    cells = {
        name: base.model_copy(update=flags)
        for name, flags in ABLATION_VARIANTS.items()
    }
    return _run_grid(dataset, config, cells, seeds, "ablation", progress, threads)


def run_comparison(
    dataset: MtsDataset,
    config: RunConfig,
    seeds: list[int],
    progress: Callable[[ProgressUpdate], None] | None = None,
    threads: int | None = None,
) -> AblationGrid:
    """Train the temporal baseline, variate baseline and MMformer alike.

    Returns:
        The grid keyed by variant name.

    Raises:
        ValueError: If ``seeds`` is empty.
    """
    cells = {
        variant: config.model.model_copy(update={"variant": variant})
        for variant in COMPARISON_VARIANTS
    }
    return _run_grid(
        dataset, config, cells, seeds, "comparison", progress, threads
    )
