"""Subcommand orchestration: each function runs one command end to end."""

import logging
from collections.abc import Callable
from pathlib import Path
from typing import TypeVar

import numpy as np
import pandas as pd

from mmforge import models
from mmforge.data import (
    CsvSchema,
    MtsDataset,
    chronological_split,
    dataset_to_frame,
    default_synth_spec,
    impute_and_clip,
    integrity_check,
    load_csv,
    normalize,
    rank_features,
    select_features,
    synth_generate,
)
from mmforge.data.loading import parse_timestamps
from mmforge.data.windows import default_split_lengths
from mmforge.evaluation.ablation import (
    build_metadata,
    run_ablation,
    run_comparison,
)
from mmforge.evaluation.evaluate import EvaluationResult, evaluate_model
from mmforge.exceptions import (
    DataError,
    IntegrityError,
    MmforgeError,
    PipelineStepError,
    TrainingDivergedError,
)
from mmforge.forecasting import Forecaster, ParamSet
from mmforge.meta.training import TrainingResult, train
from mmforge.settings import get_settings
from mmforge.storage import (
    FilesystemRunStorage,
    RunStorage,
    default_run_dir,
    load_dataset,
    prepare_run_dir,
)
from mmforge.tensor import engine as te
from mmforge.tensor.engine import Tensor
from mmforge.tensor.rng import Rng, Stream

logger = logging.getLogger(__name__)

Progress = Callable[[models.ProgressUpdate], None]
T = TypeVar("T")


def open_run(
    config: models.RunConfig, command: str, force: bool = False
) -> FilesystemRunStorage:
    """Create the run directory and record the resolved configuration.

    Args:
        config: The resolved configuration.
        command: Subcommand name, used for the default directory.
        force: Whether an existing non-empty directory may be cleared.

    Returns:
        Storage bound to the run directory.
    """
    path = config.output_dir or default_run_dir(command, config.config_hash())
    storage = FilesystemRunStorage(prepare_run_dir(path, force))
    storage.save_config(config)
    logger.info(f"Run directory: {storage.path}")
    return storage


def _step(name: str, fn: Callable[..., T], *args: object) -> T:
    try:
        return fn(*args)
    except PipelineStepError:
        raise
    except MmforgeError as e:
        raise PipelineStepError(name, e) from e


def run_preprocessing(
    data: models.DataConfig,
) -> tuple[MtsDataset, models.PreprocessReport]:
    """Load, rank, impute and clip, split, normalize, then verify.

    Args:
        data: Input location and preprocessing options.

    Returns:
        The processed dataset and a report of every step.

    Raises:
        PipelineStepError: Wrapping the failure of the named step.
    """
    if data.raw_path is None:
        raise PipelineStepError(
            "load", DataError("no raw input: set data.raw_path")
        )
    schema = CsvSchema(
        entity_column=data.entity_column,
        timestamp_column=data.timestamp_column,
        features=data.features,
    )
    ds = _step("load", load_csv, data.raw_path, schema)

    ds, imputation = _step("impute_and_clip", impute_and_clip, ds, data.outlier_z)

    if data.train_len is None:
        lengths = default_split_lengths(ds.length)
    else:
        lengths = (
            data.train_len,
            data.val_len or 0,
            data.test_len
            if data.test_len is not None
            else ds.length - data.train_len - (data.val_len or 0),
        )
    ds = _step("chronological_split", chronological_split, ds, *lengths)

    ranking = rank_features(ds, data.variance_floor)
    dropped: list[str] = []
    if data.drop_constant_features:
        dropped = [s.name for s in ranking if s.near_constant]
        kept = [n for n in ds.feature_names if n not in dropped]
        ds = _step("select_features", select_features, ds, kept)
        if dropped:
            logger.info(f"Dropped near-constant features: {dropped}")

    ds = _step("normalize", normalize, ds)

    integrity = integrity_check(ds, data.variance_floor)
    if not integrity.ok:
        raise PipelineStepError(
            "integrity_check", IntegrityError(integrity.violations)
        )

    report = models.PreprocessReport(
        imputation=imputation,
        integrity=integrity,
        ranking=ranking,
        dropped_features=dropped,
        split=lengths,
    )
    return ds, report


def load_processed(config: models.RunConfig) -> MtsDataset:
    """The dataset a train/evaluate/forecast command works on.

    Uses ``data.processed_dir`` when set, otherwise preprocesses
    ``data.raw_path`` in memory.

    Returns:
        A split, normalized dataset.

    Raises:
        DataError: If neither location is configured.
    """
    if config.data.processed_dir is not None:
        return load_dataset(config.data.processed_dir)
    if config.data.raw_path is not None:
        ds, _ = run_preprocessing(config.data)
        return ds
    raise DataError("no dataset: set data.processed_dir or data.raw_path")


def bind_dataset(
    config: models.RunConfig, dataset: MtsDataset
) -> models.RunConfig:
    """Fix ``model.num_features`` to the dataset's feature count.

    Returns:
        The adjusted configuration.
    """
    if config.model.num_features == dataset.num_features:
        return config
    model = config.model.model_copy(
        update={"num_features": dataset.num_features}
    )
    return config.model_copy(update={"model": model})


def _load_checkpoint(forecaster: Forecaster, path: Path) -> ParamSet:
    params = ParamSet.load(path)
    forecaster.check_params(params)
    return params


def cmd_preprocess(
    config: models.RunConfig, storage: RunStorage
) -> models.PreprocessReport:
    """Run the preprocessing pipeline and save its outputs.

    Returns:
        The preprocessing report.
    """
    ds, report = run_preprocessing(config.data)
    storage.save_dataset(ds, report)
    return report


def cmd_train(
    config: models.RunConfig,
    storage: RunStorage,
    dataset: MtsDataset,
    progress: Progress | None = None,
) -> TrainingResult:
    """Train the configured model; save checkpoint and history.

    The history is saved even when training diverges.

    Returns:
        The training result.
    """
    forecaster = Forecaster(config.model, get_settings().threads)
    try:
        result = train(
            forecaster,
            dataset,
            config.meta,
            config.training,
            Rng(config.seed),
            progress,
        )
    except TrainingDivergedError as e:
        storage.save_history(e.history)
        raise
    storage.save_checkpoint(result.params)
    storage.save_history(result.history)
    return result


def cmd_evaluate(
    config: models.RunConfig,
    storage: RunStorage,
    dataset: MtsDataset,
    checkpoint: Path,
) -> EvaluationResult:
    """Score a checkpoint; save the report and the prediction dump.

    Returns:
        The evaluation result.
    """
    forecaster = Forecaster(config.model, get_settings().threads)
    params = _load_checkpoint(forecaster, checkpoint)
    result = evaluate_model(
        forecaster,
        params,
        dataset,
        config.evaluation,
        Rng(config.seed).substream(Stream.EVAL),
        stride=config.training.eval_stride,
        metadata=build_metadata(config, config.model, config.seed),
    )
    storage.save_report(result.report)
    storage.save_predictions(result.prediction_frame(dataset))
    return result


def cmd_ablate(
    config: models.RunConfig,
    storage: RunStorage,
    dataset: MtsDataset,
    progress: Progress | None = None,
) -> models.AblationGrid:
    """Run the four-variant ablation grid over ``config.seeds``.

    Returns:
        The grid.
    """
    grid = run_ablation(
        dataset, config, config.seeds, progress, get_settings().threads
    )
    storage.save_grid("ablation", grid)
    return grid


def cmd_compare(
    config: models.RunConfig,
    storage: RunStorage,
    dataset: MtsDataset,
    progress: Progress | None = None,
) -> models.AblationGrid:
    """Compare MMformer with both baselines over ``config.seeds``.

    Returns:
        The grid.
    """
    grid = run_comparison(
        dataset, config, config.seeds, progress, get_settings().threads
    )
    storage.save_grid("comparison", grid)
    return grid


def _grid_index(dataset: MtsDataset, timestamp: str) -> int:
    numeric, _ = parse_timestamps(pd.Series([timestamp], dtype=str))
    offset = int(numeric.iloc[0]) - int(dataset.time_index[0])
    step = dataset.time_step()
    if offset % step != 0:
        raise DataError(f"timestamp {timestamp} is not on the dataset's grid")
    return offset // step


def _label(dataset: MtsDataset, index: int) -> str:
    if index < dataset.length:
        return dataset.timestamps[index]
    value = int(dataset.time_index[0]) + index * dataset.time_step()
    if dataset.timestamps[0] == str(int(dataset.time_index[0])):
        return str(value)
    ts = pd.Timestamp(value, unit="s")
    if ts == ts.normalize() and len(dataset.timestamps[0]) == 10:
        return ts.date().isoformat()
    return ts.isoformat()


def cmd_forecast(
    config: models.RunConfig,
    storage: RunStorage,
    dataset: MtsDataset,
    checkpoint: Path,
    entity: str,
    from_timestamp: str,
) -> pd.DataFrame:
    """Forecast ``horizon`` steps for ``entity`` starting at ``from_timestamp``.

    The input window is the ``lookback`` steps just before
    ``from_timestamp``; forecast timestamps continue the dataset's spacing
    past its end.

    Returns:
        Columns ``entity,timestamp,feature,forecast,mc_std`` in raw units
        when normalization statistics are available.

    Raises:
        DataError: On an unknown entity or too little history.
    """
    forecaster = Forecaster(config.model, get_settings().threads)
    params = _load_checkpoint(forecaster, checkpoint)
    e = dataset.entity_index(entity)
    start = _grid_index(dataset, from_timestamp)
    lookback = config.model.lookback
    if start < lookback or start > dataset.length:
        raise DataError(
            f"need {lookback} steps of history before {from_timestamp} "
            f"for entity '{entity}'; the dataset covers "
            f"{dataset.timestamps[0]} to {dataset.timestamps[-1]}"
        )

    mode = "mc_infer" if config.evaluation.mc else "deterministic"
    window = Tensor(dataset.values[e, start - lookback : start, :])
    with te.no_grad():
        forecast = forecaster.forward(
            params, window, Rng(config.seed).substream(Stream.FORECAST), mode
        )
    values = forecast.values.numpy()
    spread = (
        forecast.mc_std
        if forecast.mc_std is not None
        else np.zeros(values.shape)
    )
    if dataset.norm_stats is not None:
        values = dataset.denormalize(values)
        spread = spread * dataset.norm_stats.sigma

    hz, v = values.shape
    labels = [_label(dataset, start + k) for k in range(hz)]
    frame = pd.DataFrame(
        {
            "entity": entity,
            "timestamp": np.repeat(labels, v),
            "feature": list(dataset.feature_names) * hz,
            "forecast": values.ravel(),
            "mc_std": spread.ravel(),
        }
    )
    storage.save_forecast(frame)
    return frame


def cmd_synth(
    config: models.RunConfig, storage: RunStorage
) -> pd.DataFrame:
    """Generate a synthetic raw CSV in the loader's input layout.

    Returns:
        The written frame.
    """
    synth = config.synth
    ds = synth_generate(
        synth.entities, synth.length, synth.features, synth.spec, config.seed
    )
    frame = dataset_to_frame(ds)
    storage.save_raw(frame, synth.spec or default_synth_spec(synth.features))
    return frame
