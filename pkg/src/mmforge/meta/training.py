"""Epoch loop for both training paths, keeping the best-validation snapshot."""

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass

from mmforge.data.dataset import MtsDataset, WindowSample
from mmforge.data.windows import group_by_entity, make_windows
from mmforge.evaluation.evaluate import evaluate_model
from mmforge.exceptions import DataError, NumericError, TrainingDivergedError
from mmforge.forecasting.network import Forecaster
from mmforge.forecasting.params import ParamSet
from mmforge.meta.maml import meta_step
from mmforge.meta.tasks import sample_tasks_from_windows
from mmforge.models import (
    EpochRecord,
    EvaluationConfig,
    MetaConfig,
    ProgressUpdate,
    TrainingConfig,
    TrainingHistory,
)
from mmforge.tensor import engine as te
from mmforge.tensor.rng import Rng, Stream

logger = logging.getLogger(__name__)

VALIDATION = EvaluationConfig(split="val", mc=True, lowest_k=0)


@dataclass(frozen=True)
class TrainingResult:
    """Best-validation parameters and the full per-epoch history."""

    params: ParamSet
    history: TrainingHistory
    best_epoch: int | None = None


def _meta_epoch(
    forecaster: Forecaster,
    params: ParamSet,
    windows: dict[str, list[WindowSample]],
    meta_config: MetaConfig,
    training_config: TrainingConfig,
    rng: Rng,
) -> tuple[ParamSet, float]:
    losses = []
    for b in range(training_config.meta_batches_per_epoch):
        batch_rng = rng.substream(b)
        tasks = sample_tasks_from_windows(
            windows,
            meta_config.tasks_per_meta_batch,
            batch_rng.substream(0),
            meta_config.support_size,
            meta_config.query_size,
        )
        params, meta_loss = meta_step(
            params,
            tasks,
            meta_config,
            forecaster.window_loss,
            batch_rng.substream(1),
            forecaster.threads,
        )
        losses.append(meta_loss)
    return params, sum(losses) / len(losses)


def _plain_epoch(
    forecaster: Forecaster,
    params: ParamSet,
    samples: list[WindowSample],
    lr: float,
    batch_size: int,
    rng: Rng,
) -> tuple[ParamSet, float]:
    order = rng.substream(0).permutation(len(samples))
    total, seen = 0.0, 0
    for j, lo in enumerate(range(0, len(samples), batch_size)):
        batch = [samples[k] for k in order[lo : lo + batch_size]]
        loss = forecaster.window_loss(params, batch, rng.substream(1).substream(j))
        value = loss.item()
        if not math.isfinite(value):
            raise NumericError(f"non-finite training loss in batch {j}")
        te.backward(loss)
        params = params.update(params.grads(), lr)
        total += value * len(batch)
        seen += len(batch)
    return params, total / seen


def train(
    forecaster: Forecaster,
    dataset: MtsDataset,
    meta_config: MetaConfig,
    training_config: TrainingConfig,
    rng: Rng,
    progress: Callable[[ProgressUpdate], None] | None = None,
) -> TrainingResult:
    """Train from a fresh initialization and keep the best-validation params.

    MMformer with MAML enabled runs ``meta_step`` over sampled tasks; every
    other configuration runs mini-batch gradient descent on window MSE with
    ``meta_lr`` as its rate. After each epoch the validation split is scored
    exactly as ``evaluate`` would score it with MC inference.

    Stream layout under ``rng``: ``INIT`` for initialization, ``TRAIN``
    substream e for epoch e, ``EVAL`` for validation.

    Args:
        forecaster: The model definition.
        dataset: A split, normalized dataset.
        meta_config: Inner/outer loop settings (``meta_lr`` is also the plain
            path's rate).
        training_config: Epochs, batching and strides.
        rng: The run's root stream.
        progress: Optional callback fed one update per epoch.

    Returns:
        The best parameters (the initialization when ``epochs`` is 0) and
        the history.

    Raises:
        DataError: If the training split yields no windows.
        TrainingDivergedError: If a loss turns non-finite; carries the
            history recorded so far.
    """
    config = forecaster.config
    mode = "maml" if config.uses_maml else "plain"
    history = TrainingHistory(mode=mode)
    params = forecaster.init_params(rng.substream(Stream.INIT))
    logger.info(
        f"Training {config.variant} ({mode}, "
        f"{forecaster.parameter_count} parameters) for "
        f"{training_config.epochs} epochs"
    )
    if training_config.epochs == 0:
        return TrainingResult(params, history)

    samples = make_windows(
        dataset,
        "train",
        config.lookback,
        config.horizon,
        training_config.train_stride,
    )
    if not samples:
        raise DataError("training split yields no windows")
    windows = group_by_entity(samples)
    eval_stride = training_config.eval_stride or config.horizon
    val_start, val_stop = dataset.split_range("val")
    has_val = val_stop - val_start >= config.lookback + config.horizon
    if not has_val:
        logger.warning("Validation split too short; keeping the last epoch")

    best_params, best_val, best_epoch = params, math.inf, None
    for epoch in range(training_config.epochs):
        epoch_rng = rng.substream(Stream.TRAIN).substream(epoch)
        try:
            if mode == "maml":
                params, train_loss = _meta_epoch(
                    forecaster,
                    params,
                    windows,
                    meta_config,
                    training_config,
                    epoch_rng,
                )
            else:
                params, train_loss = _plain_epoch(
                    forecaster,
                    params,
                    samples,
                    meta_config.meta_lr,
                    training_config.batch_size,
                    epoch_rng,
                )
            val_mse = math.nan
            if has_val:
                val_mse = evaluate_model(
                    forecaster,
                    params,
                    dataset,
                    VALIDATION,
                    rng.substream(Stream.EVAL),
                    stride=eval_stride,
                ).report.mse
        except NumericError as e:
            raise TrainingDivergedError(
                f"training diverged in epoch {epoch}: {e}", history
            ) from e
        if not math.isfinite(train_loss):
            raise TrainingDivergedError(
                f"non-finite training loss in epoch {epoch}", history
            )
        history.records.append(
            EpochRecord(epoch=epoch, train_loss=train_loss, val_mse=val_mse)
        )
        if not has_val or val_mse < best_val:
            best_params, best_val, best_epoch = params, val_mse, epoch

        logger.info(
            f"Epoch {epoch}: train={train_loss:.6g} val_mse={val_mse:.6g}"
        )
        if progress:
            progress(
                ProgressUpdate(
                    stage="training",
                    current=epoch + 1,
                    total=training_config.epochs,
                    message=f"val_mse={val_mse:.4g}",
                )
            )

    logger.info(f"Best validation epoch: {best_epoch}")
    return TrainingResult(best_params, history, best_epoch)
