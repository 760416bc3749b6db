"""Forecast every evaluation window and score the result."""

import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd

from mmforge.concurrency import map_ordered
from mmforge.data.dataset import MtsDataset, WindowSample
from mmforge.data.windows import make_windows
from mmforge.evaluation.metrics import mae, mape, mse
from mmforge.exceptions import DataError, DimensionError
from mmforge.forecasting.network import Forecast, Forecaster, Predictor
from mmforge.forecasting.params import ParamSet
from mmforge.models import (
    EvaluationConfig,
    FeatureMetrics,
    HorizonMetrics,
    MetricsReport,
    RunMetadata,
    WindowError,
)
from mmforge.tensor.rng import Rng
from mmforge.types import FloatArray, SplitName

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EvaluationResult:
    """A report plus the arrays it was computed from.

    ``y_true``, ``y_pred`` and ``mc_std`` are ``[N × Hz × V]`` in the units
    the report was scored in.
    """

    report: MetricsReport
    samples: list[WindowSample]
    y_true: FloatArray
    y_pred: FloatArray
    mc_std: FloatArray

    def prediction_frame(self, dataset: MtsDataset) -> pd.DataFrame:
        """Long-format prediction dump.

        Returns:
            Columns ``entity,timestamp,feature,y_true,y_pred,mc_std``.
        """
        n, hz, v = self.y_true.shape
        starts = np.array([s.target_start for s in self.samples])
        time_idx = starts[:, None, None] + np.arange(hz)[None, :, None]
        time_idx = np.broadcast_to(time_idx, (n, hz, v)).ravel()
        entity_idx = np.broadcast_to(
            np.array([s.entity_index for s in self.samples])[:, None, None],
            (n, hz, v),
        ).ravel()
        feature_idx = np.broadcast_to(np.arange(v), (n, hz, v)).ravel()
        return pd.DataFrame(
            {
                "entity": np.asarray(dataset.entities, dtype=object)[entity_idx],
                "timestamp": np.asarray(dataset.timestamps, dtype=object)[
                    time_idx
                ],
                "feature": np.asarray(dataset.feature_names, dtype=object)[
                    feature_idx
                ],
                "y_true": self.y_true.ravel(),
                "y_pred": self.y_pred.ravel(),
                "mc_std": self.mc_std.ravel(),
            }
        )


def _score(
    y: FloatArray, y_hat: FloatArray, mape_eps: float
) -> tuple[float, float, float, int]:
    pct, excluded = mape(y, y_hat, mape_eps)
    return mse(y, y_hat), mae(y, y_hat), pct, excluded


def _feature_metrics(
    y: FloatArray, y_hat: FloatArray, mape_eps: float
) -> FeatureMetrics:
    try:
        pct: float | None
        pct, excluded = mape(y, y_hat, mape_eps)
    except DataError:
        pct, excluded = None, int(y.size)
    return FeatureMetrics(
        mse=mse(y, y_hat),
        mae=mae(y, y_hat),
        mape_percent=pct,
        n_points=int(y.size),
        n_excluded_mape=excluded,
    )


def _lowest_error_windows(
    samples: list[WindowSample],
    dataset: MtsDataset,
    y: FloatArray,
    y_hat: FloatArray,
    k: int,
) -> list[WindowError]:
    if k == 0:
        return []
    per_window = ((y - y_hat) ** 2).reshape(len(samples), -1).mean(axis=1)
    order = sorted(
        range(len(samples)),
        key=lambda i: (
            per_window[i],
            samples[i].entity_index,
            samples[i].start_index,
        ),
    )
    return [
        WindowError(
            entity=samples[i].entity_id,
            start_index=samples[i].start_index,
            target_start=dataset.timestamps[samples[i].target_start],
            mse=float(per_window[i]),
        )
        for i in order[:k]
    ]


def evaluate(
    predictor: Predictor,
    dataset: MtsDataset,
    split: SplitName,
    *,
    lookback: int,
    horizon: int,
    stride: int | None = None,
    horizons: list[int] | None = None,
    mape_eps: float = 1e-6,
    lowest_k: int = 0,
    denormalized: bool = False,
    metadata: RunMetadata | None = None,
    threads: int | None = None,
) -> EvaluationResult:
    """Forecast each window of ``split`` and compute MSE, MAE and MAPE.

    Windows step by ``stride`` (default ``horizon``, so targets do not
    overlap). With ``horizons``, metrics are computed on each forecast
    prefix of that length and the headline numbers are their average.

    Returns:
        The report with per-feature, per-horizon and lowest-error detail.

    Raises:
        DataError: If the split has no windows, or raw-unit metrics are
            requested without normalization statistics.
        DimensionError: If a forecast has the wrong shape or a requested
            horizon exceeds ``horizon``.
    """
    samples = make_windows(dataset, split, lookback, horizon, stride or horizon)
    if not samples:
        raise DataError(f"no evaluation windows in split '{split}'")
    for h in horizons or []:
        if not 1 <= h <= horizon:
            raise DimensionError(
                "evaluate", (h,), (horizon,), detail="horizon out of range"
            )

    forecasts: list[Forecast] = map_ordered(predictor, samples, threads)
    expected = (horizon, dataset.num_features)
    for f in forecasts:
        if f.shape != expected:
            raise DimensionError("evaluate", f.shape, expected)

    y = np.stack([s.target.data for s in samples])
    y_hat = np.stack([f.values.data for f in forecasts])
    spread = np.stack(
        [
            f.mc_std if f.mc_std is not None else np.zeros(expected)
            for f in forecasts
        ]
    )
    if denormalized:
        if dataset.norm_stats is None:
            raise DataError("raw-unit metrics need normalization statistics")
        y = dataset.denormalize(y)
        y_hat = dataset.denormalize(y_hat)
        spread = spread * dataset.norm_stats.sigma

    overall_mse, overall_mae, overall_mape, excluded = _score(y, y_hat, mape_eps)
    per_horizon = []
    if horizons:
        for h in horizons:
            h_mse, h_mae, h_mape, _ = _score(y[:, :h], y_hat[:, :h], mape_eps)
            per_horizon.append(
                HorizonMetrics(horizon=h, mse=h_mse, mae=h_mae, mape_percent=h_mape)
            )
        overall_mse = float(np.mean([m.mse for m in per_horizon]))
        overall_mae = float(np.mean([m.mae for m in per_horizon]))
        overall_mape = float(np.mean([m.mape_percent for m in per_horizon]))

    report = MetricsReport(
        mse=overall_mse,
        mae=overall_mae,
        mape_percent=overall_mape,
        n_points=int(y.size),
        n_excluded_mape=excluded,
        per_feature={
            name: _feature_metrics(y[..., v], y_hat[..., v], mape_eps)
            for v, name in enumerate(dataset.feature_names)
        },
        per_horizon=per_horizon,
        lowest_error_windows=_lowest_error_windows(
            samples, dataset, y, y_hat, lowest_k
        ),
        split=split,
        denormalized=denormalized,
        metadata=metadata,
    )
    logger.info(
        f"Evaluated {len(samples)} '{split}' windows: mse={report.mse:.6g} "
        f"mae={report.mae:.6g} mape={report.mape_percent:.4g}%"
    )
    return EvaluationResult(report, samples, y, y_hat, spread)


def evaluate_model(
    forecaster: Forecaster,
    params: ParamSet,
    dataset: MtsDataset,
    config: EvaluationConfig,
    rng: Rng,
    *,
    stride: int | None = None,
    metadata: RunMetadata | None = None,
) -> EvaluationResult:
    """Evaluate a forecaster under ``config``.

    MC inference is used when ``config.mc`` is set; it reduces to the
    deterministic pass for models without MC dropout.

    Returns:
        The evaluation result.
    """
    mode = "mc_infer" if config.mc else "deterministic"
    return evaluate(
        forecaster.predictor(params, mode, rng),
        dataset,
        config.split,
        lookback=forecaster.config.lookback,
        horizon=forecaster.config.horizon,
        stride=stride,
        horizons=config.horizons,
        mape_eps=config.mape_eps,
        lowest_k=config.lowest_k,
        denormalized=config.denormalized,
        metadata=metadata,
        threads=forecaster.threads,
    )
