import json
import logging
from pathlib import Path

import numpy as np
import pandas as pd

from mmforge import models
from mmforge.data.dataset import MtsDataset, NormStats, SplitBounds
from mmforge.data.loading import dataset_to_frame
from mmforge.exceptions import DataError
from mmforge.forecasting.params import ParamSet

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"

CONFIG_FILE = "config.resolved"
CHECKPOINT_FILE = "checkpoint.bin"
HISTORY_FILE = "history.csv"
REPORT_CSV = "report.csv"
REPORT_JSON = "report.json"
PREDICTIONS_FILE = "predictions.csv"
FORECAST_FILE = "forecast.csv"
DATASET_CSV = "dataset.csv"
DATASET_JSON = "dataset.json"
NORM_STATS_FILE = "norm_stats.csv"
PREPROCESS_REPORT = "preprocess_report.json"
RAW_FILE = "raw.csv"
SYNTH_SPEC_FILE = "synth_spec.json"

GRID_COLUMNS = [
    "variant",
    "seed",
    "mse",
    "mae",
    "mape_percent",
    "n_points",
    "n_excluded_mape",
]


def write_csv(frame: pd.DataFrame, path: Path) -> None:
    """Write ``frame`` with round-trip float formatting and LF endings."""
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(
        path,
        index=False,
        float_format=FLOAT_FORMAT,
        na_rep="nan",
        lineterminator="\n",
    )


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open(mode="w", encoding="utf-8", newline="\n") as f:
        f.write(text)


class FilesystemRunStorage:
    """Run directory on the local filesystem."""

    def __init__(self, path: Path) -> None:
        self._path = path

    @property
    def path(self) -> Path:
        """The run directory."""
        return self._path

    def save_config(self, config: models.RunConfig) -> None:
        """Write the canonical JSON of ``config``."""
        _write_text(self.path / CONFIG_FILE, config.canonical_json() + "\n")
        logger.debug(f"Saved resolved config {config.config_hash()[:12]}")

    def save_checkpoint(self, params: ParamSet) -> None:
        """Write the parameters in the binary checkpoint format."""
        self.path.mkdir(parents=True, exist_ok=True)
        params.save(self.path / CHECKPOINT_FILE)

    def save_history(self, history: models.TrainingHistory) -> None:
        """Write ``history.csv`` with the training path's column names."""
        frame = pd.DataFrame(history.rows(), columns=history.columns)
        write_csv(frame, self.path / HISTORY_FILE)

    def save_report(self, report: models.MetricsReport) -> None:
        """Write ``report.csv`` (grid columns) and ``report.json``."""
        meta = report.metadata
        row = {
            "variant": meta.variant if meta else "",
            "seed": meta.seed if meta else "",
            "mse": report.mse,
            "mae": report.mae,
            "mape_percent": report.mape_percent,
            "n_points": report.n_points,
            "n_excluded_mape": report.n_excluded_mape,
        }
        write_csv(pd.DataFrame([row], columns=GRID_COLUMNS), self.path / REPORT_CSV)
        _write_text(self.path / REPORT_JSON, report.model_dump_json(indent=2))

    def save_predictions(self, frame: pd.DataFrame) -> None:
        """Write ``predictions.csv``."""
        write_csv(frame, self.path / PREDICTIONS_FILE)

    def save_grid(self, name: str, grid: models.AblationGrid) -> None:
        """Write ``{name}.csv`` plus the full grid as ``{name}.json``."""
        write_csv(
            pd.DataFrame(grid.rows(), columns=GRID_COLUMNS),
            self.path / f"{name}.csv",
        )
        _write_text(self.path / f"{name}.json", grid.model_dump_json(indent=2))

    def save_forecast(self, frame: pd.DataFrame) -> None:
        """Write ``forecast.csv``."""
        write_csv(frame, self.path / FORECAST_FILE)

    def save_dataset(
        self, dataset: MtsDataset, report: models.PreprocessReport
    ) -> None:
        """Write the processed cube, its metadata, norm stats and report."""
        write_csv(dataset_to_frame(dataset), self.path / DATASET_CSV)
        meta = {
            "entities": list(dataset.entities),
            "timestamps": list(dataset.timestamps),
            "time_index": [int(t) for t in dataset.time_index],
            "features": list(dataset.feature_names),
            "split": (
                None
                if dataset.split is None
                else [
                    dataset.split.train_end,
                    dataset.split.val_end,
                    dataset.split.length,
                ]
            ),
        }
        _write_text(self.path / DATASET_JSON, json.dumps(meta, indent=2))
        if dataset.norm_stats is not None:
            stats = pd.DataFrame(
                {
                    "feature": list(dataset.feature_names),
                    "mu": dataset.norm_stats.mu,
                    "sigma": dataset.norm_stats.sigma,
                }
            )
            write_csv(stats, self.path / NORM_STATS_FILE)
        _write_text(
            self.path / PREPROCESS_REPORT, report.model_dump_json(indent=2)
        )
        logger.info(f"Saved processed dataset to {self.path}")

    def save_raw(self, frame: pd.DataFrame, spec: models.SynthSpec) -> None:
        """Write ``raw.csv`` and the synthetic spec that produced it."""
        write_csv(frame, self.path / RAW_FILE)
        _write_text(self.path / SYNTH_SPEC_FILE, spec.model_dump_json(indent=2))


def load_norm_stats(path: Path, features: tuple[str, ...]) -> NormStats:
    """Read a ``feature,mu,sigma`` CSV in the order of ``features``.

    Returns:
        The statistics.

    Raises:
        DataError: If a feature is missing from the file.
    """
    frame = pd.read_csv(
        path, dtype={"feature": str}, float_precision="round_trip"
    ).set_index("feature")
    missing = [f for f in features if f not in frame.index]
    if missing:
        raise DataError(f"norm stats missing feature(s): {', '.join(missing)}")
    ordered = frame.loc[list(features)]
    return NormStats(
        mu=ordered["mu"].to_numpy(dtype=np.float64),
        sigma=ordered["sigma"].to_numpy(dtype=np.float64),
    )


def load_dataset(directory: Path) -> MtsDataset:
    """Read a processed dataset written by ``save_dataset``.

    Returns:
        The dataset, with split and norm stats when they were saved.

    Raises:
        DataError: If the files are missing or inconsistent.
    """
    meta_path = directory / DATASET_JSON
    csv_path = directory / DATASET_CSV
    if not meta_path.is_file() or not csv_path.is_file():
        raise DataError(f"no processed dataset in {directory}")
    with meta_path.open(encoding="utf-8") as f:
        meta = json.load(f)

    features = tuple(meta["features"])
    frame = pd.read_csv(
        csv_path,
        dtype={"entity": str, "timestamp": str},
        float_precision="round_trip",
    )
    shape = (len(meta["entities"]), len(meta["timestamps"]), len(features))
    if len(frame) != shape[0] * shape[1]:
        raise DataError(
            f"{csv_path} has {len(frame)} rows, expected {shape[0] * shape[1]}"
        )
    values = frame[list(features)].to_numpy(dtype=np.float64).reshape(shape)

    split = None
    if meta["split"] is not None:
        train_end, val_end, length = meta["split"]
        split = SplitBounds(train_end=train_end, val_end=val_end, length=length)
    stats_path = directory / NORM_STATS_FILE
    stats = load_norm_stats(stats_path, features) if stats_path.is_file() else None

    logger.info(f"Loaded processed dataset {shape} from {directory}")
    return MtsDataset(
        entities=tuple(meta["entities"]),
        timestamps=tuple(meta["timestamps"]),
        time_index=np.asarray(meta["time_index"], dtype=np.int64),
        values=values,
        feature_names=features,
        norm_stats=stats,
        split=split,
    )
