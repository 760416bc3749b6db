from pathlib import Path
from typing import Protocol

import pandas as pd

from mmforge import models
from mmforge.data.dataset import MtsDataset
from mmforge.forecasting.params import ParamSet


class RunStorage(Protocol):
    """Protocol for the files a command reads from and writes to a run."""

    @property
    def path(self) -> Path:
        """The run directory."""
        ...

    def save_config(self, config: models.RunConfig) -> None:
        """Write the resolved configuration."""
        ...

    def save_checkpoint(self, params: ParamSet) -> None:
        """Write the trained parameters."""
        ...

    def save_history(self, history: models.TrainingHistory) -> None:
        """Write the per-epoch training history."""
        ...

    def save_report(self, report: models.MetricsReport) -> None:
        """Write a metrics report as CSV and JSON."""
        ...

    def save_predictions(self, frame: pd.DataFrame) -> None:
        """Write the per-point prediction dump."""
        ...

    def save_grid(self, name: str, grid: models.AblationGrid) -> None:
        """Write an ablation or comparison grid."""
        ...

    def save_forecast(self, frame: pd.DataFrame) -> None:
        """Write a deployment forecast."""
        ...

    def save_dataset(
        self, dataset: MtsDataset, report: models.PreprocessReport
    ) -> None:
        """Write a processed dataset, its norm stats and its report."""
        ...

    def save_raw(self, frame: pd.DataFrame, spec: models.SynthSpec) -> None:
        """Write a raw CSV in the loader's input layout plus its spec."""
        ...
