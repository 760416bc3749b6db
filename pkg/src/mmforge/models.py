import hashlib
import json
from datetime import date
from pathlib import Path
from typing import Literal, Self

from pydantic import BaseModel, ConfigDict, Field, model_validator

from mmforge.types import AdaptScope, DecoderKind, ModelVariant, SplitName


class StrictModel(BaseModel):
    """Configuration section that rejects unknown keys."""

    model_config = ConfigDict(extra="forbid")


class ModelConfig(StrictModel):
    """Architecture and ablation switches for one forecaster."""

    variant: ModelVariant = "mmformer"
    lookback: int = Field(default=96, ge=1)
    horizon: int = Field(default=24, ge=1)
    num_features: int = Field(default=1, ge=1)
    model_dim: int = Field(default=32, ge=1)
    num_heads: int = Field(default=4, ge=1)
    num_layers: int = Field(default=2, ge=1)
    ffn_dim: int = Field(default=64, ge=1)
    dropout: float = Field(default=0.1, ge=0.0, lt=1.0)
    mc_passes: int = Field(default=16, ge=1)
    layer_norm_eps: float = Field(default=1e-5, gt=0.0)
    decoder: DecoderKind = "direct"
    time_encoding: bool = True
    mc_dropout_in_training: bool = True
    disable_maml: bool = False
    disable_mc_dropout: bool = False

    @model_validator(mode="after")
    def _heads_divide_width(self) -> Self:
        if self.model_dim % self.num_heads != 0:
            raise ValueError(
                f"model_dim {self.model_dim} is not divisible by "
                f"num_heads {self.num_heads}"
            )
        return self

    @property
    def variate_tokens(self) -> bool:
        """Whether tokens are per-feature series rather than time steps."""
        return self.variant != "temporal_transformer"

    @property
    def uses_maml(self) -> bool:
        """Whether training goes through the meta-learning loop."""
        return self.variant == "mmformer" and not self.disable_maml

    @property
    def uses_mc_dropout(self) -> bool:
        """Whether inference averages stochastic dropout passes."""
        return self.variant == "mmformer" and not self.disable_mc_dropout

    @property
    def uses_time_encoding(self) -> bool:
        """Whether the variate embedding carries a per-position bias."""
        return self.variant == "mmformer" and self.time_encoding


class MetaConfig(StrictModel):
    """Inner/outer loop settings for attention adaptation."""

    inner_lr: float = Field(default=0.01, ge=0.0, allow_inf_nan=False)
    meta_lr: float = Field(default=0.01, ge=0.0, allow_inf_nan=False)
    inner_steps: int = Field(default=1, ge=1)
    tasks_per_meta_batch: int = Field(default=4, ge=1)
    support_size: int = Field(default=4, ge=1)
    query_size: int = Field(default=4, ge=1)
    adapt_scope: AdaptScope = "attention_only"
    first_order: bool = True


class TrainingConfig(StrictModel):
    """Epoch budget and batching shared by both training paths."""

    epochs: int = Field(default=10, ge=0)
    batch_size: int = Field(default=8, ge=1)
    meta_batches_per_epoch: int = Field(default=8, ge=1)
    train_stride: int = Field(default=1, ge=1)
    eval_stride: int | None = Field(default=None, ge=1)


class DataConfig(StrictModel):
    """Where data comes from and how it is preprocessed and split.

    ``outlier_z`` is at least 1.5: the clipping band then always contains
    the middle deviations that define the MAD, so a second pass changes
    nothing.
    """

    raw_path: Path | None = None
    processed_dir: Path | None = None
    entity_column: str = "entity"
    timestamp_column: str = "timestamp"
    features: list[str] | None = None
    train_len: int | None = Field(default=None, ge=1)
    val_len: int | None = Field(default=None, ge=0)
    test_len: int | None = Field(default=None, ge=0)
    outlier_z: float | None = Field(default=6.0, ge=1.5)
    drop_constant_features: bool = False
    variance_floor: float = Field(default=1e-8, ge=0.0)


class EvaluationConfig(StrictModel):
    """How forecasts are scored."""

    split: SplitName = "test"
    mc: bool = True
    denormalized: bool = False
    horizons: list[int] | None = None
    mape_eps: float = Field(default=1e-6, gt=0.0)
    lowest_k: int = Field(default=5, ge=0)


class FeatureSpec(StrictModel):
    """Trend, seasonality and AR(1) noise for one synthetic feature."""

    intercept: float = 0.0
    trend_slope: float = 0.0
    period: float = Field(default=24.0, gt=0.0)
    amplitude: float = 1.0
    noise_sigma: float = Field(default=0.1, ge=0.0)
    ar_coef: float = Field(default=0.5, gt=-1.0, lt=1.0)


class SynthSpec(StrictModel):
    """Per-feature signal definitions plus cross-feature noise coupling."""

    features: list[FeatureSpec] = Field(min_length=1)
    coupling: list[list[float]] | None = None
    random_phase: bool = True
    start_date: date | None = None

    @model_validator(mode="after")
    def _coupling_is_square(self) -> Self:
        if self.coupling is None:
            return self
        n = len(self.features)
        if len(self.coupling) != n or any(len(r) != n for r in self.coupling):
            raise ValueError(f"coupling must be a {n}x{n} matrix")
        return self


class SynthConfig(StrictModel):
    """Shape of a generated dataset."""

    entities: int = Field(default=20, ge=1)
    length: int = Field(default=400, ge=2)
    features: int = Field(default=3, ge=1)
    spec: SynthSpec | None = None


class RunConfig(StrictModel):
    """Fully resolved configuration of one command invocation."""

    model: ModelConfig = Field(default_factory=ModelConfig)
    meta: MetaConfig = Field(default_factory=MetaConfig)
    training: TrainingConfig = Field(default_factory=TrainingConfig)
    data: DataConfig = Field(default_factory=DataConfig)
    evaluation: EvaluationConfig = Field(default_factory=EvaluationConfig)
    synth: SynthConfig = Field(default_factory=SynthConfig)
    seed: int = Field(default=0, ge=0, lt=2**64)
    seeds: list[int] = Field(default_factory=lambda: [0, 1, 2])
    output_dir: Path | None = None

    def canonical_json(self) -> str:
        """Key-sorted JSON of everything except the output location.

        Returns:
            The canonical serialization.
        """
        payload = self.model_dump(mode="json", exclude={"output_dir"})
        return json.dumps(payload, sort_keys=True, indent=2)

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON, stable under key reordering.

        Returns:
            The hex digest.
        """
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


class ProgressUpdate(BaseModel):
    """A progress update during pipeline execution."""

    stage: str
    current: int
    total: int
    message: str


class EpochRecord(BaseModel):
    """Losses observed in one training epoch."""

    epoch: int
    train_loss: float
    val_mse: float


class TrainingHistory(BaseModel):
    """Per-epoch losses; the mode decides the CSV column names."""

    mode: Literal["maml", "plain"]
    records: list[EpochRecord] = Field(default_factory=list)

    @property
    def columns(self) -> list[str]:
        """CSV header for this training path."""
        loss = "train_meta_loss" if self.mode == "maml" else "train_mse"
        return ["epoch", loss, "val_mse"]

    def rows(self) -> list[dict[str, float | int]]:
        """Records keyed by ``columns``.

        Returns:
            One dict per epoch.
        """
        _, loss, _ = self.columns
        return [
            {"epoch": r.epoch, loss: r.train_loss, "val_mse": r.val_mse}
            for r in self.records
        ]


class RunMetadata(BaseModel):
    """Provenance attached to every report."""

    config_hash: str
    seed: int
    version: str
    variant: str
    flags: dict[str, bool | int | float | str] = Field(default_factory=dict)


class FeatureMetrics(BaseModel):
    """Scores for a single feature."""

    mse: float = Field(ge=0.0)
    mae: float = Field(ge=0.0)
    mape_percent: float | None = Field(default=None, ge=0.0)
    n_points: int = Field(ge=0)
    n_excluded_mape: int = Field(ge=0)


class HorizonMetrics(BaseModel):
    """Scores over the first ``horizon`` forecast steps."""

    horizon: int
    mse: float = Field(ge=0.0)
    mae: float = Field(ge=0.0)
    mape_percent: float = Field(ge=0.0)


class WindowError(BaseModel):
    """Error of a single forecast window."""

    entity: str
    start_index: int
    target_start: str
    mse: float


class MetricsReport(BaseModel):
    """Overall and per-feature MSE, MAE and MAPE for one evaluation."""

    mse: float = Field(ge=0.0)
    mae: float = Field(ge=0.0)
    mape_percent: float = Field(ge=0.0)
    n_points: int = Field(ge=0)
    n_excluded_mape: int = Field(ge=0)
    per_feature: dict[str, FeatureMetrics] = Field(default_factory=dict)
    per_horizon: list[HorizonMetrics] = Field(default_factory=list)
    lowest_error_windows: list[WindowError] = Field(default_factory=list)
    split: SplitName = "test"
    denormalized: bool = False
    metadata: RunMetadata | None = None

    @model_validator(mode="after")
    def _excluded_within_points(self) -> Self:
        if self.n_excluded_mape > self.n_points:
            raise ValueError("n_excluded_mape exceeds n_points")
        return self


class GridRun(BaseModel):
    """One (variant, seed) cell of an ablation or comparison grid."""

    variant: str
    seed: int
    flags: dict[str, bool] = Field(default_factory=dict)
    report: MetricsReport


class GridMedian(BaseModel):
    """Median scores of one variant across seeds."""

    variant: str
    mse: float
    mae: float
    mape_percent: float
    n_points: int
    n_excluded_mape: int


class AblationGrid(BaseModel):
    """All runs of a grid plus per-variant medians."""

    runs: list[GridRun] = Field(default_factory=list)
    medians: list[GridMedian] = Field(default_factory=list)

    @model_validator(mode="after")
    def _unique_cells(self) -> Self:
        cells = [(r.variant, r.seed) for r in self.runs]
        if len(cells) != len(set(cells)):
            raise ValueError("grid contains duplicate (variant, seed) runs")
        return self

    @property
    def variants(self) -> list[str]:
        """Variant names in first-run order."""
        return list(dict.fromkeys(r.variant for r in self.runs))

    def median(self, variant: str) -> GridMedian:
        """Median row for ``variant``.

        Returns:
            The aggregated scores.

        Raises:
            KeyError: If the variant has no median row.
        """
        for row in self.medians:
            if row.variant == variant:
                return row
        raise KeyError(variant)

    def rows(self) -> list[dict[str, str | int | float]]:
        """Flat CSV rows: every run, then medians when seeds > 1.

        Returns:
            Dicts with the grid CSV columns.
        """
        rows: list[dict[str, str | int | float]] = [
            {
                "variant": r.variant,
                "seed": r.seed,
                "mse": r.report.mse,
                "mae": r.report.mae,
                "mape_percent": r.report.mape_percent,
                "n_points": r.report.n_points,
                "n_excluded_mape": r.report.n_excluded_mape,
            }
            for r in self.runs
        ]
        if len({r.seed for r in self.runs}) > 1:
            rows.extend(
                {
                    "variant": m.variant,
                    "seed": "median",
                    "mse": m.mse,
                    "mae": m.mae,
                    "mape_percent": m.mape_percent,
                    "n_points": m.n_points,
                    "n_excluded_mape": m.n_excluded_mape,
                }
                for m in self.medians
            )
        return rows


class FeatureCounts(BaseModel):
    """Imputation and clipping counts for one feature."""

    imputed: int = 0
    clipped: int = 0


class ImputationReport(BaseModel):
    """What ``impute_and_clip`` changed, per feature."""

    outlier_z: float | None
    per_feature: dict[str, FeatureCounts] = Field(default_factory=dict)

    @property
    def imputations(self) -> int:  # noqa: D102
        return sum(c.imputed for c in self.per_feature.values())

    @property
    def clips(self) -> int:  # noqa: D102
        return sum(c.clipped for c in self.per_feature.values())


class IntegrityReport(BaseModel):
    """Outcome of the integrity check with summary counts."""

    violations: list[str] = Field(default_factory=list)
    n_entities: int
    n_timestamps: int
    n_features: int
    n_missing: int
    n_non_finite: int

    @property
    def ok(self) -> bool:  # noqa: D102
        return not self.violations


class FeatureScore(BaseModel):
    """Ranking statistics for one feature."""

    name: str
    variance: float
    mean_abs_correlation: float
    near_constant: bool


class PreprocessReport(BaseModel):
    """Everything ``cmd_preprocess`` did, in order."""

    imputation: ImputationReport
    integrity: IntegrityReport
    ranking: list[FeatureScore] = Field(default_factory=list)
    dropped_features: list[str] = Field(default_factory=list)
    split: tuple[int, int, int]
