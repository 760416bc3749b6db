"""Imputation, outlier clipping, normalization and integrity checks."""

import logging
import warnings

import numpy as np

from mmforge.data.dataset import MtsDataset, NormStats
from mmforge.exceptions import DataError
from mmforge.models import (
    FeatureCounts,
    FeatureScore,
    ImputationReport,
    IntegrityReport,
)
from mmforge.types import FloatArray

logger = logging.getLogger(__name__)

MAD_SCALE = 1.4826


def _fill_series(series: FloatArray) -> tuple[FloatArray, int]:
    """Interpolate interior gaps, carry edge values outwards.

    Returns:
        The filled series and the number of cells filled.
    """
    missing = np.isnan(series)
    n_missing = int(missing.sum())
    if n_missing == 0:
        return series, 0
    idx = np.arange(series.size)
    observed = ~missing
    filled = series.copy()
    filled[missing] = np.interp(idx[missing], idx[observed], series[observed])
    return filled, n_missing


def _clip_series(series: FloatArray, outlier_z: float) -> tuple[FloatArray, int]:
    """Clip to ``median ± z·1.4826·MAD``.

    With a zero MAD the band collapses onto the median. Repeating the
    clip is a no-op once ``outlier_z >= 1.5``.

    Returns:
        The clipped series and the number of cells changed.
    """
    median = float(np.median(series))
    mad = float(np.median(np.abs(series - median)))
    half_width = outlier_z * MAD_SCALE * mad
    clipped = np.clip(series, median - half_width, median + half_width)
    return clipped, int(np.count_nonzero(clipped != series))


def impute_and_clip(
    ds: MtsDataset, outlier_z: float | None = 6.0
) -> tuple[MtsDataset, ImputationReport]:
    """Fill missing cells, then clip robust outliers, per entity and feature.

    Interior gaps are linearly interpolated; leading and trailing gaps take
    the nearest observed value. Clipping uses the robust z-score
    ``|x - median| / (1.4826·MAD)``; ``outlier_z=None`` skips it.

    Returns:
        The cleaned dataset and per-feature counts.

    Raises:
        DataError: If a series has fewer than 2 observed points.
    """
    values = ds.values.copy()
    counts = {name: FeatureCounts() for name in ds.feature_names}
    for e, entity in enumerate(ds.entities):
        for v, feature in enumerate(ds.feature_names):
            series = values[e, :, v]
            if int(np.count_nonzero(~np.isnan(series))) < 2:
                raise DataError(
                    f"series for entity '{entity}', feature '{feature}' "
                    "has fewer than 2 observed values"
                )
            series, imputed = _fill_series(series)
            clipped = 0
            if outlier_z is not None:
                series, clipped = _clip_series(series, outlier_z)
            values[e, :, v] = series
            counts[feature].imputed += imputed
            counts[feature].clipped += clipped

    report = ImputationReport(outlier_z=outlier_z, per_feature=counts)
    logger.info(
        f"Imputed {report.imputations} cells, clipped {report.clips} cells"
    )
    return ds.replace(values=values), report


def normalize(ds: MtsDataset) -> MtsDataset:
    """Z-score every feature with training-range statistics.

    Returns:
        The normalized dataset carrying its ``NormStats``.

    Raises:
        DataError: If no split is set, values are missing, or a feature is
            constant over the training range.
    """
    start, stop = ds.split_range("train")
    if np.isnan(ds.values).any():
        raise DataError("cannot normalize a dataset with missing values")
    train = ds.values[:, start:stop, :].reshape(-1, ds.num_features)
    mu = train.mean(axis=0)
    sigma = train.std(axis=0)
    constant = [n for n, s in zip(ds.feature_names, sigma) if s == 0.0]
    if constant:
        raise DataError(
            f"feature(s) constant over the training range: "
            f"{', '.join(constant)}"
        )
    stats = NormStats(mu=mu, sigma=sigma)
    logger.debug(f"Normalization stats mu={mu.tolist()} sigma={sigma.tolist()}")
    return ds.replace(values=stats.normalize(ds.values), norm_stats=stats)


def denormalize(ds: MtsDataset, values: FloatArray) -> FloatArray:
    """Map normalized values of ``ds`` back to raw units.

    Returns:
        ``values·σ + μ`` per feature.
    """
    return ds.denormalize(values)


def integrity_check(
    ds: MtsDataset, variance_floor: float = 0.0
) -> IntegrityReport:
    """Collect every violation of the processed-dataset contract.

    Checked: no missing cells, finite values, strictly increasing and
    uniformly spaced timestamps, and per-feature spread above
    ``variance_floor``.

    Returns:
        The report; ``ok`` is true when nothing was violated.
    """
    violations: list[str] = []
    nan_cells = np.argwhere(np.isnan(ds.values))
    for e, t, v in nan_cells[:20]:
        violations.append(
            f"missing value at entity '{ds.entities[e]}', "
            f"timestamp {ds.timestamps[t]}, feature '{ds.feature_names[v]}'"
        )
    if len(nan_cells) > 20:
        violations.append(f"... {len(nan_cells) - 20} more missing values")

    inf_cells = np.argwhere(np.isinf(ds.values))
    for e, t, v in inf_cells[:20]:
        violations.append(
            f"non-finite value at entity '{ds.entities[e]}', "
            f"timestamp {ds.timestamps[t]}, feature '{ds.feature_names[v]}'"
        )

    steps = np.diff(ds.time_index)
    if steps.size and (steps <= 0).any():
        violations.append("timestamps are not strictly increasing")
    elif steps.size:
        expected = int(steps[0])
        for i in np.flatnonzero(steps != expected):
            violations.append(
                f"timestamp gap between {ds.timestamps[i]} and "
                f"{ds.timestamps[i + 1]} (spacing {int(steps[i])}, "
                f"expected {expected})"
            )

    if ds.split is not None and not nan_cells.size and not inf_cells.size:
        start, stop = ds.split_range("train")
        sigma = ds.values[:, start:stop, :].reshape(-1, ds.num_features).std(0)
        for name, s in zip(ds.feature_names, sigma):
            if s <= variance_floor:
                violations.append(
                    f"feature '{name}' has no spread on the training range"
                )

    return IntegrityReport(
        violations=violations,
        n_entities=ds.num_entities,
        n_timestamps=ds.length,
        n_features=ds.num_features,
        n_missing=len(nan_cells),
        n_non_finite=len(inf_cells),
    )


def rank_features(
    ds: MtsDataset, variance_floor: float = 1e-8
) -> list[FeatureScore]:
    """Score features by training-range variance and cross-correlation.

    Missing cells are skipped. Correlation uses the rows that are complete
    across every column with at least one observation.

    Returns:
        Scores sorted by descending variance, ties by name.
    """
    start, stop = (0, ds.length) if ds.split is None else ds.split_range("train")
    flat = ds.values[:, start:stop, :].reshape(-1, ds.num_features)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        variance = np.nanvar(flat, axis=0)
    # An all-missing column counts as zero spread.
    variance = np.nan_to_num(variance)
    near_constant = variance <= variance_floor
    observed = ~np.isnan(flat).all(axis=0)
    complete = flat[:, observed]
    complete = complete[~np.isnan(complete).any(axis=1)]
    corr = np.zeros((ds.num_features, ds.num_features))
    if observed.sum() > 1 and len(complete) > 1:
        with np.errstate(invalid="ignore", divide="ignore"):
            sub = np.corrcoef(complete, rowvar=False)
        corr[np.ix_(observed, observed)] = np.nan_to_num(np.abs(sub))
    np.fill_diagonal(corr, 0.0)
    mean_abs = corr.sum(axis=1) / max(ds.num_features - 1, 1)
    scores = [
        FeatureScore(
            name=name,
            variance=float(var),
            mean_abs_correlation=float(c),
            near_constant=bool(flag),
        )
        for name, var, c, flag in zip(
            ds.feature_names, variance, mean_abs, near_constant
        )
    ]
    return sorted(scores, key=lambda s: (-s.variance, s.name))


def select_features(ds: MtsDataset, names: list[str]) -> MtsDataset:
    """Keep only ``names``, in the given order.

    Returns:
        The narrowed dataset; normalization stats are narrowed too.

    Raises:
        DataError: If a name is unknown or nothing would remain.
    """
    if not names:
        raise DataError("no features selected")
    unknown = [n for n in names if n not in ds.feature_names]
    if unknown:
        raise DataError(f"unknown feature(s): {', '.join(unknown)}")
    idx = [ds.feature_names.index(n) for n in names]
    stats = ds.norm_stats
    if stats is not None:
        stats = NormStats(mu=stats.mu[idx], sigma=stats.sigma[idx])
    return ds.replace(
        values=ds.values[:, :, idx],
        feature_names=tuple(names),
        norm_stats=stats,
    )
