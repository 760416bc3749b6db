"""CSV ingestion into the value cube, and the reverse."""

import logging
import re
from pathlib import Path

import numpy as np
import numpy.typing as npt
import pandas as pd
from pydantic import BaseModel

from mmforge.data.dataset import MtsDataset
from mmforge.exceptions import DataError

logger = logging.getLogger(__name__)

_INTEGER = re.compile(r"^[+-]?\d+$")
_SECONDS = pd.Timedelta(seconds=1)


class CsvSchema(BaseModel):
    """Column layout of an input CSV."""

    entity_column: str = "entity"
    timestamp_column: str = "timestamp"
    features: list[str] | None = None


def parse_timestamps(
    raw: pd.Series,
) -> tuple[pd.Series, dict[int, str]]:
    """Map timestamp labels to sortable integers.

    Integer labels are used as-is; anything else must be ISO-8601 and is
    converted to seconds since the epoch.

    Returns:
        The numeric series and a numeric -> canonical label mapping.

    Raises:
        DataError: If a label is neither an integer nor ISO-8601.
    """
    stripped = raw.str.strip()
    if stripped.map(lambda s: bool(_INTEGER.match(s))).all():
        numeric = stripped.astype(np.int64)
        return numeric, {int(n): str(int(n)) for n in numeric.unique()}

    try:
        parsed = pd.to_datetime(stripped, format="ISO8601")
    except (ValueError, TypeError) as e:
        raise DataError(f"unparseable timestamp: {e}") from e
    numeric = ((parsed - pd.Timestamp(0)) // _SECONDS).astype(np.int64)
    all_dates = bool((parsed == parsed.dt.normalize()).all())
    labels = {
        int(n): (ts.date().isoformat() if all_dates else ts.isoformat())
        for n, ts in zip(numeric, parsed)
    }
    return numeric, labels


def frame_to_dataset(
    df: pd.DataFrame, schema: CsvSchema | None = None
) -> MtsDataset:
    """Assemble the cube from a long-format frame of string cells.

    Rows are sorted ascending by time per entity; cells that do not parse
    as numbers become NaN.

    Returns:
        The dataset, without split or normalization.

    Raises:
        DataError: On empty input, missing columns or duplicate keys.
    """
    schema = schema or CsvSchema()
    if df.empty:
        raise DataError("input has no rows")
    key_cols = [schema.entity_column, schema.timestamp_column]
    missing = [c for c in key_cols if c not in df.columns]
    features = schema.features or [c for c in df.columns if c not in key_cols]
    missing += [f for f in features if f not in df.columns]
    if missing:
        raise DataError(f"missing columns: {', '.join(missing)}")
    if not features:
        raise DataError("no feature columns")

    df = df.copy()
    for column in key_cols:
        df[column] = df[column].astype(str).str.strip()

    numeric, labels = parse_timestamps(df[schema.timestamp_column])
    df["_t"] = numeric.to_numpy()

    # Keys compare on parsed time so "1" and "01" collide.
    duplicated = df.duplicated([schema.entity_column, "_t"], keep=False)
    if duplicated.any():
        dupes = df.loc[duplicated, [schema.entity_column, "_t"]]
        dupes = dupes.drop_duplicates().head(5)
        shown = "; ".join(
            f"{e}@{labels[int(t)]}" for e, t in dupes.itertuples(index=False)
        )
        raise DataError(f"duplicate (entity, timestamp) rows: {shown}")

    entities = list(pd.unique(df[schema.entity_column]))
    times: npt.NDArray[np.int64] = np.sort(df["_t"].unique()).astype(np.int64)

    values = np.full((len(entities), len(times), len(features)), np.nan)
    e_idx = pd.Index(entities).get_indexer(df[schema.entity_column])
    t_idx = pd.Index(times).get_indexer(df["_t"])
    for v, feature in enumerate(features):
        cells = pd.to_numeric(
            df[feature].astype(str).str.strip(), errors="coerce"
        ).to_numpy(dtype=np.float64)
        values[e_idx, t_idx, v] = cells

    logger.debug(
        f"Assembled cube {values.shape} with "
        f"{int(np.isnan(values).sum())} missing cells"
    )
    return MtsDataset(
        entities=tuple(str(e) for e in entities),
        timestamps=tuple(labels[int(t)] for t in times),
        time_index=times,
        values=values,
        feature_names=tuple(features),
    )


def load_csv(path: Path, schema: CsvSchema | None = None) -> MtsDataset:
    """Read ``entity,timestamp,<feature...>`` rows into a dataset.

    Returns:
        The assembled dataset.

    Raises:
        DataError: If the file is missing, empty or malformed.
    """
    if not path.is_file():
        raise DataError(f"input file not found: {path}")
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError as e:
        raise DataError(f"input file is empty: {path}") from e
    logger.info(f"Loaded {len(df)} rows from {path}")
    return frame_to_dataset(df, schema)


def dataset_to_frame(ds: MtsDataset) -> pd.DataFrame:
    """Long-format frame in the loader's input layout.

    Returns:
        One row per (entity, timestamp), entities in cube order.
    """
    e, t = np.meshgrid(
        np.arange(ds.num_entities), np.arange(ds.length), indexing="ij"
    )
    frame = pd.DataFrame(
        {
            "entity": np.asarray(ds.entities, dtype=object)[e.ravel()],
            "timestamp": np.asarray(ds.timestamps, dtype=object)[t.ravel()],
        }
    )
    flat = ds.values.reshape(-1, ds.num_features)
    for v, name in enumerate(ds.feature_names):
        frame[name] = flat[:, v]
    return frame
