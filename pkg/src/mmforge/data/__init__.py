"""Ingest, clean, split and window multivariate time series."""

from mmforge.data.dataset import MtsDataset, NormStats, SplitBounds, WindowSample
from mmforge.data.loading import CsvSchema, dataset_to_frame, load_csv
from mmforge.data.preprocessing import (
    denormalize,
    impute_and_clip,
    integrity_check,
    normalize,
    rank_features,
    select_features,
)
from mmforge.data.synthetic import default_synth_spec, synth_generate
from mmforge.data.windows import (
    chronological_split,
    group_by_entity,
    make_windows,
    window_count,
)

__all__ = [
    "CsvSchema",
    "MtsDataset",
    "NormStats",
    "SplitBounds",
    "WindowSample",
    "chronological_split",
    "dataset_to_frame",
    "default_synth_spec",
    "denormalize",
    "group_by_entity",
    "impute_and_clip",
    "integrity_check",
    "load_csv",
    "make_windows",
    "normalize",
    "rank_features",
    "select_features",
    "synth_generate",
    "window_count",
]
