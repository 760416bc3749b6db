"""Storage package for run directories and processed datasets."""

from mmforge.storage.provider import RunStorage
from mmforge.storage.providers.file import (
    FilesystemRunStorage,
    load_dataset,
    load_norm_stats,
    write_csv,
)
from mmforge.storage.workspace import (
    default_run_dir,
    prepare_run_dir,
    sanitize_filename,
)

__all__ = [
    "FilesystemRunStorage",
    "RunStorage",
    "default_run_dir",
    "load_dataset",
    "load_norm_stats",
    "prepare_run_dir",
    "sanitize_filename",
    "write_csv",
]
