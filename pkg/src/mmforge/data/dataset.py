"""The entity × time × feature cube and its windows."""

import dataclasses
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from mmforge.exceptions import DataError
from mmforge.tensor.engine import Tensor
from mmforge.types import FloatArray, SplitName


@dataclass(frozen=True)
class NormStats:
    """Per-feature mean and standard deviation from the training range."""

    mu: FloatArray
    sigma: FloatArray

    def normalize(self, values: FloatArray) -> FloatArray:
        """Z-score ``values`` along their last axis.

        Returns:
            ``(values - mu) / sigma``.
        """
        return (values - self.mu) / self.sigma

    def denormalize(self, values: FloatArray) -> FloatArray:
        """Invert ``normalize``.

        Returns:
            ``values * sigma + mu``.
        """
        return values * self.sigma + self.mu


@dataclass(frozen=True)
class SplitBounds:
    """Chronological boundaries: train [0, train_end), val, test."""

    train_end: int
    val_end: int
    length: int

    def range_of(self, split: SplitName) -> tuple[int, int]:
        """Half-open index range of ``split``.

        Returns:
            ``(start, stop)``.
        """
        match split:
            case "train":
                return 0, self.train_end
            case "val":
                return self.train_end, self.val_end
            case "test":
                return self.val_end, self.length
        raise ValueError(f"Unknown split: {split}")

    @property
    def lengths(self) -> tuple[int, int, int]:
        """Lengths of the train, val and test ranges."""
        return (
            self.train_end,
            self.val_end - self.train_end,
            self.length - self.val_end,
        )


@dataclass(frozen=True)
class MtsDataset:
    """Values ``[E × T × V]`` with NaN as the missing marker.

    ``time_index`` holds the numeric position of each timestamp (integer
    index, or seconds since the epoch for dates) and ``timestamps`` the
    labels written back out.
    """

    entities: tuple[str, ...]
    timestamps: tuple[str, ...]
    time_index: npt.NDArray[np.int64]
    values: FloatArray
    feature_names: tuple[str, ...]
    norm_stats: NormStats | None = None
    split: SplitBounds | None = None

    def __post_init__(self) -> None:
        expected = (
            len(self.entities),
            len(self.timestamps),
            len(self.feature_names),
        )
        if self.values.shape != expected:
            raise DataError(
                f"value cube shape {self.values.shape} does not match "
                f"entities × timestamps × features {expected}"
            )

    @property
    def num_entities(self) -> int:  # noqa: D102
        return len(self.entities)

    @property
    def length(self) -> int:  # noqa: D102
        return len(self.timestamps)

    @property
    def num_features(self) -> int:  # noqa: D102
        return len(self.feature_names)

    def replace(self, **changes: object) -> "MtsDataset":
        """Copy with some fields swapped.

        Returns:
            The new dataset.
        """
        return dataclasses.replace(self, **changes)  # type: ignore[arg-type]

    def split_range(self, split: SplitName) -> tuple[int, int]:
        """Index range of ``split``.

        Returns:
            ``(start, stop)``.

        Raises:
            DataError: If no split has been set.
        """
        if self.split is None:
            raise DataError("dataset has no chronological split")
        return self.split.range_of(split)

    def entity_index(self, entity: str) -> int:
        """Position of ``entity`` in the cube.

        Returns:
            The entity's row index.

        Raises:
            DataError: If the entity is unknown; lists the available ids.
        """
        try:
            return self.entities.index(entity)
        except ValueError:
            known = ", ".join(self.entities)
            raise DataError(
                f"unknown entity '{entity}'; available: {known}"
            ) from None

    def time_step(self) -> int:
        """Spacing between consecutive timestamps.

        Returns:
            The first difference of ``time_index`` (1 for a single step).
        """
        if self.length < 2:
            return 1
        return int(self.time_index[1] - self.time_index[0])

    def denormalize(self, values: FloatArray) -> FloatArray:
        """Map normalized values back to raw units.

        Returns:
            The raw-unit values.

        Raises:
            DataError: If the dataset was never normalized.
        """
        if self.norm_stats is None:
            raise DataError("dataset has no normalization statistics")
        return self.norm_stats.denormalize(values)


@dataclass(frozen=True)
class WindowSample:
    """A lookback input and the horizon that follows it, for one entity."""

    entity_id: str
    entity_index: int
    start_index: int
    input: Tensor
    target: Tensor

    @property
    def lookback(self) -> int:  # noqa: D102
        return self.input.shape[0]

    @property
    def horizon(self) -> int:  # noqa: D102
        return self.target.shape[0]

    @property
    def target_start(self) -> int:
        """Index of the first target step."""
        return self.start_index + self.lookback
