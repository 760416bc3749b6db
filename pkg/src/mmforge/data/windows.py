"""Chronological splits and sliding windows."""

import logging
from collections import defaultdict

from mmforge.data.dataset import MtsDataset, SplitBounds, WindowSample
from mmforge.exceptions import DataError
from mmforge.tensor.engine import Tensor
from mmforge.types import SplitName

logger = logging.getLogger(__name__)


def chronological_split(
    ds: MtsDataset, train_len: int, val_len: int, test_len: int
) -> MtsDataset:
    """Cut the time axis into consecutive train, val and test ranges.

    Returns:
        The dataset with its split set.

    Raises:
        DataError: If the lengths do not sum to the series length.
    """
    if min(train_len, val_len, test_len) < 0 or train_len < 1:
        raise DataError(
            f"invalid split lengths ({train_len}, {val_len}, {test_len})"
        )
    if train_len + val_len + test_len != ds.length:
        raise DataError(
            f"split lengths ({train_len}, {val_len}, {test_len}) sum to "
            f"{train_len + val_len + test_len}, series length is {ds.length}"
        )
    bounds = SplitBounds(
        train_end=train_len, val_end=train_len + val_len, length=ds.length
    )
    return ds.replace(split=bounds)


def default_split_lengths(length: int) -> tuple[int, int, int]:
    """A 70/20/10 split that sums to ``length``.

    Returns:
        ``(train_len, val_len, test_len)``.
    """
    train_len = max(1, int(length * 0.7))
    val_len = int(length * 0.2)
    return train_len, val_len, length - train_len - val_len


def window_count(split_len: int, lookback: int, horizon: int, stride: int) -> int:
    """Windows per entity: ``floor((n - L - Hz) / stride) + 1``, or 0.

    Returns:
        The count.
    """
    span = split_len - lookback - horizon
    if span < 0:
        return 0
    return span // stride + 1


def make_windows(
    ds: MtsDataset,
    split: SplitName,
    lookback: int,
    horizon: int,
    stride: int = 1,
) -> list[WindowSample]:
    """Slide a lookback+horizon window over each entity inside ``split``.

    Windows start at offsets 0, stride, 2·stride, ... from the split start
    and never cross the split boundary.

    Returns:
        Windows in entity-major, start-ascending order; empty (with a
        warning) when the split is shorter than ``lookback + horizon``.

    Raises:
        ValueError: If lookback, horizon or stride is not positive.
    """
    if lookback < 1 or horizon < 1 or stride < 1:
        raise ValueError(
            f"lookback, horizon and stride must be positive: "
            f"{lookback}, {horizon}, {stride}"
        )
    start, stop = ds.split_range(split)
    n = window_count(stop - start, lookback, horizon, stride)
    if n == 0:
        logger.warning(
            f"Split '{split}' has {stop - start} steps, fewer than "
            f"lookback {lookback} + horizon {horizon}; no windows"
        )
        return []

    samples = []
    for e, entity in enumerate(ds.entities):
        for k in range(n):
            s = start + k * stride
            samples.append(
                WindowSample(
                    entity_id=entity,
                    entity_index=e,
                    start_index=s,
                    input=Tensor(ds.values[e, s : s + lookback, :]),
                    target=Tensor(
                        ds.values[e, s + lookback : s + lookback + horizon, :]
                    ),
                )
            )
    logger.debug(f"Built {len(samples)} '{split}' windows")
    return samples


def group_by_entity(
    samples: list[WindowSample],
) -> dict[str, list[WindowSample]]:
    """Bucket windows by entity, keeping first-seen entity order.

    Returns:
        ``entity_id -> windows``.
    """
    groups: dict[str, list[WindowSample]] = defaultdict(list)
    for sample in samples:
        groups[sample.entity_id].append(sample)
    return dict(groups)
