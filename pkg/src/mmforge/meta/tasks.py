"""Per-entity support/query tasks for attention adaptation."""

import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass

from mmforge.data.dataset import MtsDataset, WindowSample
from mmforge.data.windows import group_by_entity, make_windows
from mmforge.exceptions import DataError
from mmforge.tensor.rng import Rng

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Task:
    """Support and query windows drawn from a single entity."""

    entity_id: str
    support: tuple[WindowSample, ...]
    query: tuple[WindowSample, ...]
    horizon: int
    index: int = 0

    def __post_init__(self) -> None:
        if not self.support or not self.query:
            raise ValueError("a task needs non-empty support and query sets")
        entities = {s.entity_id for s in (*self.support, *self.query)}
        if entities != {self.entity_id}:
            raise ValueError(
                f"task for '{self.entity_id}' mixes entities {sorted(entities)}"
            )
        support_starts = {s.start_index for s in self.support}
        if support_starts & {s.start_index for s in self.query}:
            raise ValueError("support and query windows overlap")

    @property
    def task_id(self) -> str:
        """Stable label used in error messages."""
        return f"{self.index}:{self.entity_id}"


def sample_tasks_from_windows(
    windows: Mapping[str, Sequence[WindowSample]],
    k: int,
    rng: Rng,
    support_size: int = 4,
    query_size: int = 4,
) -> list[Task]:
    """Draw ``k`` tasks from pre-built per-entity windows.

    Task i uses ``rng.substream(i)``: an entity uniformly among those with at
    least ``support_size + query_size`` windows, then that many distinct
    windows split into support and query.

    Returns:
        The tasks, in draw order.

    Raises:
        DataError: If no entity has enough windows.
    """
    need = support_size + query_size
    eligible = sorted(e for e, ws in windows.items() if len(ws) >= need)
    if not eligible:
        raise DataError(
            f"no entity has {need} training windows for a "
            f"{support_size}+{query_size} task"
        )

    tasks = []
    for i in range(k):
        stream = rng.substream(i)
        entity = eligible[stream.integer(len(eligible))]
        pool = windows[entity]
        picks = stream.permutation(len(pool))[:need]
        tasks.append(
            Task(
                entity_id=entity,
                support=tuple(pool[j] for j in picks[:support_size]),
                query=tuple(pool[j] for j in picks[support_size:]),
                horizon=pool[0].horizon,
                index=i,
            )
        )
    return tasks


def sample_tasks(
    dataset: MtsDataset,
    k: int,
    rng: Rng,
    *,
    lookback: int,
    horizon: int,
    support_size: int = 4,
    query_size: int = 4,
    stride: int = 1,
) -> list[Task]:
    """Draw ``k`` tasks from the training windows of ``dataset``.

    Returns:
        The tasks.

    Raises:
        DataError: If no entity is long enough for one task.
    """
    windows = make_windows(dataset, "train", lookback, horizon, stride)
    return sample_tasks_from_windows(
        group_by_entity(windows), k, rng, support_size, query_size
    )
