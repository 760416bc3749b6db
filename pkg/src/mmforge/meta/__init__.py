"""Task sampling, first-order attention adaptation and the trainer."""

from mmforge.meta.maml import LossFn, inner_adapt, meta_step
from mmforge.meta.tasks import Task, sample_tasks, sample_tasks_from_windows
from mmforge.meta.training import TrainingResult, train

__all__ = [
    "LossFn",
    "Task",
    "TrainingResult",
    "inner_adapt",
    "meta_step",
    "sample_tasks",
    "sample_tasks_from_windows",
    "train",
]
