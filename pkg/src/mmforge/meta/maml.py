"""First-order inner adaptation and outer meta-update."""

import logging
import math
from collections.abc import Callable, Sequence

import numpy as np

from mmforge.concurrency import map_ordered
from mmforge.data.dataset import WindowSample
from mmforge.exceptions import ConfigurationError, NumericError
from mmforge.forecasting.params import ParamSet
from mmforge.meta.tasks import Task
from mmforge.models import MetaConfig
from mmforge.tensor import engine as te
from mmforge.tensor.engine import Tensor
from mmforge.tensor.rng import Rng
from mmforge.types import FloatArray

logger = logging.getLogger(__name__)

LossFn = Callable[[ParamSet, Sequence[WindowSample], Rng], Tensor]


def _finite_loss(loss: Tensor, task: Task, stage: str) -> float:
    value = loss.item()
    if not math.isfinite(value):
        raise NumericError(f"non-finite {stage} loss", task_id=task.task_id)
    return value


def inner_adapt(
    params: ParamSet,
    task: Task,
    config: MetaConfig,
    loss_fn: LossFn,
    rng: Rng,
) -> ParamSet:
    """Take ``inner_steps`` gradient steps on the task's support loss.

    Only parameters in ``config.adapt_scope`` move; the rest are copied.
    Step s draws from ``rng.substream(s)``.

    Returns:
        A fresh adapted parameter set; ``params`` is never modified.

    Raises:
        NumericError: If the support loss is not finite.
    """
    adapted = params.clone()
    if config.inner_lr == 0.0:
        return adapted
    names = params.scope(config.adapt_scope)
    for step in range(config.inner_steps):
        loss = loss_fn(adapted, task.support, rng.substream(step))
        value = _finite_loss(loss, task, "support")
        te.backward(loss)
        adapted = adapted.update(adapted.grads(), config.inner_lr, names)
        logger.debug(f"Task {task.task_id} step {step}: support loss {value}")
    return adapted


def meta_step(
    params: ParamSet,
    tasks: Sequence[Task],
    config: MetaConfig,
    loss_fn: LossFn,
    rng: Rng,
    threads: int | None = None,
) -> tuple[ParamSet, float]:
    """One outer update from the summed post-adaptation query losses.

    The gradient of each task's query loss is taken at its adapted
    parameters and applied to ``params`` directly (first order). Task i
    adapts on ``rng.substream(i).substream(0)`` and scores its query set on
    ``rng.substream(i).substream(1)``; gradients are summed in task order.

    Returns:
        The updated parameters and the pre-update meta loss.

    Raises:
        ConfigurationError: If second-order updates are requested.
        NumericError: If any loss is not finite.
        ValueError: If ``tasks`` is empty.
    """
    if not config.first_order:
        raise ConfigurationError("second-order meta updates are not supported")
    if not tasks:
        raise ValueError("meta_step needs at least one task")

    def _task(i: int) -> tuple[float, dict[str, FloatArray]]:
        task = tasks[i]
        task_rng = rng.substream(i)
        adapted = inner_adapt(params, task, config, loss_fn, task_rng.substream(0))
        loss = loss_fn(adapted, task.query, task_rng.substream(1))
        value = _finite_loss(loss, task, "query")
        te.backward(loss)
        return value, adapted.grads()

    results = map_ordered(_task, list(range(len(tasks))), threads)

    meta_loss = 0.0
    total = {name: np.zeros(t.shape) for name, t in params.items()}
    for value, grads in results:
        meta_loss += value
        for name, g in grads.items():
            total[name] = total[name] + g
    if not math.isfinite(meta_loss):
        raise NumericError("non-finite meta loss")

    return params.update(total, config.meta_lr), meta_loss
