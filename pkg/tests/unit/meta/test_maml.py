from collections.abc import Sequence

import numpy as np
import pytest

from mmforge.data.dataset import WindowSample
from mmforge.exceptions import ConfigurationError, NumericError
from mmforge.forecasting import Forecaster, ParamSet
from mmforge.meta import Task, inner_adapt, meta_step
from mmforge.models import MetaConfig
from mmforge.tensor import engine as te
from mmforge.tensor.engine import Tensor
from mmforge.tensor.rng import Rng
from tests.utils import tiny_model_config

WEIGHT = "blocks.0.attn.w_q"
OTHER = "head.b"


def _window(start: int, value: float) -> WindowSample:
    return WindowSample(
        entity_id="e0",
        entity_index=0,
        start_index=start,
        input=Tensor([[value]]),
        target=Tensor([[value]]),
    )


def _task(centre: float = 3.0, index: int = 0) -> Task:
    return Task(
        entity_id="e0",
        support=(_window(0, centre),),
        query=(_window(1, centre),),
        horizon=1,
        index=index,
    )


def quadratic_loss(
    params: ParamSet, samples: Sequence[WindowSample], rng: Rng
) -> Tensor:
    """0.5 (theta - c)^2 summed over samples, c the sample target."""
    theta = params[WEIGHT]
    total: Tensor | None = None
    for s in samples:
        diff = te.sub(theta, te.reshape(s.target, theta.shape))
        term = te.mul(te.sum(te.mul(diff, diff)), 0.5)
        total = term if total is None else te.add(total, term)
    assert total is not None
    return total


def _params(theta: float = 0.0) -> ParamSet:
    return ParamSet(
        {
            WEIGHT: Tensor([theta], requires_grad=True),
            OTHER: Tensor([1.0], requires_grad=True),
        }
    )


def test_zero_inner_rate_returns_copy() -> None:
    params = _params(0.5)
    adapted = inner_adapt(
        params, _task(), MetaConfig(inner_lr=0.0), quadratic_loss, Rng(0)
    )
    assert adapted.equals(params)
    assert adapted[WEIGHT] is not params[WEIGHT]


def test_unit_rate_single_step_lands_on_target() -> None:
    adapted = inner_adapt(
        _params(0.0),
        _task(3.0),
        MetaConfig(inner_lr=1.0, inner_steps=1),
        quadratic_loss,
        Rng(0),
    )
    np.testing.assert_allclose(adapted[WEIGHT].data, [3.0])


def test_support_loss_decreases_each_step() -> None:
    task = _task(2.0)
    config = MetaConfig(inner_lr=0.1, inner_steps=1)
    params = _params(-1.0)
    losses = [quadratic_loss(params, task.support, Rng(0)).item()]
    for _ in range(2):
        params = inner_adapt(params, task, config, quadratic_loss, Rng(0))
        losses.append(quadratic_loss(params, task.support, Rng(0)).item())
    assert losses[0] > losses[1] > losses[2]


def test_inner_loop_respects_attention_scope() -> None:
    def both_loss(
        params: ParamSet, samples: Sequence[WindowSample], rng: Rng
    ) -> Tensor:
        return te.add(
            quadratic_loss(params, samples, rng), te.sum(params[OTHER])
        )

    adapted = inner_adapt(
        _params(0.0),
        _task(3.0),
        MetaConfig(inner_lr=0.5, adapt_scope="attention_only"),
        both_loss,
        Rng(0),
    )
    np.testing.assert_array_equal(adapted[OTHER].data, [1.0])
    assert adapted[WEIGHT].data[0] != 0.0

    everything = inner_adapt(
        _params(0.0),
        _task(3.0),
        MetaConfig(inner_lr=0.5, adapt_scope="all_params"),
        both_loss,
        Rng(0),
    )
    np.testing.assert_allclose(everything[OTHER].data, [0.5])


def test_inner_adapt_leaves_input_untouched() -> None:
    params = _params(0.0)
    before = params.to_bytes()
    inner_adapt(
        params, _task(), MetaConfig(inner_lr=0.3), quadratic_loss, Rng(0)
    )
    assert params.to_bytes() == before


def test_zero_meta_rate_freezes_params_but_reports_loss() -> None:
    params = _params(1.0)
    updated, loss = meta_step(
        params,
        [_task(3.0)],
        MetaConfig(inner_lr=0.0, meta_lr=0.0),
        quadratic_loss,
        Rng(0),
    )
    assert updated.equals(params)
    assert loss == pytest.approx(2.0)


def test_single_task_without_adaptation_is_a_plain_step() -> None:
    beta = 0.25
    updated, _ = meta_step(
        _params(1.0),
        [_task(3.0)],
        MetaConfig(inner_lr=0.0, meta_lr=beta),
        quadratic_loss,
        Rng(0),
    )
    np.testing.assert_allclose(updated[WEIGHT].data, [1.0 - beta * (1.0 - 3.0)])


def test_duplicated_task_doubles_loss_and_step() -> None:
    config = MetaConfig(inner_lr=0.1, meta_lr=0.05)
    once, loss_once = meta_step(
        _params(1.0), [_task(3.0)], config, quadratic_loss, Rng(0)
    )
    twice, loss_twice = meta_step(
        _params(1.0),
        [_task(3.0, 0), _task(3.0, 1)],
        config,
        quadratic_loss,
        Rng(0),
    )
    assert loss_twice == pytest.approx(2.0 * loss_once)
    step_once = once[WEIGHT].data[0] - 1.0
    step_twice = twice[WEIGHT].data[0] - 1.0
    assert step_twice == pytest.approx(2.0 * step_once)


def test_outer_update_reaches_every_parameter() -> None:
    def both_loss(
        params: ParamSet, samples: Sequence[WindowSample], rng: Rng
    ) -> Tensor:
        return te.add(
            quadratic_loss(params, samples, rng), te.sum(params[OTHER])
        )

    updated, _ = meta_step(
        _params(0.0),
        [_task(3.0)],
        MetaConfig(inner_lr=0.1, meta_lr=0.5),
        both_loss,
        Rng(0),
    )
    np.testing.assert_allclose(updated[OTHER].data, [0.5])


def test_second_order_is_rejected() -> None:
    with pytest.raises(ConfigurationError):
        meta_step(
            _params(),
            [_task()],
            MetaConfig(first_order=False),
            quadratic_loss,
            Rng(0),
        )


def test_empty_task_list() -> None:
    with pytest.raises(ValueError):
        meta_step(_params(), [], MetaConfig(), quadratic_loss, Rng(0))


def test_non_finite_loss_names_task() -> None:
    def bad_loss(
        params: ParamSet, samples: Sequence[WindowSample], rng: Rng
    ) -> Tensor:
        return te.mul(quadratic_loss(params, samples, rng), float("inf"))

    with pytest.raises(NumericError) as exc:
        meta_step(
            _params(), [_task(index=7)], MetaConfig(), bad_loss, Rng(0)
        )
    assert exc.value.task_id == "7:e0"


def test_thread_count_does_not_change_meta_step() -> None:
    forecaster = Forecaster(tiny_model_config(num_features=1))
    params = forecaster.init_params(Rng(0))
    windows = [
        WindowSample(
            "e0",
            0,
            s,
            Tensor(Rng(s).normal(1.0, (4, 1))),
            Tensor(Rng(100 + s).normal(1.0, (2, 1))),
        )
        for s in range(4)
    ]
    tasks = [
        Task("e0", (windows[0],), (windows[1],), horizon=2, index=0),
        Task("e0", (windows[2],), (windows[3],), horizon=2, index=1),
    ]
    config = MetaConfig(inner_lr=0.05, meta_lr=0.01)
    serial, loss_serial = meta_step(
        params, tasks, config, forecaster.window_loss, Rng(1), threads=1
    )
    parallel, loss_parallel = meta_step(
        params, tasks, config, forecaster.window_loss, Rng(1), threads=2
    )
    assert serial.equals(parallel)
    assert loss_serial == loss_parallel
