import numpy as np
import pytest

from mmforge.data import (
    chronological_split,
    group_by_entity,
    make_windows,
    normalize,
    synth_generate,
)
from mmforge.forecasting import Forecaster, ParamSet
from mmforge.meta import inner_adapt, meta_step, sample_tasks_from_windows
from mmforge.models import MetaConfig, ModelConfig
from mmforge.tensor.rng import Rng

LOOKBACK = 12
HORIZON = 3
META_STEPS = 50


@pytest.fixture(scope="module")
def setting():
    ds = synth_generate(8, 200, 2, None, seed=7)
    ds = normalize(chronological_split(ds, 140, 30, 30))
    forecaster = Forecaster(
        ModelConfig(
            lookback=LOOKBACK,
            horizon=HORIZON,
            num_features=2,
            model_dim=16,
            num_heads=2,
            num_layers=1,
            ffn_dim=32,
            dropout=0.0,
        )
    )
    meta = MetaConfig(inner_lr=0.01, meta_lr=0.02)
    return ds, forecaster, meta


def _meta_train(setting, seed: int) -> tuple[ParamSet, list[float]]:
    ds, forecaster, meta = setting
    windows = group_by_entity(make_windows(ds, "train", LOOKBACK, HORIZON))
    rng = Rng(seed)
    params = forecaster.init_params(rng.substream(0))
    losses = []
    for step in range(META_STEPS):
        step_rng = rng.substream(1).substream(step)
        tasks = sample_tasks_from_windows(
            windows,
            meta.tasks_per_meta_batch,
            step_rng.substream(0),
            meta.support_size,
            meta.query_size,
        )
        params, loss = meta_step(
            params, tasks, meta, forecaster.window_loss, step_rng.substream(1)
        )
        losses.append(loss)
    return params, losses


@pytest.mark.slow
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_meta_loss_trends_down(setting, seed: int) -> None:
    _, losses = _meta_train(setting, seed)
    assert np.median(losses[-10:]) < np.median(losses[:10])


@pytest.mark.slow
def test_adaptation_helps_on_held_out_tasks(setting) -> None:
    ds, forecaster, meta = setting
    params, _ = _meta_train(setting, 0)
    held_out = group_by_entity(make_windows(ds, "test", LOOKBACK, HORIZON))
    tasks = sample_tasks_from_windows(held_out, 50, Rng(99), 4, 4)
    adapt = meta.model_copy(update={"adapt_scope": "all_params"})

    improved = 0
    for task in tasks:
        before = forecaster.window_loss(params, task.query, Rng(0)).item()
        adapted = inner_adapt(
            params, task, adapt, forecaster.window_loss, Rng(0)
        )
        after = forecaster.window_loss(adapted, task.query, Rng(0)).item()
        improved += after < before
    assert improved >= 40
