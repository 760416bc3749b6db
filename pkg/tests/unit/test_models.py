import pytest
from pydantic import ValidationError

from mmforge.models import ModelConfig, RunConfig, TrainingHistory


def test_config_hash_ignores_key_order_and_output_dir() -> None:
    a = RunConfig.model_validate({"seed": 1, "model": {"lookback": 8, "horizon": 2}})
    b = RunConfig.model_validate(
        {"model": {"horizon": 2, "lookback": 8}, "seed": 1, "output_dir": "x"}
    )
    assert a.config_hash() == b.config_hash()
    assert len(a.config_hash()) == 64


def test_config_hash_tracks_values() -> None:
    assert RunConfig(seed=1).config_hash() != RunConfig(seed=2).config_hash()


def test_heads_must_divide_width() -> None:
    with pytest.raises(ValidationError):
        ModelConfig(model_dim=10, num_heads=4)


def test_unknown_field_is_rejected() -> None:
    with pytest.raises(ValidationError):
        ModelConfig.model_validate({"lookbak": 3})


@pytest.mark.parametrize(
    ("settings", "maml", "mc", "time"),
    [
        ({}, True, True, True),
        ({"disable_maml": True}, False, True, True),
        ({"disable_mc_dropout": True}, True, False, True),
        ({"time_encoding": False}, True, True, False),
        ({"variant": "variate_transformer"}, False, False, False),
        ({"variant": "temporal_transformer"}, False, False, False),
    ],
)
def test_variant_switches(
    settings: dict[str, object], maml: bool, mc: bool, time: bool
) -> None:
    config = ModelConfig.model_validate(settings)
    assert config.uses_maml is maml
    assert config.uses_mc_dropout is mc
    assert config.uses_time_encoding is time


def test_history_rows() -> None:
    history = TrainingHistory(mode="plain")
    assert history.columns == ["epoch", "train_mse", "val_mse"]
    assert history.rows() == []
