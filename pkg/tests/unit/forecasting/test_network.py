import math

import numpy as np
import pytest

from mmforge.data.dataset import WindowSample
from mmforge.exceptions import CheckpointError, DimensionError, NumericError
from mmforge.forecasting import (
    Forecaster,
    ParamSet,
    embed_variate_tokens,
    loss_mse,
    sinusoidal_encoding,
)
from mmforge.forecasting.embedding import embed_temporal_tokens
from mmforge.tensor import engine as te
from mmforge.tensor.engine import Tensor
from mmforge.tensor.gradcheck import grad_check
from mmforge.tensor.rng import Rng
from tests.utils import tiny_model_config


@pytest.fixture
def window() -> Tensor:
    return Tensor(Rng(11).normal(1.0, (4, 2)))


@pytest.mark.parametrize(
    ("variant", "expected"),
    [
        ("mmformer", 702),
        ("variate_transformer", 698),
        ("temporal_transformer", 628),
    ],
)
def test_parameter_count(variant: str, expected: int) -> None:
    forecaster = Forecaster(tiny_model_config(variant=variant))
    assert forecaster.parameter_count == expected
    assert forecaster.init_params(Rng(0)).num_parameters == expected


def test_parameter_count_without_time_encoding() -> None:
    forecaster = Forecaster(tiny_model_config(time_encoding=False))
    assert forecaster.parameter_count == 698


def test_init_is_deterministic_per_seed() -> None:
    forecaster = Forecaster(tiny_model_config())
    a = forecaster.init_params(Rng(5))
    b = forecaster.init_params(Rng(5))
    c = forecaster.init_params(Rng(6))
    assert a.equals(b)
    assert not a.equals(c)


def test_norm_parameters_start_at_identity() -> None:
    params = Forecaster(tiny_model_config()).init_params(Rng(0))
    np.testing.assert_array_equal(params["blocks.0.norm1.gamma"].data, 1.0)
    np.testing.assert_array_equal(params["blocks.0.norm1.beta"].data, 0.0)
    np.testing.assert_array_equal(params["embed.time_bias"].data, 0.0)


@pytest.mark.parametrize(
    "variant", ["mmformer", "variate_transformer", "temporal_transformer"]
)
@pytest.mark.parametrize("decoder", ["direct", "autoregressive"])
def test_forecast_shape(variant: str, decoder: str, window: Tensor) -> None:
    forecaster = Forecaster(
        tiny_model_config(variant=variant, decoder=decoder)
    )
    params = forecaster.init_params(Rng(0))
    for mode in ("train", "mc_infer", "deterministic"):
        forecast = forecaster.forward(params, window, Rng(1), mode)
        assert forecast.shape == (2, 2)
        assert forecast.mc_std is not None
        assert forecast.mc_std.shape == (2, 2)


def test_autoregressive_head_emits_one_step() -> None:
    forecaster = Forecaster(tiny_model_config(decoder="autoregressive"))
    assert forecaster.param_specs()["head.w"].shape == (8, 1)


def test_wrong_window_shape() -> None:
    forecaster = Forecaster(tiny_model_config())
    params = forecaster.init_params(Rng(0))
    with pytest.raises(DimensionError):
        forecaster.forward(params, Tensor(np.zeros((3, 2))), Rng(0))


def test_deterministic_forward_is_repeatable(window: Tensor) -> None:
    forecaster = Forecaster(tiny_model_config())
    params = forecaster.init_params(Rng(0))
    a = forecaster.forward(params, window, Rng(1), "deterministic")
    b = forecaster.forward(params, window, Rng(2), "deterministic")
    np.testing.assert_array_equal(a.values.data, b.values.data)


def test_mc_with_zero_dropout_equals_deterministic(window: Tensor) -> None:
    forecaster = Forecaster(tiny_model_config(dropout=0.0, mc_passes=5))
    params = forecaster.init_params(Rng(0))
    mc = forecaster.forward(params, window, Rng(1), "mc_infer")
    det = forecaster.forward(params, window, Rng(1), "deterministic")
    np.testing.assert_array_equal(mc.values.data, det.values.data)
    np.testing.assert_array_equal(mc.mc_std, np.zeros((2, 2)))


def test_mc_inference_reports_spread(window: Tensor) -> None:
    forecaster = Forecaster(tiny_model_config(dropout=0.3, mc_passes=8))
    params = forecaster.init_params(Rng(0))
    mc = forecaster.forward(params, window, Rng(1), "mc_infer")
    assert mc.mc_std is not None
    assert np.all(mc.mc_std >= 0.0)
    assert mc.mc_std.max() > 0.0
    again = forecaster.forward(params, window, Rng(1), "mc_infer")
    np.testing.assert_array_equal(mc.values.data, again.values.data)


@pytest.mark.parametrize(
    "overrides",
    [
        {"variant": "variate_transformer"},
        {"variant": "temporal_transformer"},
        {"disable_mc_dropout": True},
    ],
)
def test_mc_inference_is_deterministic_without_mc_dropout(
    overrides: dict[str, object], window: Tensor
) -> None:
    forecaster = Forecaster(tiny_model_config(dropout=0.3, **overrides))
    params = forecaster.init_params(Rng(0))
    mc = forecaster.forward(params, window, Rng(1), "mc_infer")
    det = forecaster.forward(params, window, Rng(1), "deterministic")
    np.testing.assert_array_equal(mc.values.data, det.values.data)


def test_zero_head_gives_zero_forecast(window: Tensor) -> None:
    forecaster = Forecaster(tiny_model_config())
    params = forecaster.init_params(Rng(0))
    zeroed = ParamSet(
        {
            **params,
            "head.w": Tensor(np.zeros((8, 2))),
            "head.b": Tensor(np.zeros(2)),
        }
    )
    forecast = forecaster.forward(zeroed, window, Rng(0), "deterministic")
    np.testing.assert_array_equal(forecast.values.data, np.zeros((2, 2)))


def test_variate_tokens_depend_only_on_their_column() -> None:
    params = Forecaster(tiny_model_config()).init_params(Rng(0))
    base = Rng(1).normal(1.0, (4, 2))
    changed = base.copy()
    changed[:, 1] += 5.0
    a = embed_variate_tokens(Tensor(base), params)
    b = embed_variate_tokens(Tensor(changed), params)
    assert a.shape == (2, 8)
    np.testing.assert_array_equal(a.data[0], b.data[0])
    assert not np.array_equal(a.data[1], b.data[1])


def test_single_variate_gives_single_token() -> None:
    params = Forecaster(tiny_model_config(num_features=1)).init_params(Rng(0))
    tokens = embed_variate_tokens(Tensor(np.ones((4, 1))), params)
    assert tokens.shape == (1, 8)


def test_zero_series_through_zero_bias_mlp_is_zero() -> None:
    params = Forecaster(tiny_model_config()).init_params(Rng(0))
    zero_bias = ParamSet(
        {
            **params,
            "embed.b1": Tensor(np.zeros(8)),
            "embed.b2": Tensor(np.zeros(8)),
        }
    )
    tokens = embed_variate_tokens(Tensor(np.zeros((4, 2))), zero_bias)
    np.testing.assert_array_equal(tokens.data, np.zeros((2, 8)))


def test_temporal_tokens_shape() -> None:
    forecaster = Forecaster(
        tiny_model_config(variant="temporal_transformer", lookback=1)
    )
    params = forecaster.init_params(Rng(0))
    assert embed_temporal_tokens(Tensor(np.ones((1, 2))), params).shape == (
        1,
        8,
    )


def test_position_zero_encoding() -> None:
    table = sinusoidal_encoding(3, 6)
    np.testing.assert_array_equal(table[0], [0.0, 1.0, 0.0, 1.0, 0.0, 1.0])
    assert table[1, 0] == pytest.approx(math.sin(1.0))


@pytest.mark.parametrize(
    ("pred", "target", "expected"),
    [
        ([[1.0, 2.0]], [[1.0, 2.0]], 0.0),
        ([[2.0, 3.0]], [[1.0, 2.0]], 1.0),
        ([[1.0, 3.0]], [[2.0, 5.0]], 2.5),
    ],
)
def test_loss_mse_examples(
    pred: list[list[float]], target: list[list[float]], expected: float
) -> None:
    assert loss_mse(Tensor(pred), Tensor(target)).item() == expected


def test_loss_mse_shape_mismatch() -> None:
    with pytest.raises(DimensionError):
        loss_mse(Tensor([[1.0]]), Tensor([[1.0, 2.0]]))


def test_nan_input_reports_layer(window: Tensor) -> None:
    forecaster = Forecaster(tiny_model_config())
    params = forecaster.init_params(Rng(0))
    bad = window.numpy()
    bad[0, 0] = math.nan
    with pytest.raises(NumericError) as exc:
        forecaster.forward(params, Tensor(bad), Rng(0))
    assert exc.value.layer == 0


def test_non_finite_head_output_raises(window: Tensor) -> None:
    forecaster = Forecaster(tiny_model_config())
    params = forecaster.init_params(Rng(0))
    blown = ParamSet({**params, "head.b": Tensor(np.array([math.inf, 1e308]))})
    with pytest.raises(NumericError) as exc:
        forecaster.forward(blown, window, Rng(0))
    assert exc.value.layer == forecaster.config.num_layers
    assert "head" in str(exc.value)


@pytest.mark.parametrize(
    "variant", ["mmformer", "variate_transformer", "temporal_transformer"]
)
@pytest.mark.parametrize(
    "name",
    [
        "embed",
        "blocks.0.attn.w_q",
        "blocks.0.attn.w_o",
        "blocks.0.norm1.gamma",
        "blocks.0.ffn.w1",
        "blocks.0.norm2.beta",
        "head.w",
    ],
)
def test_full_model_gradients(
    variant: str, name: str, window: Tensor
) -> None:
    forecaster = Forecaster(tiny_model_config(variant=variant))
    params = forecaster.init_params(Rng(0))
    if name == "embed":
        name = "embed.w1" if variant != "temporal_transformer" else "embed.w"
    target = Tensor(Rng(3).normal(1.0, (2, 2)))

    def loss(t: Tensor) -> Tensor:
        swapped = ParamSet({**params, name: t})
        pred = forecaster.forward_once(swapped, window, Rng(4), True)
        return loss_mse(pred, target)

    assert grad_check(loss, params[name]) < 1e-5


@pytest.mark.parametrize("seed", range(10))
def test_full_model_gradients_at_random_points(seed: int) -> None:
    forecaster = Forecaster(tiny_model_config())
    rng = Rng(500 + seed)
    params = forecaster.init_params(rng.substream(0))
    window = Tensor(rng.substream(1).normal(1.0, (4, 2)))
    target = Tensor(rng.substream(2).normal(1.0, (2, 2)))

    for name in ("embed.w1", "blocks.0.attn.w_k", "head.w"):

        def loss(t: Tensor, name: str = name) -> Tensor:
            swapped = ParamSet({**params, name: t})
            pred = forecaster.forward_once(swapped, window, Rng(seed), True)
            return loss_mse(pred, target)

        assert grad_check(loss, params[name]) < 1e-5


def test_window_loss_averages_samples(window: Tensor) -> None:
    forecaster = Forecaster(tiny_model_config(dropout=0.0))
    params = forecaster.init_params(Rng(0))
    target = Tensor(np.zeros((2, 2)))
    sample = WindowSample("e0", 0, 0, window, target)
    one = forecaster.window_loss(params, [sample], Rng(0)).item()
    two = forecaster.window_loss(params, [sample, sample], Rng(0)).item()
    assert one == pytest.approx(two)
    with pytest.raises(DimensionError):
        forecaster.window_loss(params, [], Rng(0))


def test_predictor_ignores_evaluation_order(window: Tensor) -> None:
    forecaster = Forecaster(tiny_model_config(dropout=0.3))
    params = forecaster.init_params(Rng(0))
    target = Tensor(np.zeros((2, 2)))
    a = WindowSample("e0", 0, 0, window, target)
    b = WindowSample("e1", 1, 3, window, target)
    predict = forecaster.predictor(params, "mc_infer", Rng(8))
    first = [predict(a).values.data, predict(b).values.data]
    second = [predict(b).values.data, predict(a).values.data]
    np.testing.assert_array_equal(first[0], second[1])
    np.testing.assert_array_equal(first[1], second[0])


def test_check_params_lists_problems() -> None:
    forecaster = Forecaster(tiny_model_config())
    params = forecaster.init_params(Rng(0))
    other = Forecaster(tiny_model_config(model_dim=4, num_heads=1))
    with pytest.raises(CheckpointError) as exc:
        other.check_params(params)
    assert "shape" in str(exc.value)

    trimmed = ParamSet({n: t for n, t in params.items() if n != "head.b"})
    with pytest.raises(CheckpointError) as exc:
        forecaster.check_params(trimmed)
    assert "missing head.b" in str(exc.value)


def test_forward_under_no_grad_has_no_tape(window: Tensor) -> None:
    forecaster = Forecaster(tiny_model_config())
    params = forecaster.init_params(Rng(0))
    with te.no_grad():
        forecast = forecaster.forward(params, window, Rng(0), "train")
    assert not forecast.values.requires_grad
