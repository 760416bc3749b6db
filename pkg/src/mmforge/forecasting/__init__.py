"""Forecasters over variate or temporal tokens, and their parameters."""

from mmforge.forecasting.embedding import (
    embed_temporal_tokens,
    embed_variate_tokens,
    sinusoidal_encoding,
)
from mmforge.forecasting.network import (
    Forecast,
    Forecaster,
    ParamSpec,
    Predictor,
    loss_mse,
)
from mmforge.forecasting.params import ParamSet

__all__ = [
    "Forecast",
    "Forecaster",
    "ParamSet",
    "ParamSpec",
    "Predictor",
    "embed_temporal_tokens",
    "embed_variate_tokens",
    "loss_mse",
    "sinusoidal_encoding",
]
