"""The three forecasters: temporal baseline, variate baseline and MMformer.

All three share one block stack (attention, residual, layer norm, FFN with
dropout, residual, layer norm) and differ in how tokens are formed, whether
the FFN dropout stays on at inference, and how they are trained.
"""

import dataclasses
import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from typing import Literal

import numpy as np

from mmforge.data.dataset import WindowSample
from mmforge.exceptions import CheckpointError, DimensionError
from mmforge.forecasting.embedding import (
    embed_temporal_tokens,
    embed_variate_tokens,
)
from mmforge.forecasting.params import ParamSet
from mmforge.models import ModelConfig
from mmforge.nn.attention import MultiHeadAttentionParams, attention
from mmforge.nn.layers import (
    AffineLayer,
    DropoutSpec,
    FeedForwardParams,
    LayerNormParams,
    affine_forward,
    feed_forward,
    layer_norm,
    mc_moments,
)
from mmforge.tensor import engine as te
from mmforge.tensor.engine import Tensor
from mmforge.tensor.rng import Rng
from mmforge.types import FloatArray, ForwardMode, Shape

logger = logging.getLogger(__name__)

Predictor = Callable[[WindowSample], "Forecast"]


@dataclass(frozen=True)
class Forecast:
    """A [Hz×V] forecast in normalized units.

    ``mc_std`` is the population spread across MC passes (zeros for a
    deterministic forecast); ``denormalized`` is filled in once the
    normalization statistics are applied.
    """

    values: Tensor
    mc_std: FloatArray | None = None
    denormalized: FloatArray | None = None

    @property
    def shape(self) -> Shape:  # noqa: D102
        return self.values.shape

    def with_denormalized(self, values: FloatArray) -> "Forecast":
        """Copy carrying raw-unit values.

        Returns:
            The new forecast.
        """
        return dataclasses.replace(self, denormalized=values)


@dataclass(frozen=True)
class ParamSpec:
    """Shape and initializer of one named parameter."""

    shape: Shape
    init: Literal["uniform", "ones", "zeros"] = "uniform"
    fan_in: int = 1


def loss_mse(pred: Forecast | Tensor, target: Tensor) -> Tensor:
    """Mean squared error over every horizon step and feature.

    Returns:
        A differentiable scalar.

    Raises:
        DimensionError: If the shapes differ.
    """
    values = pred.values if isinstance(pred, Forecast) else pred
    if values.shape != target.shape:
        raise DimensionError("loss_mse", values.shape, target.shape)
    diff = te.sub(values, target)
    return te.mean(te.mul(diff, diff))


class Forecaster:
    """A forecaster defined by its ``ModelConfig``.

    Parameters live outside the object in a ``ParamSet`` so that training
    can hold several copies (task-adapted or meta-updated) at once.
    """

    def __init__(self, config: ModelConfig, threads: int | None = None) -> None:
        self.config = config
        self.threads = threads
        self.dropout = DropoutSpec(
            rate=config.dropout, mc_passes=config.mc_passes
        )

    def __repr__(self) -> str:
        return (
            f"Forecaster(variant={self.config.variant}, "
            f"params={self.parameter_count})"
        )

    @property
    def step_width(self) -> int:
        """Time steps emitted per head application."""
        if self.config.decoder == "autoregressive":
            return 1
        return self.config.horizon

    @property
    def train_dropout(self) -> bool:
        """Whether dropout is active in training-mode passes."""
        if self.config.variant == "mmformer":
            return self.config.mc_dropout_in_training
        return True

    @property
    def mc_active(self) -> bool:
        """Whether ``mc_infer`` actually samples several passes."""
        return self.config.uses_mc_dropout and self.config.dropout > 0.0

    def param_specs(self) -> dict[str, ParamSpec]:
        """Every parameter in checkpoint order.

        Returns:
            ``name -> ParamSpec``.
        """
        c = self.config
        L, V, D, F = c.lookback, c.num_features, c.model_dim, c.ffn_dim
        specs: dict[str, ParamSpec] = {}
        if c.variate_tokens:
            specs["embed.w1"] = ParamSpec((L, D), fan_in=L)
            specs["embed.b1"] = ParamSpec((D,), fan_in=L)
            specs["embed.w2"] = ParamSpec((D, D), fan_in=D)
            specs["embed.b2"] = ParamSpec((D,), fan_in=D)
            if c.uses_time_encoding:
                specs["embed.time_bias"] = ParamSpec((L,), init="zeros")
        else:
            specs["embed.w"] = ParamSpec((V, D), fan_in=V)
            specs["embed.b"] = ParamSpec((D,), fan_in=V)

        for i in range(c.num_layers):
            p = f"blocks.{i}"
            for proj in ("w_q", "w_k", "w_v", "w_o"):
                specs[f"{p}.attn.{proj}"] = ParamSpec((D, D), fan_in=D)
            specs[f"{p}.norm1.gamma"] = ParamSpec((D,), init="ones")
            specs[f"{p}.norm1.beta"] = ParamSpec((D,), init="zeros")
            specs[f"{p}.ffn.w1"] = ParamSpec((D, F), fan_in=D)
            specs[f"{p}.ffn.b1"] = ParamSpec((F,), fan_in=D)
            specs[f"{p}.ffn.w2"] = ParamSpec((F, D), fan_in=F)
            specs[f"{p}.ffn.b2"] = ParamSpec((D,), fan_in=F)
            specs[f"{p}.norm2.gamma"] = ParamSpec((D,), init="ones")
            specs[f"{p}.norm2.beta"] = ParamSpec((D,), init="zeros")

        out = self.step_width if c.variate_tokens else self.step_width * V
        specs["head.w"] = ParamSpec((D, out), fan_in=D)
        specs["head.b"] = ParamSpec((out,), fan_in=D)
        return specs

    @property
    def parameter_count(self) -> int:
        """Scalar parameter count, a pure function of the config."""
        return sum(
            int(np.prod(s.shape, dtype=np.int64))
            for s in self.param_specs().values()
        )

    def init_params(self, rng: Rng) -> ParamSet:
        """Fresh parameters; parameter k draws from ``rng.substream(k)``.

        Returns:
            Gradient-tracked leaves.
        """
        tensors: dict[str, Tensor] = {}
        for k, (name, spec) in enumerate(self.param_specs().items()):
            match spec.init:
                case "ones":
                    values = np.ones(spec.shape)
                case "zeros":
                    values = np.zeros(spec.shape)
                case _:
                    bound = 1.0 / np.sqrt(spec.fan_in)
                    values = rng.substream(k).uniform(-bound, bound, spec.shape)
            tensors[name] = Tensor(values, requires_grad=True)
        return ParamSet(tensors)

    def check_params(self, params: ParamSet) -> None:
        """Verify ``params`` match this config by name and shape.

        Raises:
            CheckpointError: On any missing, extra or misshapen tensor.
        """
        expected = {n: s.shape for n, s in self.param_specs().items()}
        actual = params.shapes()
        if expected == actual:
            return
        missing = sorted(set(expected) - set(actual))
        extra = sorted(set(actual) - set(expected))
        wrong = sorted(
            f"{n} {list(actual[n])} != {list(expected[n])}"
            for n in set(expected) & set(actual)
            if actual[n] != expected[n]
        )
        problems = []
        if missing:
            problems.append(f"missing {', '.join(missing)}")
        if extra:
            problems.append(f"unexpected {', '.join(extra)}")
        if wrong:
            problems.append(f"shape {'; '.join(wrong)}")
        raise CheckpointError(
            "checkpoint does not match model config: " + " | ".join(problems)
        )

    def _block(
        self,
        params: ParamSet,
        H: Tensor,
        i: int,
        rng: Rng,
        stochastic: bool,
    ) -> Tensor:
        p = f"blocks.{i}"
        mha = MultiHeadAttentionParams(
            self.config.num_heads,
            params[f"{p}.attn.w_q"],
            params[f"{p}.attn.w_k"],
            params[f"{p}.attn.w_v"],
            params[f"{p}.attn.w_o"],
        )
        eps = self.config.layer_norm_eps
        norm1 = LayerNormParams(
            eps, params[f"{p}.norm1.gamma"], params[f"{p}.norm1.beta"]
        )
        norm2 = LayerNormParams(
            eps, params[f"{p}.norm2.gamma"], params[f"{p}.norm2.beta"]
        )
        ffn = FeedForwardParams(
            AffineLayer(params[f"{p}.ffn.w1"], params[f"{p}.ffn.b1"]),
            AffineLayer(params[f"{p}.ffn.w2"], params[f"{p}.ffn.b2"]),
        )

        H = layer_norm(norm1, te.add(H, attention(mha, H, H)))
        f = feed_forward(ffn, H, self.dropout, rng, training=stochastic)
        H = layer_norm(norm2, te.add(H, f))
        return te.check_finite(H, "encoder block", layer=i)

    def _step(
        self, params: ParamSet, x: Tensor, rng: Rng, stochastic: bool
    ) -> Tensor:
        """One encoder pass plus head; returns [step_width × V]."""
        c = self.config
        if c.variate_tokens:
            H = embed_variate_tokens(x, params)
        else:
            H = embed_temporal_tokens(x, params)
        H = te.check_finite(H, "embedding", layer=0)

        for i in range(c.num_layers):
            H = self._block(params, H, i, rng.substream(i), stochastic)

        head = AffineLayer(params["head.w"], params["head.b"])
        if c.variate_tokens:
            out = te.transpose(affine_forward(head, H))
        else:
            last = te.slice_rows(H, H.shape[0] - 1, H.shape[0])
            out = te.reshape(
                affine_forward(head, last), (self.step_width, c.num_features)
            )
        return te.check_finite(out, "head", layer=c.num_layers)

    def forward_once(
        self, params: ParamSet, x: Tensor, rng: Rng, stochastic: bool
    ) -> Tensor:
        """A single pass with dropout on or off.

        Returns:
            The [Hz×V] prediction.

        Raises:
            DimensionError: If ``x`` is not [L×V].
        """
        c = self.config
        if x.shape != (c.lookback, c.num_features):
            raise DimensionError(
                "forward", x.shape, (c.lookback, c.num_features)
            )
        if c.decoder == "direct":
            return self._step(params, x, rng.substream(0), stochastic)

        window = x
        steps = []
        for s in range(c.horizon):
            nxt = self._step(params, window, rng.substream(s), stochastic)
            steps.append(nxt)
            window = te.concat_rows(
                [te.slice_rows(window, 1, c.lookback), nxt]
            )
        return steps[0] if len(steps) == 1 else te.concat_rows(steps)

    def forward(
        self,
        params: ParamSet,
        x: Tensor,
        rng: Rng,
        mode: ForwardMode = "deterministic",
    ) -> Forecast:
        """Forecast the horizon after window ``x``.

        ``mc_infer`` averages ``mc_passes`` dropout passes run on
        substreams of ``rng`` and fills ``mc_std``; when MC dropout is
        disabled or the rate is zero it is exactly the deterministic pass.

        Returns:
            The forecast.
        """
        if mode == "mc_infer":
            if not self.mc_active:
                with te.no_grad():
                    values = self.forward_once(params, x, rng, False)
                return Forecast(values, mc_std=np.zeros(values.shape))
            estimate = mc_moments(
                lambda r: self.forward_once(params, x, r, True),
                self.config.mc_passes,
                rng,
                self.threads,
            )
            return Forecast(Tensor(estimate.mean), mc_std=estimate.std)

        stochastic = mode == "train" and self.train_dropout
        values = self.forward_once(params, x, rng, stochastic)
        return Forecast(values, mc_std=np.zeros(values.shape))

    def window_loss(
        self,
        params: ParamSet,
        samples: Sequence[WindowSample],
        rng: Rng,
    ) -> Tensor:
        """Mean training-mode MSE over ``samples``; sample i uses substream i.

        Returns:
            A differentiable scalar.

        Raises:
            DimensionError: If ``samples`` is empty.
        """
        if not samples:
            raise DimensionError("window_loss", (0,), detail="no samples")
        total: Tensor | None = None
        for i, sample in enumerate(samples):
            pred = self.forward(params, sample.input, rng.substream(i), "train")
            loss = loss_mse(pred, sample.target)
            total = loss if total is None else te.add(total, loss)
        assert total is not None
        return te.div(total, float(len(samples)))

    def predictor(
        self, params: ParamSet, mode: ForwardMode, rng: Rng
    ) -> Predictor:
        """Bind parameters into a window -> forecast function.

        Each window draws from
        ``rng.substream(entity_index).substream(start_index)`` so results do
        not depend on evaluation order.

        Returns:
            The predictor.
        """

        def _predict(sample: WindowSample) -> Forecast:
            window_rng = rng.substream(sample.entity_index).substream(
                sample.start_index
            )
            with te.no_grad():
                return self.forward(params, sample.input, window_rng, mode)

        return _predict
