"""Affine maps, per-token layer norm, inverted dropout and MC averaging."""

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np
from pydantic import BaseModel, Field

from mmforge.concurrency import map_ordered
from mmforge.exceptions import DimensionError
from mmforge.tensor import engine as te
from mmforge.tensor.engine import Tensor
from mmforge.tensor.rng import Rng
from mmforge.types import FloatArray, Shape

logger = logging.getLogger(__name__)


def init_uniform(rng: Rng, fan_in: int, shape: Shape) -> Tensor:
    """Uniform initialization in [-1/sqrt(fan_in), 1/sqrt(fan_in)].

    Returns:
        A gradient-tracked leaf tensor.
    """
    bound = 1.0 / math.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, shape), requires_grad=True)


@dataclass(frozen=True)
class AffineLayer:
    """``y = x W + b`` over the last dimension."""

    w: Tensor
    b: Tensor

    def __post_init__(self) -> None:
        if self.w.data.ndim != 2 or self.b.shape != (self.w.shape[1],):
            raise DimensionError("AffineLayer", self.w.shape, self.b.shape)

    @property
    def in_features(self) -> int:  # noqa: D102
        return self.w.shape[0]

    @property
    def out_features(self) -> int:  # noqa: D102
        return self.w.shape[1]


def affine_forward(layer: AffineLayer, x: Tensor) -> Tensor:
    """Apply ``layer`` to a vector [in] or a matrix [n×in].

    Returns:
        The mapped tensor, [out] or [n×out].

    Raises:
        DimensionError: If the last dimension of ``x`` is not ``in``.
    """
    if x.data.ndim not in (1, 2) or x.shape[-1] != layer.in_features:
        raise DimensionError("affine_forward", x.shape, layer.w.shape)
    if x.data.ndim == 1:
        row = te.reshape(x, (1, layer.in_features))
        y = te.add_rowvec(te.matmul(row, layer.w), layer.b)
        return te.reshape(y, (layer.out_features,))
    return te.add_rowvec(te.matmul(x, layer.w), layer.b)


@dataclass(frozen=True)
class LayerNormParams:
    """Standardization constant plus optional learnable scale and shift."""

    eps: float = 1e-5
    gamma: Tensor | None = None
    beta: Tensor | None = None

    def __post_init__(self) -> None:
        if self.eps <= 0.0:
            raise ValueError(f"layer norm eps must be positive: {self.eps}")


def layer_norm(params: LayerNormParams, H: Tensor) -> Tensor:
    """Standardize each token (row) of ``H`` [N×D] independently.

    Returns:
        The normalized tokens, then scaled by gamma and shifted by beta when
        present.

    Raises:
        DimensionError: If ``H`` is not a matrix with D >= 1.
    """
    if H.data.ndim != 2 or H.shape[1] < 1:
        raise DimensionError("layer_norm", H.shape)
    out = te.standardize_rows(H, params.eps)
    if params.gamma is not None:
        out = te.mul_rowvec(out, params.gamma)
    if params.beta is not None:
        out = te.add_rowvec(out, params.beta)
    return out


class DropoutSpec(BaseModel):
    """Dropout rate and number of Monte-Carlo passes."""

    rate: float = Field(default=0.1, ge=0.0, lt=1.0)
    mc_passes: int = Field(default=16, ge=1)


def dropout_forward(
    spec: DropoutSpec,
    x: Tensor,
    rng: Rng,
    training: bool,
    mc: bool = False,
) -> Tensor:
    """Inverted dropout, active while training or in MC inference.

    Kept units are scaled by 1/(1-p) so the expectation is unchanged.

    Args:
        spec: Rate and pass count.
        x: Input activations.
        rng: Stream the mask is drawn from.
        training: Whether this is a training-time pass.
        mc: Whether this is an MC inference pass.

    Returns:
        ``x`` itself when p == 0 or neither flag is set, else the masked
        tensor.
    """
    if spec.rate == 0.0 or not (training or mc):
        return x
    keep = 1.0 - spec.rate
    mask = rng.keep_mask(keep, x.shape) / keep
    return te.mul(x, Tensor(mask))


@dataclass(frozen=True)
class McEstimate:
    """Mean and population spread of T stochastic passes."""

    mean: FloatArray
    std: FloatArray
    passes: int


def mc_moments(
    forward: Callable[[Rng], Tensor],
    T: int,
    rng: Rng,
    threads: int | None = None,
) -> McEstimate:
    """Run ``forward`` T times on substreams 0..T-1 and reduce in index order.

    Args:
        forward: One stochastic pass given its stream.
        T: Number of passes.
        rng: Parent stream.
        threads: Concurrency cap for the passes.

    Returns:
        The averaged prediction and its standard deviation.

    Raises:
        ValueError: If T < 1.
    """
    if T < 1:
        raise ValueError(f"MC pass count must be >= 1: {T}")

    def _pass(t: int) -> FloatArray:
        with te.no_grad():
            return forward(rng.substream(t)).numpy()

    samples = map_ordered(_pass, list(range(T)), threads)
    if all(np.array_equal(s, samples[0]) for s in samples[1:]):
        return McEstimate(
            mean=samples[0], std=np.zeros_like(samples[0]), passes=T
        )
    stacked = np.stack(samples)
    return McEstimate(
        mean=stacked.mean(axis=0), std=stacked.std(axis=0), passes=T
    )


def mc_average(
    forward: Callable[[Tensor, Rng], Tensor],
    x: Tensor,
    T: int,
    rng: Rng,
    threads: int | None = None,
) -> Tensor:
    """Average of T stochastic forward passes over ``x``.

    Returns:
        The mean prediction as a tensor outside the tape.
    """
    estimate = mc_moments(lambda r: forward(x, r), T, rng, threads)
    return Tensor(estimate.mean)


@dataclass(frozen=True)
class FeedForwardParams:
    """Two affine maps with a GELU between them."""

    first: AffineLayer
    second: AffineLayer


def feed_forward(
    params: FeedForwardParams,
    x: Tensor,
    spec: DropoutSpec,
    rng: Rng,
    training: bool,
    mc: bool = False,
) -> Tensor:
    """Token-wise FFN with dropout after each affine map.

    Returns:
        Tokens of the same width as ``x``.
    """
    h = te.gelu(affine_forward(params.first, x))
    h = dropout_forward(spec, h, rng, training, mc)
    y = affine_forward(params.second, h)
    return dropout_forward(spec, y, rng, training, mc)
