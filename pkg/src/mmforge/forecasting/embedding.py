"""Token embeddings: one token per feature, or one token per time step."""

import numpy as np

from mmforge.exceptions import DimensionError
from mmforge.forecasting.params import ParamSet
from mmforge.nn.layers import AffineLayer, affine_forward
from mmforge.tensor import engine as te
from mmforge.tensor.engine import Tensor
from mmforge.types import FloatArray

PREFIX = "embed"


def embed_variate_tokens(x: Tensor, params: ParamSet) -> Tensor:
    """Map each feature's lookback series to one D-dim token.

    The series of feature v (column v of ``x``) goes through a two-layer
    MLP ``L -> D -> D`` with a GELU between, shared across features. When
    ``embed.time_bias`` is present it is added to every series first, a
    learned per-position offset.

    Args:
        x: One window, [L×V].
        params: Holds ``embed.w1`` [L×D], ``embed.b1``, ``embed.w2`` [D×D],
            ``embed.b2`` and optionally ``embed.time_bias`` [L].

    Returns:
        Tokens, [V×D]. Row v depends only on column v of ``x``.

    Raises:
        DimensionError: If ``x`` does not have L rows.
    """
    first = AffineLayer(params[f"{PREFIX}.w1"], params[f"{PREFIX}.b1"])
    second = AffineLayer(params[f"{PREFIX}.w2"], params[f"{PREFIX}.b2"])
    if x.data.ndim != 2 or x.shape[0] != first.in_features:
        raise DimensionError("embed_variate_tokens", x.shape, first.w.shape)

    series = te.transpose(x)
    bias_name = f"{PREFIX}.time_bias"
    if bias_name in params:
        series = te.add_rowvec(series, params[bias_name])
    hidden = te.gelu(affine_forward(first, series))
    return affine_forward(second, hidden)


def sinusoidal_encoding(length: int, dim: int) -> FloatArray:
    """Fixed sine/cosine position table.

    Column pair (2i, 2i+1) holds ``sin`` and ``cos`` of
    ``pos / 10000^(2i/dim)``; an odd final column holds the sine only.

    Returns:
        The table, [length × dim].
    """
    positions = np.arange(length, dtype=np.float64)[:, None]
    pair = np.arange(0, dim, 2, dtype=np.float64)
    angles = positions / np.power(10000.0, pair / dim)
    table = np.zeros((length, dim))
    table[:, 0::2] = np.sin(angles)
    table[:, 1::2] = np.cos(angles[:, : dim // 2])
    return table


def embed_temporal_tokens(x: Tensor, params: ParamSet) -> Tensor:
    """Map each time step's feature vector to a D-dim token.

    Args:
        x: One window, [L×V].
        params: Holds ``embed.w`` [V×D] and ``embed.b`` [D].

    Returns:
        Tokens with the sinusoidal position encoding added, [L×D].

    Raises:
        DimensionError: If ``x`` does not have V columns.
    """
    layer = AffineLayer(params[f"{PREFIX}.w"], params[f"{PREFIX}.b"])
    if x.data.ndim != 2 or x.shape[1] != layer.in_features:
        raise DimensionError("embed_temporal_tokens", x.shape, layer.w.shape)
    tokens = affine_forward(layer, x)
    encoding = sinusoidal_encoding(x.shape[0], layer.out_features)
    return te.add(tokens, Tensor(encoding))
