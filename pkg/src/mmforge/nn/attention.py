"""Scaled dot-product multi-head attention."""

import math
from dataclasses import dataclass

from mmforge.exceptions import DimensionError
from mmforge.tensor import engine as te
from mmforge.tensor.engine import Tensor


@dataclass(frozen=True)
class MultiHeadAttentionParams:
    """Projections for ``num_heads`` heads over model width D.

    ``w_q`` and ``w_k`` are [D × h·d_k], ``w_v`` is [D × h·d_v] and ``w_o``
    is [h·d_v × D].
    """

    num_heads: int
    w_q: Tensor
    w_k: Tensor
    w_v: Tensor
    w_o: Tensor

    def __post_init__(self) -> None:
        h = self.num_heads
        d = self.w_q.shape[0]
        if h < 1 or d % h != 0:
            raise DimensionError(
                "attention",
                self.w_q.shape,
                detail=f"model dim {d} not divisible by {h} heads",
            )
        qk_ok = self.w_q.shape == self.w_k.shape and self.w_q.shape[1] % h == 0
        v_ok = self.w_v.shape[0] == d and self.w_v.shape[1] % h == 0
        o_ok = self.w_o.shape == (self.w_v.shape[1], d)
        if not (qk_ok and v_ok and o_ok):
            raise DimensionError(
                "attention",
                self.w_q.shape,
                self.w_k.shape,
                self.w_v.shape,
                self.w_o.shape,
            )

    @property
    def model_dim(self) -> int:  # noqa: D102
        return self.w_q.shape[0]

    @property
    def d_k(self) -> int:  # noqa: D102
        return self.w_q.shape[1] // self.num_heads

    @property
    def d_v(self) -> int:  # noqa: D102
        return self.w_v.shape[1] // self.num_heads


@dataclass(frozen=True)
class HeadOutput:
    """One head's attention weights [n_q×n_kv] and output [n_q×d_v]."""

    weights: Tensor
    values: Tensor


def attention_heads(
    params: MultiHeadAttentionParams, X_q: Tensor, X_kv: Tensor
) -> list[HeadOutput]:
    """Per-head weights ``softmax(Q K^T / sqrt(d_k))`` and outputs ``α V``.

    Returns:
        One entry per head, in head order.

    Raises:
        DimensionError: If the inputs are not [n×D] matrices.
    """
    for x in (X_q, X_kv):
        if x.data.ndim != 2 or x.shape[1] != params.model_dim:
            raise DimensionError("attention", x.shape, params.w_q.shape)

    q = te.matmul(X_q, params.w_q)
    k = te.matmul(X_kv, params.w_k)
    v = te.matmul(X_kv, params.w_v)
    scale = 1.0 / math.sqrt(params.d_k)

    heads = []
    for i in range(params.num_heads):
        qi = te.slice_cols(q, i * params.d_k, (i + 1) * params.d_k)
        ki = te.slice_cols(k, i * params.d_k, (i + 1) * params.d_k)
        vi = te.slice_cols(v, i * params.d_v, (i + 1) * params.d_v)
        scores = te.mul(te.matmul(qi, te.transpose(ki)), scale)
        weights = te.softmax_rows(scores)
        heads.append(HeadOutput(weights, te.matmul(weights, vi)))
    return heads


def attention(
    params: MultiHeadAttentionParams, X_q: Tensor, X_kv: Tensor
) -> Tensor:
    """Multi-head attention: heads concatenated then projected by ``w_o``.

    Returns:
        The attended tokens, [n_q×D].
    """
    heads = attention_heads(params, X_q, X_kv)
    if len(heads) == 1:
        joined = heads[0].values
    else:
        joined = te.concat_cols([h.values for h in heads])
    return te.matmul(joined, params.w_o)
