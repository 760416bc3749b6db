"""Neural-network building blocks on top of the tensor engine."""

from mmforge.nn.attention import (
    HeadOutput,
    MultiHeadAttentionParams,
    attention,
    attention_heads,
)
from mmforge.nn.layers import (
    AffineLayer,
    DropoutSpec,
    FeedForwardParams,
    LayerNormParams,
    McEstimate,
    affine_forward,
    dropout_forward,
    feed_forward,
    init_uniform,
    layer_norm,
    mc_average,
    mc_moments,
)

__all__ = [
    "AffineLayer",
    "DropoutSpec",
    "FeedForwardParams",
    "HeadOutput",
    "LayerNormParams",
    "McEstimate",
    "MultiHeadAttentionParams",
    "affine_forward",
    "attention",
    "attention_heads",
    "dropout_forward",
    "feed_forward",
    "init_uniform",
    "layer_norm",
    "mc_average",
    "mc_moments",
]
