"""Tensor engine: float64 arrays, reverse-mode autodiff, seeded streams."""

from mmforge.tensor.engine import (
    GradTape,
    Tensor,
    backward,
    elementwise,
    matmul,
    no_grad,
    softmax_rows,
    tensor,
    zero_grad,
)
from mmforge.tensor.gradcheck import grad_check, grad_check_many
from mmforge.tensor.rng import Rng, Stream

__all__ = [
    "GradTape",
    "Rng",
    "Stream",
    "Tensor",
    "backward",
    "elementwise",
    "grad_check",
    "grad_check_many",
    "matmul",
    "no_grad",
    "softmax_rows",
    "tensor",
    "zero_grad",
]
