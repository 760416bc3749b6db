"""Central-difference verification of analytic gradients."""

from collections.abc import Callable, Mapping

import numpy as np

from mmforge.exceptions import DimensionError
from mmforge.tensor.engine import Tensor, backward, no_grad


def grad_check(
    f: Callable[[Tensor], Tensor], x: Tensor, eps: float = 1e-6
) -> float:
    """Compare the tape gradient of ``f`` at ``x`` with central differences.

    Args:
        f: Scalar-valued tensor function.
        x: Evaluation point; its own ``grad`` is left untouched.
        eps: Finite-difference step, in (0, 1e-2].

    Returns:
        max over coordinates of |analytic - numeric| / max(1, |analytic|).

    Raises:
        ValueError: If ``eps`` is out of range.
        DimensionError: If ``f`` is not scalar-valued.
    """
    if not 0.0 < eps <= 1e-2:
        raise ValueError(f"eps must lie in (0, 1e-2]: {eps}")

    probe = Tensor(x.data, requires_grad=True)
    out = f(probe)
    if out.size != 1:
        raise DimensionError("grad_check", out.shape, detail="f not scalar")
    if out.requires_grad:
        backward(out)
    analytic = (
        probe.grad if probe.grad is not None else np.zeros(probe.shape)
    )

    base = x.numpy()
    numeric = np.empty_like(base)
    with no_grad():
        for i in range(base.size):
            plus = base.copy()
            plus.flat[i] += eps
            minus = base.copy()
            minus.flat[i] -= eps
            f_plus = f(Tensor(plus)).item()
            f_minus = f(Tensor(minus)).item()
            numeric.flat[i] = (f_plus - f_minus) / (2.0 * eps)

    if base.size == 0:
        return 0.0
    scale = np.maximum(1.0, np.abs(analytic))
    return float(np.max(np.abs(analytic - numeric) / scale))


def grad_check_many(
    f: Callable[[Mapping[str, Tensor]], Tensor],
    inputs: Mapping[str, Tensor],
    eps: float = 1e-6,
) -> dict[str, float]:
    """Run ``grad_check`` on each named input with the others held fixed.

    Returns:
        Mapping of input name to its max relative error.
    """
    frozen = {name: Tensor(t.data) for name, t in inputs.items()}
    errors: dict[str, float] = {}
    for name in inputs:

        def _partial(t: Tensor, name: str = name) -> Tensor:
            return f({**frozen, name: t})

        errors[name] = grad_check(_partial, inputs[name], eps)
    return errors
