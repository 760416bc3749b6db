"""Dense float64 tensors with a dynamic reverse-mode gradient tape.

Every operation returns a new tensor. When gradient recording is enabled and
any operand requires a gradient, the result keeps references to its parents
and a closure mapping the upstream gradient to one gradient per parent. The
tape is the topologically ordered list of those nodes, rebuilt from the loss
on every ``backward`` call.
"""

import math
from collections.abc import Callable, Iterable, Iterator, Sequence
from contextlib import contextmanager
from contextvars import ContextVar

import numpy as np

from mmforge.exceptions import DimensionError, NumericError, TapeError
from mmforge.types import FloatArray, Shape

EXP_CLAMP = 700.0
_GELU_C = math.sqrt(2.0 / math.pi)

_grad_enabled: ContextVar[bool] = ContextVar(
    "mmforge_grad_enabled", default=True
)

BackwardFn = Callable[[FloatArray], Sequence[FloatArray | None]]


@contextmanager
def no_grad() -> Iterator[None]:
    """Suspend gradient recording in the current context."""
    token = _grad_enabled.set(False)
    try:
        yield
    finally:
        _grad_enabled.reset(token)


def is_grad_enabled() -> bool:
    """Whether new operations are recorded on the tape.

    Returns:
        True unless inside ``no_grad``.
    """
    return _grad_enabled.get()


class Tensor:
    """A dense float64 array, optionally participating in the gradient tape.

    ``data`` is read-only once created; only ``grad`` is ever written after
    construction.
    """

    __slots__ = ("data", "requires_grad", "grad", "op", "_parents", "_backward")

    def __init__(
        self,
        data: object,
        requires_grad: bool = False,
    ) -> None:
        arr = np.array(data, dtype=np.float64)
        arr.flags.writeable = False
        self.data: FloatArray = arr
        self.requires_grad = requires_grad
        self.grad: FloatArray | None = None
        self.op = "leaf"
        self._parents: tuple[Tensor, ...] = ()
        self._backward: BackwardFn | None = None

    @property
    def shape(self) -> Shape:
        """Dimension sizes."""
        return tuple(self.data.shape)

    @property
    def size(self) -> int:
        """Number of elements."""
        return int(self.data.size)

    @property
    def is_leaf(self) -> bool:
        """True for tensors not produced by a recorded operation."""
        return self._backward is None

    def item(self) -> float:
        """Return the value of a single-element tensor.

        Raises:
            DimensionError: If the tensor holds more than one element.
        """
        if self.data.size != 1:
            raise DimensionError("item", self.shape, detail="not a scalar")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> FloatArray:
        """Return a writable copy of the data."""
        return np.array(self.data, dtype=np.float64)

    def detach(self) -> "Tensor":
        """Return a new leaf sharing values but not the tape."""
        return Tensor(self.data)

    def zero_grad(self) -> None:
        """Drop the accumulated gradient."""
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={list(self.shape)}, op={self.op}{flag})"

    def __add__(self, other: "Tensor | float") -> "Tensor":
        return elementwise("add", self, other)

    def __radd__(self, other: float) -> "Tensor":
        return elementwise("add", self, other)

    def __sub__(self, other: "Tensor | float") -> "Tensor":
        return elementwise("sub", self, other)

    def __rsub__(self, other: float) -> "Tensor":
        return elementwise("add", neg(self), other)

    def __mul__(self, other: "Tensor | float") -> "Tensor":
        return elementwise("mul", self, other)

    def __rmul__(self, other: float) -> "Tensor":
        return elementwise("mul", self, other)

    def __truediv__(self, other: "Tensor | float") -> "Tensor":
        return elementwise("div", self, other)

    def __neg__(self) -> "Tensor":
        return neg(self)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)


def tensor(data: object, requires_grad: bool = False) -> Tensor:
    """Build a tensor from nested sequences or an array.

    Returns:
        A new leaf tensor.
    """
    return Tensor(data, requires_grad=requires_grad)


def zeros(shape: Shape, requires_grad: bool = False) -> Tensor:
    """All-zero tensor of ``shape``.

    Returns:
        A new leaf tensor.
    """
    return Tensor(np.zeros(shape), requires_grad=requires_grad)


def ones(shape: Shape, requires_grad: bool = False) -> Tensor:
    """All-one tensor of ``shape``.

    Returns:
        A new leaf tensor.
    """
    return Tensor(np.ones(shape), requires_grad=requires_grad)


def eye(n: int) -> Tensor:
    """Identity matrix of size ``n``.

    Returns:
        A new leaf tensor.
    """
    return Tensor(np.eye(n))


def _record(
    data: FloatArray,
    parents: tuple[Tensor, ...],
    backward_fn: BackwardFn,
    op: str,
) -> Tensor:
    out = Tensor(data)
    out.op = op
    if is_grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward_fn
    return out


def _require_2d(op: str, *tensors: Tensor) -> None:
    for t in tensors:
        if t.data.ndim != 2:
            raise DimensionError(op, t.shape, detail="expected a matrix")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of ``a`` [m×k] and ``b`` [k×n].

    Returns:
        The [m×n] product.

    Raises:
        DimensionError: If either operand is not 2-D or inner dims differ.
    """
    _require_2d("matmul", a, b)
    if a.shape[1] != b.shape[0]:
        raise DimensionError("matmul", a.shape, b.shape)

    def _backward(g: FloatArray) -> tuple[FloatArray, FloatArray]:
        return g @ b.data.T, a.data.T @ g

    return _record(a.data @ b.data, (a, b), _backward, "matmul")


def _unbroadcast_scalar(grad: FloatArray, target: Tensor) -> FloatArray:
    if target.shape == grad.shape:
        return grad
    return np.asarray(grad.sum(), dtype=np.float64).reshape(target.shape)


def elementwise(op_tag: str, a: Tensor, b: Tensor | float) -> Tensor:
    """Pointwise ``add``, ``sub``, ``mul`` or ``div``.

    ``b`` is either a tensor of the same shape, a single-element tensor or
    a Python scalar.

    Returns:
        The pointwise result.

    Raises:
        DimensionError: If the shapes differ and ``b`` is not a scalar.
        NumericError: On division by zero.
        ValueError: If the op tag is unknown.
    """
    if not isinstance(b, Tensor):
        b = Tensor(b)
    if a.shape != b.shape and b.size != 1:
        raise DimensionError(op_tag, a.shape, b.shape)
    bd = b.data if a.shape == b.shape else b.data.reshape(())

    match op_tag:
        case "add":
            out = a.data + bd

            def _backward(g: FloatArray) -> tuple[FloatArray, FloatArray]:
                return g, _unbroadcast_scalar(g, b)

        case "sub":
            out = a.data - bd

            def _backward(g: FloatArray) -> tuple[FloatArray, FloatArray]:
                return g, _unbroadcast_scalar(-g, b)

        case "mul":
            out = a.data * bd

            def _backward(g: FloatArray) -> tuple[FloatArray, FloatArray]:
                return g * bd, _unbroadcast_scalar(g * a.data, b)

        case "div":
            if np.any(bd == 0.0):
                raise NumericError(f"division by zero in tensor {a.shape}")
            out = a.data / bd

            def _backward(g: FloatArray) -> tuple[FloatArray, FloatArray]:
                return g / bd, _unbroadcast_scalar(
                    -g * a.data / (bd * bd), b
                )

        case _:
            raise ValueError(f"Unknown elementwise op: {op_tag}")

    return _record(
        np.asarray(out, dtype=np.float64), (a, b), _backward, op_tag
    )


def add(a: Tensor, b: Tensor | float) -> Tensor:  # noqa: D103
    return elementwise("add", a, b)


def sub(a: Tensor, b: Tensor | float) -> Tensor:  # noqa: D103
    return elementwise("sub", a, b)


def mul(a: Tensor, b: Tensor | float) -> Tensor:  # noqa: D103
    return elementwise("mul", a, b)


def div(a: Tensor, b: Tensor | float) -> Tensor:  # noqa: D103
    return elementwise("div", a, b)


def neg(a: Tensor) -> Tensor:
    """Negate every element.

    Returns:
        ``-a``.
    """
    return _record(-a.data, (a,), lambda g: (-g,), "neg")


def add_rowvec(a: Tensor, v: Tensor) -> Tensor:
    """Add vector ``v`` [n] to every row of ``a`` [m×n].

    Returns:
        The shifted matrix.

    Raises:
        DimensionError: If ``v`` does not match the row width.
    """
    _require_2d("add_rowvec", a)
    if v.shape != (a.shape[1],):
        raise DimensionError("add_rowvec", a.shape, v.shape)

    def _backward(g: FloatArray) -> tuple[FloatArray, FloatArray]:
        return g, g.sum(axis=0)

    return _record(a.data + v.data, (a, v), _backward, "add_rowvec")


def mul_rowvec(a: Tensor, v: Tensor) -> Tensor:
    """Scale each column ``j`` of ``a`` [m×n] by ``v[j]``.

    Returns:
        The scaled matrix.

    Raises:
        DimensionError: If ``v`` does not match the row width.
    """
    _require_2d("mul_rowvec", a)
    if v.shape != (a.shape[1],):
        raise DimensionError("mul_rowvec", a.shape, v.shape)

    def _backward(g: FloatArray) -> tuple[FloatArray, FloatArray]:
        return g * v.data, (g * a.data).sum(axis=0)

    return _record(a.data * v.data, (a, v), _backward, "mul_rowvec")


def add_colvec(a: Tensor, v: Tensor) -> Tensor:
    """Add ``v[i]`` to every entry of row ``i`` of ``a`` [m×n].

    Returns:
        The shifted matrix.

    Raises:
        DimensionError: If ``v`` does not match the column height.
    """
    _require_2d("add_colvec", a)
    if v.shape != (a.shape[0],):
        raise DimensionError("add_colvec", a.shape, v.shape)

    def _backward(g: FloatArray) -> tuple[FloatArray, FloatArray]:
        return g, g.sum(axis=1)

    return _record(
        a.data + v.data[:, None], (a, v), _backward, "add_colvec"
    )


def sum(a: Tensor) -> Tensor:  # noqa: A001
    """Sum of all elements as a scalar tensor.

    Returns:
        A 0-d tensor.
    """

    def _backward(g: FloatArray) -> tuple[FloatArray]:
        return (np.broadcast_to(g, a.shape).astype(np.float64),)

    return _record(
        np.asarray(a.data.sum(), dtype=np.float64), (a,), _backward, "sum"
    )


def mean(a: Tensor) -> Tensor:
    """Mean of all elements as a scalar tensor.

    Returns:
        A 0-d tensor.

    Raises:
        DimensionError: If ``a`` is empty.
    """
    if a.size == 0:
        raise DimensionError("mean", a.shape, detail="empty tensor")
    n = float(a.size)

    def _backward(g: FloatArray) -> tuple[FloatArray]:
        return (np.broadcast_to(g / n, a.shape).astype(np.float64),)

    return _record(
        np.asarray(a.data.mean(), dtype=np.float64), (a,), _backward, "mean"
    )


def exp(a: Tensor) -> Tensor:
    """Elementwise exponential, inputs clamped to [-700, 700].

    Returns:
        ``exp(clamp(a))``.
    """
    clamped = np.clip(a.data, -EXP_CLAMP, EXP_CLAMP)
    out = np.exp(clamped)
    inside = (a.data > -EXP_CLAMP) & (a.data < EXP_CLAMP)

    def _backward(g: FloatArray) -> tuple[FloatArray]:
        return (g * out * inside,)

    return _record(out, (a,), _backward, "exp")


def log(a: Tensor) -> Tensor:
    """Elementwise natural logarithm.

    Returns:
        ``log(a)``.

    Raises:
        NumericError: If any input is not strictly positive.
    """
    if np.any(a.data <= 0.0):
        raise NumericError("log of a non-positive value")

    def _backward(g: FloatArray) -> tuple[FloatArray]:
        return (g / a.data,)

    return _record(np.log(a.data), (a,), _backward, "log")


def tanh(a: Tensor) -> Tensor:
    """Elementwise hyperbolic tangent.

    Returns:
        ``tanh(a)``.
    """
    out = np.tanh(a.data)

    def _backward(g: FloatArray) -> tuple[FloatArray]:
        return (g * (1.0 - out * out),)

    return _record(out, (a,), _backward, "tanh")


def gelu(a: Tensor) -> Tensor:
    """Smooth GELU nonlinearity (tanh approximation).

    Returns:
        ``0.5 a (1 + tanh(c (a + 0.044715 a^3)))``.
    """
    x = a.data
    inner = _GELU_C * (x + 0.044715 * x**3)
    t = np.tanh(inner)
    out = 0.5 * x * (1.0 + t)

    def _backward(g: FloatArray) -> tuple[FloatArray]:
        d_inner = _GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
        local = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * d_inner
        return (g * local,)

    return _record(out, (a,), _backward, "gelu")


def transpose(a: Tensor) -> Tensor:
    """Matrix transpose.

    Returns:
        ``a`` with its two axes swapped.
    """
    _require_2d("transpose", a)
    return _record(
        np.ascontiguousarray(a.data.T), (a,), lambda g: (g.T,), "transpose"
    )


def reshape(a: Tensor, shape: Shape) -> Tensor:
    """Row-major reshape.

    Returns:
        The reshaped tensor.

    Raises:
        DimensionError: If the element counts differ.
    """
    if int(np.prod(shape, dtype=np.int64)) != a.size:
        raise DimensionError("reshape", a.shape, shape)
    return _record(
        a.data.reshape(shape),
        (a,),
        lambda g: (g.reshape(a.shape),),
        "reshape",
    )


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    """Columns ``start:stop`` of a matrix.

    Returns:
        The column block.
    """
    _require_2d("slice_cols", a)

    def _backward(g: FloatArray) -> tuple[FloatArray]:
        full = np.zeros(a.shape)
        full[:, start:stop] = g
        return (full,)

    return _record(
        np.ascontiguousarray(a.data[:, start:stop]),
        (a,),
        _backward,
        "slice_cols",
    )


def slice_rows(a: Tensor, start: int, stop: int) -> Tensor:
    """Rows ``start:stop`` of a matrix.

    Returns:
        The row block.
    """
    _require_2d("slice_rows", a)

    def _backward(g: FloatArray) -> tuple[FloatArray]:
        full = np.zeros(a.shape)
        full[start:stop, :] = g
        return (full,)

    return _record(
        np.array(a.data[start:stop, :]), (a,), _backward, "slice_rows"
    )


def _concat(parts: Sequence[Tensor], axis: int, op: str) -> Tensor:
    if not parts:
        raise DimensionError(op, (), detail="nothing to concatenate")
    _require_2d(op, *parts)
    other = 1 - axis
    widths = [p.shape[axis] for p in parts]
    if len({p.shape[other] for p in parts}) != 1:
        raise DimensionError(op, *(p.shape for p in parts))
    bounds = np.cumsum([0, *widths])

    def _backward(g: FloatArray) -> list[FloatArray]:
        if axis == 0:
            return [g[lo:hi, :] for lo, hi in zip(bounds, bounds[1:])]
        return [g[:, lo:hi] for lo, hi in zip(bounds, bounds[1:])]

    data = np.concatenate([p.data for p in parts], axis=axis)
    return _record(data, tuple(parts), _backward, op)


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate matrices side by side.

    Returns:
        The joined matrix.
    """
    return _concat(parts, 1, "concat_cols")


def concat_rows(parts: Sequence[Tensor]) -> Tensor:
    """Stack matrices vertically.

    Returns:
        The joined matrix.
    """
    return _concat(parts, 0, "concat_rows")


def softmax_rows(a: Tensor) -> Tensor:
    """Row-wise softmax computed with max-subtraction.

    Returns:
        A matrix whose rows are nonnegative and sum to one.
    """
    _require_2d("softmax_rows", a)
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(np.clip(shifted, -EXP_CLAMP, 0.0))
    out = e / e.sum(axis=1, keepdims=True)

    def _backward(g: FloatArray) -> tuple[FloatArray]:
        dot = (g * out).sum(axis=1, keepdims=True)
        return (out * (g - dot),)

    return _record(out, (a,), _backward, "softmax_rows")


def standardize_rows(a: Tensor, eps: float) -> Tensor:
    """Per-row ``(x - mean) / sqrt(var + eps)`` with population variance.

    Returns:
        The standardized matrix.
    """
    _require_2d("standardize_rows", a)
    mu = a.data.mean(axis=1, keepdims=True)
    centered = a.data - mu
    var = (centered * centered).mean(axis=1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std

    def _backward(g: FloatArray) -> tuple[FloatArray]:
        g_mean = g.mean(axis=1, keepdims=True)
        proj = (g * xhat).mean(axis=1, keepdims=True)
        return (inv_std * (g - g_mean - xhat * proj),)

    return _record(xhat, (a,), _backward, "standardize_rows")


def check_finite(t: Tensor, where: str, layer: int | None = None) -> Tensor:
    """Raise if ``t`` holds NaN or Inf.

    Returns:
        ``t`` unchanged.

    Raises:
        NumericError: If a non-finite value is present.
    """
    if not np.all(np.isfinite(t.data)):
        raise NumericError(f"non-finite activation in {where}", layer=layer)
    return t


class GradTape:
    """Topologically ordered record of the operations behind one output."""

    def __init__(self, nodes: list[Tensor]) -> None:
        self.nodes = nodes

    @classmethod
    def record(cls, root: Tensor) -> "GradTape":
        """Collect every gradient-tracked node reachable from ``root``.

        Parents always precede their children in the resulting order.

        Returns:
            The tape rooted at ``root``.
        """
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))
        return cls(order)

    def run(self, seed: FloatArray) -> None:
        """Propagate ``seed`` backwards, visiting every node once."""
        pending: dict[int, FloatArray] = {id(self.nodes[-1]): seed}
        for node in reversed(self.nodes):
            g = pending.pop(id(node), None)
            if g is None:
                continue
            node.grad = g.copy() if node.grad is None else node.grad + g
            if node._backward is None:
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                pending[key] = pending[key] + pg if key in pending else pg


def backward(loss: Tensor) -> None:
    """Populate ``grad`` on every tracked tensor that ``loss`` depends on.

    Gradients accumulate across calls until ``zero_grad``.

    Raises:
        DimensionError: If ``loss`` is not a scalar.
        TapeError: If ``loss`` was not produced on an active tape.
    """
    if loss.size != 1:
        raise DimensionError("backward", loss.shape, detail="loss not scalar")
    if not loss.requires_grad:
        raise TapeError("loss does not depend on any gradient-tracked tensor")
    GradTape.record(loss).run(np.ones(loss.shape))


def zero_grad(tensors: Iterable[Tensor]) -> None:
    """Reset the gradient of each tensor."""
    for t in tensors:
        t.zero_grad()
