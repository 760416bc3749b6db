"""Named, ordered parameter collections and their binary checkpoint format.

Checkpoint layout (all integers little-endian)::

    b"MMFP"                    magic
    uint32 version             currently 1
    uint32 count               number of tensors
    per tensor, in order:
        uint16 name_len, utf-8 name
        uint8 ndim, ndim × uint32 dims
        prod(dims) × float64   row-major values
"""

import hashlib
import io
import logging
import struct
from collections.abc import Iterator, Mapping
from pathlib import Path

import numpy as np

from mmforge.exceptions import CheckpointError, DimensionError
from mmforge.tensor.engine import Tensor
from mmforge.types import AdaptScope, FloatArray, Shape

logger = logging.getLogger(__name__)

MAGIC = b"MMFP"
FORMAT_VERSION = 1

ATTENTION_MARKER = ".attn."


class ParamSet(Mapping[str, Tensor]):
    """An ordered ``name -> Tensor`` map of learnable parameters."""

    def __init__(self, tensors: Mapping[str, Tensor] | None = None) -> None:
        self._tensors: dict[str, Tensor] = dict(tensors or {})

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def __repr__(self) -> str:
        return f"ParamSet({len(self)} tensors, {self.num_parameters} values)"

    @property
    def num_parameters(self) -> int:
        """Total scalar count across all tensors."""
        return sum(t.size for t in self._tensors.values())

    def shapes(self) -> dict[str, Shape]:
        """Shape of every tensor, in order.

        Returns:
            ``name -> shape``.
        """
        return {name: t.shape for name, t in self._tensors.items()}

    def clone(self, requires_grad: bool = True) -> "ParamSet":
        """Deep copy as fresh leaves with no gradient history.

        Returns:
            An independent parameter set.
        """
        return ParamSet(
            {
                name: Tensor(t.data.copy(), requires_grad=requires_grad)
                for name, t in self._tensors.items()
            }
        )

    def scope(self, adapt_scope: AdaptScope) -> list[str]:
        """Names updated by adaptation under ``adapt_scope``.

        Returns:
            All names, or only the attention projections.
        """
        if adapt_scope == "all_params":
            return list(self._tensors)
        return [n for n in self._tensors if ATTENTION_MARKER in n]

    def grads(self) -> dict[str, FloatArray]:
        """Accumulated gradient of every tensor, zeros where none arrived.

        Returns:
            ``name -> gradient``.
        """
        return {
            name: (
                t.grad.copy() if t.grad is not None else np.zeros(t.shape)
            )
            for name, t in self._tensors.items()
        }

    def zero_grad(self) -> None:
        """Drop every accumulated gradient."""
        for t in self._tensors.values():
            t.zero_grad()

    def update(
        self,
        grads: Mapping[str, FloatArray],
        lr: float,
        names: list[str] | None = None,
    ) -> "ParamSet":
        """Gradient step ``θ - lr·g`` on ``names`` (default all).

        Tensors outside ``names`` are copied unchanged. A zero learning rate
        leaves values bit-identical.

        Returns:
            A new parameter set of fresh leaves.

        Raises:
            DimensionError: If a gradient does not match its tensor.
        """
        selected = set(self._tensors if names is None else names)
        out: dict[str, Tensor] = {}
        for name, t in self._tensors.items():
            values = t.data.copy()
            if name in selected and lr != 0.0:
                g = grads[name]
                if g.shape != t.shape:
                    raise DimensionError(f"update {name}", t.shape, g.shape)
                values = values - lr * g
            out[name] = Tensor(values, requires_grad=True)
        return ParamSet(out)

    def checksum(self) -> str:
        """SHA-256 over the serialized bytes.

        Returns:
            The hex digest.
        """
        return hashlib.sha256(self.to_bytes()).hexdigest()

    def equals(self, other: "ParamSet") -> bool:
        """Bit-exact comparison of names, shapes and values.

        Returns:
            True when both sets are identical.
        """
        if list(self) != list(other):
            return False
        return all(
            np.array_equal(self[n].data, other[n].data) for n in self
        )

    def to_bytes(self) -> bytes:
        """Serialize in the checkpoint format.

        Returns:
            The encoded bytes.
        """
        buf = io.BytesIO()
        buf.write(MAGIC)
        buf.write(struct.pack("<II", FORMAT_VERSION, len(self)))
        for name, t in self._tensors.items():
            encoded = name.encode("utf-8")
            buf.write(struct.pack("<H", len(encoded)))
            buf.write(encoded)
            buf.write(struct.pack("<B", t.data.ndim))
            buf.write(struct.pack(f"<{t.data.ndim}I", *t.shape))
            buf.write(np.ascontiguousarray(t.data, dtype="<f8").tobytes())
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, payload: bytes) -> "ParamSet":
        """Decode the checkpoint format.

        Returns:
            The parameter set, as gradient-tracked leaves.

        Raises:
            CheckpointError: On a bad magic, version or truncated payload.
        """
        view = memoryview(payload)
        pos = 0

        def take(n: int) -> memoryview:
            nonlocal pos
            if pos + n > len(view):
                raise CheckpointError("checkpoint is truncated")
            chunk = view[pos : pos + n]
            pos += n
            return chunk

        if bytes(take(4)) != MAGIC:
            raise CheckpointError("not an mmforge checkpoint")
        version, count = struct.unpack("<II", take(8))
        if version != FORMAT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")

        tensors: dict[str, Tensor] = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", take(2))
            name = bytes(take(name_len)).decode("utf-8")
            (ndim,) = struct.unpack("<B", take(1))
            dims = struct.unpack(f"<{ndim}I", take(4 * ndim))
            n = int(np.prod(dims, dtype=np.int64))
            values = np.frombuffer(take(8 * n), dtype="<f8").reshape(dims)
            tensors[name] = Tensor(values.astype(np.float64), requires_grad=True)
        if pos != len(view):
            raise CheckpointError("checkpoint has trailing bytes")
        return cls(tensors)

    def save(self, path: Path) -> None:
        """Write the checkpoint to ``path``."""
        path.write_bytes(self.to_bytes())
        logger.debug(f"Saved {len(self)} tensors to {path}")

    @classmethod
    def load(cls, path: Path) -> "ParamSet":
        """Read a checkpoint from ``path``.

        Returns:
            The parameter set.

        Raises:
            CheckpointError: If the file is missing or malformed.
        """
        if not path.is_file():
            raise CheckpointError(f"checkpoint not found: {path}")
        return cls.from_bytes(path.read_bytes())
