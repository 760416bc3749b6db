"""Exception hierarchy shared by every mmforge sub-package."""

from collections.abc import Sequence
from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from mmforge.models import TrainingHistory


class MmforgeError(Exception):
    """Base class for all mmforge errors."""


class DimensionError(MmforgeError, ValueError):
    """Operand shapes do not fit the requested operation."""

    def __init__(
        self, op: str, *shapes: Sequence[int], detail: str = ""
    ) -> None:
        shown = " and ".join(str(list(s)) for s in shapes)
        message = f"{op}: incompatible shapes {shown}"
        if detail:
            message = f"{message} ({detail})"
        super().__init__(message)
        self.op = op
        self.shapes = [tuple(s) for s in shapes]


class NumericError(MmforgeError, ArithmeticError):
    """A computation produced, or would produce, a non-finite value."""

    def __init__(
        self,
        message: str,
        layer: int | None = None,
        task_id: str | None = None,
    ) -> None:
        if layer is not None:
            message = f"{message} (layer {layer})"
        if task_id is not None:
            message = f"{message} (task {task_id})"
        super().__init__(message)
        self.layer = layer
        self.task_id = task_id


class DataError(MmforgeError):
    """Input data is missing, malformed or too short."""


class IntegrityError(DataError):
    """A dataset failed its integrity check."""

    def __init__(self, violations: Sequence[str]) -> None:
        self.violations = list(violations)
        listing = "\n".join(f"  - {v}" for v in self.violations)
        super().__init__(
            f"{len(self.violations)} integrity violation(s):\n{listing}"
        )


class ConfigurationError(MmforgeError):
    """A configuration file or override could not be resolved."""


class CheckpointError(MmforgeError):
    """A checkpoint is unreadable or does not match the model config."""


class PipelineStepError(MmforgeError):
    """A preprocessing step failed; names the step that failed."""

    def __init__(self, step: str, cause: Exception) -> None:
        super().__init__(f"preprocess step '{step}' failed: {cause}")
        self.step = step
        self.cause = cause


class TrainingDivergedError(MmforgeError):
    """Training hit a non-finite loss; keeps the history gathered so far."""

    def __init__(self, message: str, history: "TrainingHistory") -> None:
        super().__init__(message)
        self.history = history


class TapeError(MmforgeError):
    """Backward was requested on a tensor that is not on a gradient tape."""
