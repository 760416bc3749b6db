from typing import Literal, TypeAlias

import numpy as np
import numpy.typing as npt

FloatArray: TypeAlias = npt.NDArray[np.float64]
Shape: TypeAlias = tuple[int, ...]
SplitName: TypeAlias = Literal["train", "val", "test"]
ForwardMode: TypeAlias = Literal["train", "mc_infer", "deterministic"]
ModelVariant: TypeAlias = Literal[
    "temporal_transformer", "variate_transformer", "mmformer"
]
AdaptScope: TypeAlias = Literal["attention_only", "all_params"]
DecoderKind: TypeAlias = Literal["direct", "autoregressive"]
