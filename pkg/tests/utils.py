import numpy as np

from mmforge.data import (
    MtsDataset,
    chronological_split,
    normalize,
    synth_generate,
)
from mmforge.models import (
    MetaConfig,
    ModelConfig,
    RunConfig,
    TrainingConfig,
)
from mmforge.types import FloatArray


def make_dataset(
    values: FloatArray,
    *,
    entities: tuple[str, ...] | None = None,
    features: tuple[str, ...] | None = None,
) -> MtsDataset:
    e, t, v = values.shape
    return MtsDataset(
        entities=entities or tuple(f"e{i}" for i in range(e)),
        timestamps=tuple(str(k) for k in range(t)),
        time_index=np.arange(t, dtype=np.int64),
        values=np.asarray(values, dtype=np.float64),
        feature_names=features or tuple(f"f{i}" for i in range(v)),
    )


def tiny_model_config(**overrides: object) -> ModelConfig:
    settings: dict[str, object] = {
        "lookback": 4,
        "horizon": 2,
        "num_features": 2,
        "model_dim": 8,
        "num_heads": 1,
        "num_layers": 1,
        "ffn_dim": 16,
        "dropout": 0.1,
        "mc_passes": 3,
    }
    settings.update(overrides)
    return ModelConfig.model_validate(settings)


def synthetic_dataset(
    entities: int = 3,
    length: int = 40,
    features: int = 2,
    seed: int = 0,
    split: tuple[int, int, int] = (24, 8, 8),
) -> MtsDataset:
    ds = synth_generate(entities, length, features, None, seed)
    return normalize(chronological_split(ds, *split))


def tiny_run_config(**overrides: object) -> RunConfig:
    return RunConfig(
        model=tiny_model_config(),
        meta=MetaConfig(tasks_per_meta_batch=2, support_size=2, query_size=2),
        training=TrainingConfig(epochs=1, batch_size=8, meta_batches_per_epoch=1),
        seeds=[0],
    ).model_copy(update=overrides)
