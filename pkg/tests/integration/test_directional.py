import pytest

from mmforge.data import chronological_split, normalize, synth_generate
from mmforge.evaluation.ablation import ABLATION_VARIANTS, run_ablation, run_comparison
from mmforge.models import MetaConfig, ModelConfig, RunConfig, TrainingConfig

SEEDS = [0, 1, 2]


@pytest.fixture(scope="module")
def benchmark():
    ds = synth_generate(20, 400, 3, None, seed=2024)
    ds = normalize(chronological_split(ds, 280, 80, 40))
    config = RunConfig(
        model=ModelConfig(
            lookback=24,
            horizon=6,
            num_features=3,
            model_dim=16,
            num_heads=2,
            num_layers=1,
            ffn_dim=32,
            mc_passes=8,
        ),
        meta=MetaConfig(inner_lr=0.01, meta_lr=0.005),
        training=TrainingConfig(
            epochs=6, batch_size=16, meta_batches_per_epoch=16, train_stride=4
        ),
        seeds=SEEDS,
    )
    return ds, config


@pytest.mark.slow
def test_mmformer_is_competitive_with_baselines(benchmark) -> None:
    ds, config = benchmark
    grid = run_comparison(ds, config, SEEDS)
    best_baseline = min(
        grid.median("variate_transformer").mse,
        grid.median("temporal_transformer").mse,
    )
    assert grid.median("mmformer").mse <= 1.10 * best_baseline


@pytest.mark.slow
def test_full_model_is_not_worse_than_ablations(benchmark) -> None:
    ds, config = benchmark
    grid = run_ablation(ds, config, SEEDS)
    assert grid.variants == list(ABLATION_VARIANTS)
    full = grid.median("full").mse
    for variant in ("no_maml", "no_mc_dropout", "no_maml_no_mc_dropout"):
        assert full <= 1.10 * grid.median(variant).mse
