import numpy as np
import pytest
from pydantic import ValidationError

from mmforge.exceptions import DimensionError
from mmforge.nn.layers import (
    AffineLayer,
    DropoutSpec,
    FeedForwardParams,
    LayerNormParams,
    affine_forward,
    dropout_forward,
    feed_forward,
    init_uniform,
    layer_norm,
    mc_average,
    mc_moments,
)
from mmforge.tensor import engine as te
from mmforge.tensor.engine import Tensor
from mmforge.tensor.gradcheck import grad_check_many
from mmforge.tensor.rng import Rng


@pytest.mark.parametrize(
    ("w", "b", "x", "expected"),
    [
        (np.eye(2), [0.0, 0.0], [1.0, 2.0], [1.0, 2.0]),
        ([[2.0]], [1.0], [3.0], [7.0]),
        (np.zeros((3, 2)), [5.0, 5.0], [1.0, -4.0, 9.0], [5.0, 5.0]),
    ],
)
def test_affine_examples(
    w: object, b: list[float], x: list[float], expected: list[float]
) -> None:
    layer = AffineLayer(Tensor(w), Tensor(b))
    np.testing.assert_array_equal(
        affine_forward(layer, Tensor(x)).data, expected
    )


def test_affine_on_matrix_maps_each_row() -> None:
    layer = AffineLayer(Tensor([[1.0, 0.0], [0.0, 2.0]]), Tensor([1.0, 1.0]))
    out = affine_forward(layer, Tensor([[1.0, 1.0], [2.0, 3.0]]))
    np.testing.assert_array_equal(out.data, [[2.0, 3.0], [3.0, 7.0]])


def test_affine_rejects_wrong_width() -> None:
    layer = AffineLayer(Tensor(np.eye(2)), Tensor([0.0, 0.0]))
    with pytest.raises(DimensionError):
        affine_forward(layer, Tensor([1.0, 2.0, 3.0]))


def test_affine_layer_checks_bias_shape() -> None:
    with pytest.raises(DimensionError):
        AffineLayer(Tensor(np.eye(2)), Tensor([0.0]))


def test_init_uniform_bounds() -> None:
    t = init_uniform(Rng(0), 16, (50, 8))
    assert t.requires_grad
    assert np.all(np.abs(t.data) <= 0.25)


def test_layer_norm_rows_independent() -> None:
    out = layer_norm(LayerNormParams(), Tensor([[1.0, 2.0, 3.0], [4.0, 4.0, 4.0]]))
    np.testing.assert_allclose(out.data[0], [-1.2247, 0.0, 1.2247], atol=1e-3)
    np.testing.assert_allclose(out.data[1], [0.0, 0.0, 0.0])


def test_layer_norm_scale_and_shift() -> None:
    params = LayerNormParams(
        gamma=Tensor([2.0, 2.0]), beta=Tensor([1.0, -1.0])
    )
    out = layer_norm(params, Tensor([[-1.0, 1.0]]))
    np.testing.assert_allclose(out.data, [[-1.0, 1.0]], atol=1e-4)


def test_layer_norm_moments_on_random_rows() -> None:
    eps = 1e-5
    gen = Rng(12)
    for case in range(50):
        rng = gen.substream(case)
        h = rng.normal(1.0 + case, (4, 6)) + rng.normal(10.0, (4, 1))
        out = layer_norm(LayerNormParams(eps), Tensor(h)).data
        var = h.var(axis=1)
        assert np.abs(out.mean(axis=1)).max() < 1e-9
        np.testing.assert_allclose(
            out.var(axis=1), var / (var + eps), atol=1e-6
        )


def test_layer_norm_rejects_bad_eps() -> None:
    with pytest.raises(ValueError):
        LayerNormParams(eps=0.0)


@pytest.mark.parametrize("seed", range(10))
def test_layer_norm_gradients(seed: int) -> None:
    rng = Rng(100 + seed)
    inputs = {
        "h": Tensor(rng.substream(0).normal(1.0, (3, 4))),
        "gamma": Tensor(rng.substream(1).normal(1.0, (4,))),
        "beta": Tensor(rng.substream(2).normal(1.0, (4,))),
    }
    weights = Tensor(rng.substream(3).normal(1.0, (3, 4)))

    def f(p: dict[str, Tensor]) -> Tensor:
        out = layer_norm(LayerNormParams(1e-5, p["gamma"], p["beta"]), p["h"])
        return te.sum(te.mul(out, weights))

    assert max(grad_check_many(f, inputs).values()) < 1e-5


@pytest.mark.parametrize("seed", range(10))
def test_affine_gradients(seed: int) -> None:
    rng = Rng(300 + seed)
    inputs = {
        "x": Tensor(rng.substream(0).normal(1.0, (3, 4))),
        "w": Tensor(rng.substream(1).normal(0.5, (4, 5))),
        "b": Tensor(rng.substream(2).normal(0.5, (5,))),
    }
    weights = Tensor(rng.substream(3).normal(1.0, (3, 5)))

    def f(p: dict[str, Tensor]) -> Tensor:
        out = affine_forward(AffineLayer(p["w"], p["b"]), p["x"])
        return te.sum(te.mul(te.mul(out, out), weights))

    assert max(grad_check_many(f, inputs).values()) < 1e-5


def test_dropout_zero_rate_is_identity() -> None:
    x = Tensor([1.0, 2.0, 3.0])
    out = dropout_forward(DropoutSpec(rate=0.0), x, Rng(0), training=True)
    assert out is x


def test_dropout_off_outside_training_and_mc() -> None:
    x = Tensor([1.0, 2.0, 3.0])
    out = dropout_forward(DropoutSpec(rate=0.5), x, Rng(0), training=False)
    assert out is x


def test_dropout_mask_applies_in_mc_mode() -> None:
    x = Tensor(np.ones(200))
    out = dropout_forward(
        DropoutSpec(rate=0.5), x, Rng(0), training=False, mc=True
    )
    assert set(np.unique(out.data)) <= {0.0, 2.0}
    assert 0 < np.count_nonzero(out.data) < 200


def test_dropout_same_stream_same_mask() -> None:
    x = Tensor(np.ones(50))
    spec = DropoutSpec(rate=0.3)
    a = dropout_forward(spec, x, Rng(5), training=True)
    b = dropout_forward(spec, x, Rng(5), training=True)
    np.testing.assert_array_equal(a.data, b.data)


def test_dropout_preserves_expectation() -> None:
    x = Tensor(np.ones(20000))
    out = dropout_forward(DropoutSpec(rate=0.2), x, Rng(2), training=True)
    assert abs(out.data.mean() - 1.0) < 0.02


@pytest.mark.parametrize("rate", [-0.1, 1.0])
def test_dropout_spec_rate_range(rate: float) -> None:
    with pytest.raises(ValidationError):
        DropoutSpec(rate=rate)


def test_mc_single_pass_equals_one_dropout_pass() -> None:
    x = Tensor(np.arange(1.0, 11.0))
    spec = DropoutSpec(rate=0.5)
    rng = Rng(3)

    def forward(t: Tensor, r: Rng) -> Tensor:
        return dropout_forward(spec, t, r, training=False, mc=True)

    averaged = mc_average(forward, x, 1, rng)
    single = forward(x, rng.substream(0))
    np.testing.assert_array_equal(averaged.data, single.data)


def test_mc_zero_rate_equals_deterministic() -> None:
    x = Tensor([1.0, -2.0, 3.5])
    spec = DropoutSpec(rate=0.0)
    estimate = mc_moments(
        lambda r: dropout_forward(spec, x, r, training=False, mc=True),
        8,
        Rng(0),
    )
    np.testing.assert_array_equal(estimate.mean, x.data)
    np.testing.assert_array_equal(estimate.std, np.zeros(3))


def test_mc_moments_thread_count_does_not_change_result() -> None:
    x = Tensor(np.arange(12.0).reshape(3, 4))
    spec = DropoutSpec(rate=0.4)

    def forward(r: Rng) -> Tensor:
        return dropout_forward(spec, x, r, training=False, mc=True)

    serial = mc_moments(forward, 6, Rng(1), threads=1)
    parallel = mc_moments(forward, 6, Rng(1), threads=3)
    np.testing.assert_array_equal(serial.mean, parallel.mean)
    np.testing.assert_array_equal(serial.std, parallel.std)


def test_mc_moments_requires_a_pass() -> None:
    with pytest.raises(ValueError):
        mc_moments(lambda r: Tensor([0.0]), 0, Rng(0))


@pytest.mark.parametrize("seed", range(10))
def test_feed_forward_shape_and_gradients(seed: int) -> None:
    rng = Rng(200 + seed)
    inputs = {
        "x": Tensor(rng.substream(0).normal(1.0, (3, 4))),
        "w1": Tensor(rng.substream(1).normal(0.5, (4, 6))),
        "b1": Tensor(rng.substream(2).normal(0.5, (6,))),
        "w2": Tensor(rng.substream(3).normal(0.5, (6, 4))),
        "b2": Tensor(rng.substream(4).normal(0.5, (4,))),
    }

    def f(p: dict[str, Tensor]) -> Tensor:
        params = FeedForwardParams(
            AffineLayer(p["w1"], p["b1"]), AffineLayer(p["w2"], p["b2"])
        )
        out = feed_forward(
            params, p["x"], DropoutSpec(rate=0.3), Rng(9), training=True
        )
        return te.sum(te.mul(out, out))

    assert max(grad_check_many(f, inputs).values()) < 1e-5


def test_more_mc_passes_shrink_estimate_spread() -> None:
    x = Tensor(np.linspace(1.0, 2.0, 6))
    spec = DropoutSpec(rate=0.3)

    def forward(t: Tensor, r: Rng) -> Tensor:
        return dropout_forward(spec, t, r, training=False, mc=True)

    def spread(passes: int) -> float:
        repeats = np.stack(
            [mc_average(forward, x, passes, Rng(seed)).data for seed in range(100)]
        )
        return float(repeats.std(axis=0).mean())

    assert spread(1) >= 2.0 * spread(16)
