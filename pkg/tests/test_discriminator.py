import numpy as np
import pytest

from tepose.discriminator import DiscriminatorConfig, MotionDiscriminator
from tepose.graph import build_adjacency_set, default_skeleton

from test_gcn import dense_msg3d, dense_msgcn

CFG = DiscriminatorConfig(channels=(3, 4, 5, 6), gcn_scales=3, g3d_scales=2, tau=3)


@pytest.fixture
def disc():
    return MotionDiscriminator(default_skeleton(), CFG)


def test_zero_head_scores_bias(disc, rng):
    p = disc.init_params(rng)
    p["head_w"][:] = 0
    p["head_b"] = np.array(0.7)
    assert np.all(disc.score(rng.normal(size=(3, 6, 14, 3)), p) == 0.7)


def test_zero_input_scores_zero(disc, rng):
    p = disc.init_params(rng)
    assert np.all(disc.score(np.zeros((2, 6, 14, 3)), p) == 0)


def test_composed_oracle(disc, rng):
    p = disc.init_params(rng)
    x = rng.normal(size=(2, 6, 14, 3))
    s13 = build_adjacency_set(default_skeleton(), 3).stacked()
    tiled = build_adjacency_set(default_skeleton(), 2).tiled(3)
    h = x - x[:, :, :1]
    for i in range(3):
        res = h @ p[f"block{i}.res_w"] if f"block{i}.res_w" in p else h
        h = np.maximum(dense_msgcn(h, s13, p[f"block{i}.gcn_w"])
                       + dense_msg3d(h, tiled, p[f"block{i}.g3d_w"], 3) + res, 0)
    expected = h.mean(axis=(1, 2)) @ p["head_w"] + p["head_b"]
    assert np.allclose(disc.score(x, p), expected, rtol=1e-12, atol=1e-12)


def test_translation_invariant(disc, rng):
    p = disc.init_params(rng)
    x = rng.normal(size=(2, 6, 14, 3))
    shifted = x + rng.normal(size=(2, 6, 1, 3))
    assert np.allclose(disc.score(x, p), disc.score(shifted, p), rtol=1e-12, atol=1e-12)


def test_zero_upstream(disc, rng):
    p = disc.init_params(rng)
    s, cache = disc.forward(rng.normal(size=(2, 6, 14, 3)), p)
    dx, grads = disc.backward(cache, np.zeros_like(s), p)
    assert not dx.any() and not any(np.any(g) for g in grads.values())


def test_head_gradient_is_pooled_features(disc, rng):
    p = disc.init_params(rng)
    s, cache = disc.forward(rng.normal(size=(1, 6, 14, 3)), p)
    _, grads = disc.backward(cache, np.ones(1), p)
    assert np.array_equal(grads["head_w"], cache[1][0])
    assert grads["head_b"] == 1.0


def test_input_validation(disc, rng):
    p = disc.init_params(rng)
    with pytest.raises(ValueError):
        disc.score(np.zeros((1, 6, 13, 3)), p)
    with pytest.raises(ValueError):
        MotionDiscriminator(default_skeleton(), DiscriminatorConfig(channels=(3, 4, 5)))
    with pytest.raises(ValueError):
        MotionDiscriminator(default_skeleton(), DiscriminatorConfig(tau=2))
