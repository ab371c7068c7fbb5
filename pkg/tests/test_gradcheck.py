import numpy as np
import pytest

from tepose import gradcheck
from tepose.graph import hop_distance


@pytest.mark.parametrize("name", sorted(gradcheck.SUITES))
def test_suite_passes_on_fresh_seed(name):
    r = gradcheck.run_suite(name, instances=2, seed=99)
    assert r.passed, f"{name}: {r.max_error:.2e}"


def test_check_detects_wrong_gradient(rng):
    x = rng.normal(size=5)
    f = lambda: float(np.sum(x ** 3))
    assert gradcheck.check(f, {"x": x}, {"x": 3 * x ** 2}, rng) < 1e-8
    assert gradcheck.check(f, {"x": x}, {"x": 3 * x ** 2 + 1e-3}, rng) > 1e-5


def test_probe_restores_inputs(rng):
    x = rng.normal(size=(3, 4))
    before = x.copy()
    gradcheck.check(lambda: float(np.sum(np.sin(x))), {"x": x}, {"x": np.cos(x)}, rng, max_probe=5)
    assert np.array_equal(x, before)


def test_random_graph_connected(rng):
    for _ in range(20):
        g = gradcheck.random_graph(rng)
        assert (hop_distance(g) >= 0).all()
