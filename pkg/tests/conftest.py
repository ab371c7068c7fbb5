import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def path_graph(n):
    from tepose.graph import SkeletonGraph
    return SkeletonGraph(n, tuple((i, i + 1) for i in range(n - 1)))
