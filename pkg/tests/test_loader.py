import numpy as np
import pytest
from hypothesis import given, strategies as st

from tepose.encoder import GROUND_TRUTH, PREDICTED
from tepose.kinematics import NUM_PARAMS
from tepose.loader import (LoaderState, PredictionCache, assemble_batch, assemble_mixed_batch, cache_update,
                           current_frame, epoch_subsample, frame_position, mix_datasets, warm_start)
from tepose.losses import SupervisionFlags
from tepose.synth import VideoRecord


def video(vid, length, labelled=True, seed=0):
    rng = np.random.default_rng(seed)
    params = rng.normal(size=(length, NUM_PARAMS)) if labelled else None
    return VideoRecord(vid, rng.normal(size=(length, 4)), params,
                       rng.normal(size=(length, 14, 3)) if labelled else None,
                       rng.normal(size=(length, 14, 2)),
                       SupervisionFlags(1, 1) if labelled else SupervisionFlags(0, 0))


def test_frame_position_examples():
    assert frame_position(0, 505) == 0
    assert frame_position(505, 505) == 0
    assert frame_position(507, 505) == 2


def test_schedule_replay():
    H, T = 40, 5
    state = LoaderState(T=T, H=H)
    for j in range(2 * H + 1):
        state.j = j
        assert current_frame(state.j, H, T) == max(j % H, T)


def test_squeezing_drops_short_videos():
    T, H = 5, 505
    state = LoaderState(T=T, H=H, batch_size=32, selection="epoch", j=100)
    pool = [video(f"v{i}", 300 if i < 8 else 60, seed=i) for i in range(10)]
    cache = PredictionCache()
    for v in pool:
        warm_start(v, cache, T, upto=v.length)
    picks = np.random.default_rng([state.seed, state.epoch, 0]).integers(len(pool), size=32)
    short = int(np.sum(picks >= 8))
    items = assemble_batch(state, pool, cache)
    assert len(items) == 32 - short
    assert all(it.video.length > 100 for it in items)


def test_squeeze_exact_count(monkeypatch):
    import tepose.loader as loader
    T = 5
    pool = [video(f"v{i}", 200 if i < 27 else 20, seed=i) for i in range(32)]
    cache = PredictionCache()
    for v in pool:
        warm_start(v, cache, T, upto=v.length)
    monkeypatch.setattr(loader, "select_videos", lambda s, n, count, tag=0: np.arange(count))
    assert len(assemble_batch(LoaderState(T=T, H=505, batch_size=32, j=50), pool, cache)) == 27


def test_gamma_zero_all_ground_truth():
    state = LoaderState(gamma=0.0, batch_size=16, j=30)
    pool = [video("a", 100)]
    cache = PredictionCache()
    warm_start(pool[0], cache, 5, upto=100)
    for it in assemble_batch(state, pool, cache):
        assert it.sources == [GROUND_TRUTH] * 5


def test_unlabelled_videos_always_use_predictions():
    state = LoaderState(gamma=0.0, batch_size=8, j=30)
    v = video("u", 100, labelled=False)
    cache = PredictionCache()
    warm_start(v, cache, 5, source="mean", mean_params=np.zeros(NUM_PARAMS), upto=100)
    for it in assemble_batch(state, [v], cache):
        assert it.sources == [PREDICTED] * 5


def test_gamma_statistical_rate():
    state = LoaderState(gamma=0.9, batch_size=1, j=10, rng=np.random.default_rng(3))
    v = video("a", 50)
    cache = PredictionCache()
    warm_start(v, cache, 5, upto=50)
    draws = []
    for _ in range(2000):
        draws += assemble_batch(state, [v], cache)[0].sources
    assert len(draws) == 10000
    assert abs(np.mean([s == PREDICTED for s in draws]) - 0.9) <= 0.02


def test_sample_scope_shares_one_draw():
    state = LoaderState(gamma=0.5, gamma_scope="sample", batch_size=50, j=10)
    v = video("a", 50)
    cache = PredictionCache()
    warm_start(v, cache, 5, upto=50)
    assert all(len(set(it.sources)) == 1 for it in assemble_batch(state, [v], cache))


def test_warm_start_entries():
    v = video("a", 30)
    cache = PredictionCache()
    warm_start(v, cache, 5)
    assert cache.entries("a").tolist() == [0, 1, 2, 3, 4]
    assert all(np.array_equal(cache.get("a", t), v.gt_params[t]) for t in range(5))
    mean = np.arange(NUM_PARAMS, dtype=float)
    c2 = PredictionCache()
    warm_start(v, c2, 5, source="mean", mean_params=mean)
    assert all(np.array_equal(c2.get("a", t), mean) for t in range(5))
    with pytest.raises(ValueError):
        warm_start(video("short", 5), PredictionCache(), 5)


def test_cache_write_read_overwrite():
    cache = PredictionCache()
    a, b = np.ones(NUM_PARAMS), np.full(NUM_PARAMS, 2.0)
    cache_update(cache, "x", 3, a, j=1, length=10)
    assert np.array_equal(cache.get("x", 3), a) and cache.stamp("x", 3) == 1
    cache_update(cache, "x", 3, b, j=2)
    assert np.array_equal(cache.get("x", 3), b) and cache.stamp("x", 3) == 2
    with pytest.raises(KeyError):
        cache.get("x", 4)
    with pytest.raises(KeyError):
        cache.update("y", 0, a, 0)


def test_full_epoch_pass_is_causal_and_complete():
    T, H = 5, 60
    pool = [video(f"v{i}", n, seed=i) for i, n in enumerate((40, 60, 80, 100))]
    cache = PredictionCache()
    for v in pool:
        warm_start(v, cache, T)
    cache.reads = []
    state = LoaderState(T=T, H=H, gamma=0.9, batch_size=6, selection="epoch", rng=np.random.default_rng(1))
    visited = set()
    for j in range(H):
        state.j = j
        start = len(cache.reads)
        items = assemble_batch(state, pool, cache)
        for it in items:
            it.history(cache)
        for vid, f in cache.reads[start:]:
            assert f < current_frame(j, H, T)
        for it in items:
            visited.add(it.video.id)
            cache.update(it.video.id, it.frame, np.zeros(NUM_PARAMS), j)
    for v in pool:
        if v.id in visited:
            assert set(range(T, min(v.length, H))) <= set(cache.entries(v.id).tolist())


def test_mix_examples():
    assert mix_datasets(5, 5, 10) == (4, 6)
    assert mix_datasets(5, 5, 32) == (13, 19)
    assert mix_datasets(5, 0, 10) == (10, 0)
    assert mix_datasets(0, 5, 10) == (0, 10)


@given(st.integers(1, 200))
def test_mix_quota_sums_to_batch(B):
    q3, q2 = mix_datasets(3, 3, B)
    assert q3 + q2 == B and q3 == int(np.floor(0.4 * B + 0.5))


def test_mixed_batch_sizes():
    T = 5
    p3 = [video(f"a{i}", 100, seed=i) for i in range(3)]
    p2 = [video(f"b{i}", 100, labelled=False, seed=10 + i) for i in range(3)]
    cache = PredictionCache()
    for v in p3 + p2:
        warm_start(v, cache, T, source="gt" if v.gt_params is not None else "mean",
                   mean_params=np.zeros(NUM_PARAMS), upto=100)
    items = assemble_mixed_batch(LoaderState(batch_size=10, j=20), p3, p2, cache)
    assert sum(it.video.gt_params is not None for it in items) == 4
    assert len(items) == 10


def test_epoch_subsample(rng):
    vs = list(range(40))
    sub = epoch_subsample(vs, 0.125, rng)
    assert len(sub) == 5 and sub == sorted(set(sub))
    assert epoch_subsample(vs, 1.0, rng) == vs


def test_state_validation():
    for kw in ({"gamma": 1.5}, {"H": 3, "T": 5}, {"batch_size": 0}, {"gamma_scope": "x"}, {"selection": "x"}):
        with pytest.raises(ValueError):
            LoaderState(**kw)
    with pytest.raises(ValueError):
        frame_position(3, 0)
    with pytest.raises(ValueError):
        assemble_batch(LoaderState(), [], PredictionCache())
