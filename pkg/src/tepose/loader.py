"""Sequential data loading.

Training iteration ``j`` works on frame ``t = j mod H`` of every sampled video
(clamped to ``T`` so a full window of past frames exists). Past-frame
parameters come either from the prediction cache or from labels, mixed with
probability ``gamma``. Videos that are too short for the current frame are
dropped, so batches shrink rather than wrap.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np

from .encoder import GROUND_TRUTH, PREDICTED
from .kinematics import NUM_PARAMS


def frame_position(j: int, H: int) -> int:
    if H < 1:
        raise ValueError("H must be >= 1")
    return j % H


def current_frame(j: int, H: int, T: int) -> int:
    return max(frame_position(j, H), T)


class PredictionCache:
    """Per-video, per-frame store of parameter vectors with write stamps.

    Reads may happen from any thread; writes take a lock.
    """

    def __init__(self):
        self._values: dict[str, np.ndarray] = {}
        self._stamps: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()
        self.reads: list[tuple[str, int]] | None = None   # set to [] to record reads

    def _ensure(self, vid, length):
        if vid not in self._values:
            self._values[vid] = np.zeros((length, NUM_PARAMS))
            self._stamps[vid] = np.full(length, -1, dtype=np.int64)

    def update(self, vid: str, t: int, theta, j: int, length: int | None = None):
        with self._lock:
            if vid not in self._values:
                if length is None:
                    raise KeyError(f"video {vid!r} not registered; pass its length")
                self._ensure(vid, length)
            self._values[vid][t] = theta
            self._stamps[vid][t] = j

    def register(self, vid: str, length: int):
        with self._lock:
            self._ensure(vid, length)

    def has(self, vid: str, t: int) -> bool:
        return vid in self._stamps and 0 <= t < len(self._stamps[vid]) and self._stamps[vid][t] >= 0

    def get(self, vid: str, t: int) -> np.ndarray:
        if not self.has(vid, t):
            raise KeyError(f"cache miss for video {vid!r} frame {t}")
        if self.reads is not None:
            self.reads.append((vid, t))
        return self._values[vid][t].copy()

    def stamp(self, vid: str, t: int) -> int:
        return int(self._stamps[vid][t])

    def entries(self, vid: str) -> np.ndarray:
        """Frame indices with a stored value."""
        return np.flatnonzero(self._stamps.get(vid, np.zeros(0)) >= 0)

    def state_dict(self):
        return {vid: (self._values[vid].copy(), self._stamps[vid].copy()) for vid in self._values}


def cache_update(cache: PredictionCache, vid: str, t: int, theta, j: int, length: int | None = None):
    cache.update(vid, t, theta, j, length)
    return cache


def warm_start(video, cache: PredictionCache, T: int, source: str = "gt", mean_params=None, j: int = 0,
               upto: int | None = None):
    """Fill frames ``0 .. upto-1`` (default ``T``); labels when available, else
    the mean parameters. Filled entries carry stamp ``j``."""
    if video.length < T + 1:
        raise ValueError(f"video {video.id!r} has {video.length} frames, needs at least {T + 1}")
    cache.register(video.id, video.length)
    use_gt = source == "gt" and video.gt_params is not None
    if not use_gt and mean_params is None:
        raise ValueError("mean_params required for the fallback warm start")
    for t in range(T if upto is None else min(upto, video.length)):
        cache.update(video.id, t, video.gt_params[t] if use_gt else mean_params, j)
    return cache


@dataclass
class LoaderState:
    T: int = 5
    H: int = 505
    gamma: float = 0.9
    batch_size: int = 32
    gamma_scope: str = "frame"      # "frame" | "sample"
    ratio_3d: float = 0.4
    selection: str = "iteration"    # "iteration" | "epoch"
    seed: int = 0
    j: int = 0
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0))

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.H < self.T + 1:
            raise ValueError("H must be at least T + 1")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")
        if self.gamma_scope not in ("frame", "sample"):
            raise ValueError("gamma_scope is 'frame' or 'sample'")
        if self.selection not in ("epoch", "iteration"):
            raise ValueError("selection is 'epoch' or 'iteration'")

    @property
    def epoch(self) -> int:
        return self.j // self.H


@dataclass
class BatchItem:
    video: object
    frame: int
    window: np.ndarray              # frame indices t-T .. t
    sources: list[str]              # per past frame

    def history(self, cache: PredictionCache) -> np.ndarray:
        """Resolve the past-frame parameter vectors ``(T, 85)``."""
        out = np.zeros((len(self.sources), NUM_PARAMS))
        for i, (f, s) in enumerate(zip(self.window[:-1], self.sources)):
            out[i] = self.video.gt_params[f] if s == GROUND_TRUTH else cache.get(self.video.id, int(f))
        return out


def _draw_sources(state: LoaderState, has_gt: bool) -> list[str]:
    if not has_gt:
        return [PREDICTED] * state.T
    if state.gamma_scope == "sample":
        return [PREDICTED if state.rng.random() < state.gamma else GROUND_TRUTH] * state.T
    u = state.rng.random(state.T)
    return [PREDICTED if x < state.gamma else GROUND_TRUTH for x in u]


def select_videos(state: LoaderState, n_pool: int, count: int, tag: int = 0) -> np.ndarray:
    """Uniform draw with replacement of ``count`` pool indices.

    With ``selection="iteration"`` each call draws afresh from ``state.rng``;
    past frames then come from whatever the cache last held for them. With
    ``"epoch"`` the draw is keyed by ``(seed, epoch, tag)``, so the same
    videos are walked frame by frame through the whole epoch and every past
    frame was predicted one iteration earlier (batches are strongly
    correlated in that mode).
    """
    if state.selection == "epoch":
        return np.random.default_rng([state.seed, state.epoch, tag]).integers(n_pool, size=count)
    return state.rng.integers(n_pool, size=count)


def assemble_batch(state: LoaderState, videos, cache: PredictionCache, count: int | None = None,
                   tag: int = 0):
    """Sample ``count`` (default ``batch_size``) videos with replacement and
    plan their current-frame windows. Short videos are squeezed out."""
    if len(videos) == 0:
        raise ValueError("empty eligible pool")
    count = state.batch_size if count is None else count
    t = current_frame(state.j, state.H, state.T)
    picks = select_videos(state, len(videos), count, tag)
    items = []
    for i in picks:
        v = videos[i]
        if v.length <= t:
            continue
        sources = _draw_sources(state, v.gt_params is not None)
        for f, s in zip(range(t - state.T, t), sources):
            if s == PREDICTED and not cache.has(v.id, f):
                raise KeyError(f"cache miss for video {v.id!r} frame {f}")
        items.append(BatchItem(v, t, np.arange(t - state.T, t + 1), sources))
    return items


def mix_datasets(n_3d_pool: int, n_2d_pool: int, batch_size: int, ratio_3d: float = 0.4):
    """Per-batch quotas ``(n_3d, n_2d)`` with ``round(ratio * B)`` 3D samples."""
    if n_2d_pool == 0:
        return batch_size, 0
    if n_3d_pool == 0:
        return 0, batch_size
    q = int(np.floor(ratio_3d * batch_size + 0.5))
    return q, batch_size - q


def assemble_mixed_batch(state: LoaderState, pool_3d, pool_2d, cache: PredictionCache):
    q3, q2 = mix_datasets(len(pool_3d), len(pool_2d), state.batch_size, state.ratio_3d)
    items = []
    if q3:
        items += assemble_batch(state, pool_3d, cache, q3, tag=3)
    if q2:
        items += assemble_batch(state, pool_2d, cache, q2, tag=2)
    return items


def epoch_subsample(videos, fraction: float, rng: np.random.Generator):
    """Uniform per-epoch subset (at least one video)."""
    if fraction >= 1.0:
        return list(videos)
    k = max(1, int(round(fraction * len(videos))))
    idx = np.sort(rng.choice(len(videos), size=k, replace=False))
    return [videos[i] for i in idx]
