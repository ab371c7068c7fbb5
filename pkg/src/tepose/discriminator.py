"""GCN motion discriminator: three residual graph blocks, global average pooling
and a scalar linear head. Scores are left unsquashed."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import gcn
from .graph import SkeletonGraph, build_adjacency_set, default_skeleton
from .losses import discriminator_loss, discriminator_loss_grad
from .optim import Adam


@dataclass
class DiscriminatorConfig:
    channels: tuple[int, ...] = (3, 64, 128, 256)
    gcn_scales: int = 13   # K for MS-GCN, so K+1 matrices
    g3d_scales: int = 6    # K for MS-G3D
    tau: int = 3
    root: int = 0
    center: bool = True


class MotionDiscriminator:
    """Holds the fixed graph operators; parameters live in a plain dict."""

    def __init__(self, graph: SkeletonGraph | None = None, config: DiscriminatorConfig | None = None):
        self.graph = graph or default_skeleton()
        self.config = config or DiscriminatorConfig()
        cfg = self.config
        if len(cfg.channels) != 4:
            raise ValueError("the discriminator has exactly three blocks (four channel sizes)")
        if cfg.tau % 2 == 0:
            raise ValueError("tau must be odd")
        self.gcn_adj = build_adjacency_set(self.graph, cfg.gcn_scales).stacked()
        self.g3d_tiled = build_adjacency_set(self.graph, cfg.g3d_scales).tiled(cfg.tau)

    def init_params(self, rng: np.random.Generator) -> dict[str, np.ndarray]:
        cfg = self.config
        params = {}
        for i in range(3):
            blk = gcn.init_block(rng, cfg.channels[i], cfg.channels[i + 1],
                                 cfg.gcn_scales + 1, cfg.g3d_scales + 1)
            params.update({f"block{i}.{k}": v for k, v in blk.items()})
        c = cfg.channels[-1]
        params["head_w"] = gcn.init_uniform(rng, (c,), c, 1)
        params["head_b"] = np.zeros(())
        return params

    def _block(self, params, i):
        prefix = f"block{i}."
        return {k[len(prefix):]: v for k, v in params.items() if k.startswith(prefix)}

    def forward(self, x, params):
        """Score a batch of skeleton windows ``(B, T+1, N, 3)`` -> ``(B,)``."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 3:
            x = x[None]
        if x.shape[2] != self.graph.num_joints or x.shape[3] != self.config.channels[0]:
            raise ValueError(f"input {x.shape} does not match ({self.graph.num_joints} joints, "
                             f"{self.config.channels[0]} channels)")
        h = x - x[:, :, self.config.root:self.config.root + 1] if self.config.center else x
        caches = []
        for i in range(3):
            h, c = gcn.block_forward(h, self._block(params, i), self.gcn_adj, self.g3d_tiled,
                                     self.config.tau)
            caches.append(c)
        pooled = h.mean(axis=(1, 2))
        score = pooled @ params["head_w"] + params["head_b"]
        return score, (caches, pooled, h.shape)

    def backward(self, cache, dscore, params):
        """Gradients for ``sum(dscore * score)``; returns ``(dx, grads)``."""
        caches, pooled, hshape = cache
        dscore = np.asarray(dscore, dtype=np.float64).reshape(-1)
        grads = {"head_w": pooled.T @ dscore, "head_b": np.asarray(dscore.sum())}
        B, T, N, C = hshape
        dh = np.broadcast_to((dscore[:, None] * params["head_w"][None, :])[:, None, None, :] / (T * N),
                             hshape).copy()
        for i in reversed(range(3)):
            dh, g = gcn.block_backward(caches[i], dh)
            grads.update({f"block{i}.{k}": v for k, v in g.items()})
        if self.config.center:
            r = self.config.root
            dh = dh.copy()
            dh[:, :, r] -= dh.sum(axis=2)
        return dh, grads

    def score(self, x, params):
        return self.forward(x, params)[0]


def fit_discriminator(disc: MotionDiscriminator, params, real, fake, iterations=1500, batch_size=32,
                      lr=3e-3, rng=None, callback=None):
    """Train ``params`` in place with the least-squares objective on two fixed
    pools of windows (``real`` scored toward 1, ``fake`` toward 0).

    ``callback(iteration, loss)`` is called after every step.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    opt = Adam(params, lr)
    for it in range(iterations):
        r = real[rng.integers(len(real), size=batch_size)]
        f = fake[rng.integers(len(fake), size=batch_size)]
        s, cache = disc.forward(np.concatenate([r, f]), params)
        dr, df = discriminator_loss_grad(s[:batch_size], s[batch_size:])
        _, grads = disc.backward(cache, np.concatenate([dr, df]), params)
        opt.step(params, grads)
        if callback is not None:
            callback(it, discriminator_loss(s[:batch_size], s[batch_size:]))
    return params


def accuracy(disc: MotionDiscriminator, params, real, fake, threshold=0.5) -> float:
    """Balanced accuracy: real windows should score above ``threshold``."""
    return 0.5 * (float(np.mean(disc.score(real, params) > threshold))
                  + float(np.mean(disc.score(fake, params) <= threshold)))
