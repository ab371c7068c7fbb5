from __future__ import annotations

import numpy as np


class Adam:
    """Adam over a dict of arrays; keys in ``frozen`` are never touched."""

    def __init__(self, params, lr, betas=(0.9, 0.999), eps=1e-8, frozen=()):
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.frozen = set(frozen)
        self.m = {k: np.zeros_like(v) for k, v in params.items() if k not in self.frozen}
        self.v = {k: np.zeros_like(v) for k, v in params.items() if k not in self.frozen}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k, g in grads.items():
            if k in self.frozen:
                continue
            m = self.m[k]
            v = self.v[k]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            params[k] = params[k] - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state_dict(self):
        out = {f"m/{k}": v for k, v in self.m.items()}
        out.update({f"v/{k}": v for k, v in self.v.items()})
        return out

    def load_state_dict(self, arrays, t, lr):
        for k in self.m:
            self.m[k] = np.array(arrays[f"m/{k}"])
            self.v[k] = np.array(arrays[f"v/{k}"])
        self.t = int(t)
        self.lr = float(lr)


class PlateauDecay:
    """Divide the learning rates by ``1/factor`` when the monitored error has
    not improved for ``patience`` consecutive epochs."""

    def __init__(self, optimizers, patience=8, factor=0.1):
        self.optimizers = list(optimizers)
        self.patience = patience
        self.factor = factor
        self.best = np.inf
        self.bad_epochs = 0

    def step(self, error) -> bool:
        if error < self.best:
            self.best = error
            self.bad_epochs = 0
            return False
        self.bad_epochs += 1
        if self.bad_epochs >= self.patience:
            for opt in self.optimizers:
                opt.lr *= self.factor
            self.bad_epochs = 0
            return True
        return False
