"""Temporally embedded encoder: GRU stacks over per-frame features that carry
the previous parameter predictions, and an iterative regressor started from
the mean parameters.

Shapes: features ``(B, T+1, F+85)``, hidden states ``(B, h)``, parameter
vectors ``(B, 85)``. Learnable parameters live in one flat dict with dotted
names (``uni.l0.Wz``, ``reg.fc1.W`` ...).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kinematics import NUM_PARAMS


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


# --------------------------------------------------------------------------- features

PREDICTED, GROUND_TRUTH, ZERO = "pred", "gt", "zero"


def build_input_features(static_feats, param_history, sources=None, feedback=True):
    """Concatenate static features with a parameter slot for each frame.

    ``static_feats`` is ``(T+1, F)`` (or batched ``(B, T+1, F)``) and
    ``param_history`` holds the ``T`` past parameter vectors already resolved
    to their source. ``sources`` names that source per past frame; a ``None``
    entry means the frame has no source, which is an error. The last frame
    always gets a zero slot. ``feedback=False`` zeroes every slot.
    """
    static_feats = np.asarray(static_feats, dtype=np.float64)
    batched = static_feats.ndim == 3
    if not batched:
        static_feats = static_feats[None]
        param_history = None if param_history is None else np.asarray(param_history)[None]
        sources = None if sources is None else [sources]
    B, T1, _ = static_feats.shape
    slots = np.zeros((B, T1, NUM_PARAMS))
    if feedback:
        if param_history is None:
            raise ValueError("past frames need a parameter source")
        param_history = np.asarray(param_history, dtype=np.float64)
        if param_history.shape != (B, T1 - 1, NUM_PARAMS):
            raise ValueError(f"parameter history shape {param_history.shape} != {(B, T1 - 1, NUM_PARAMS)}")
        if sources is not None:
            for row in sources:
                if len(row) != T1 - 1 or any(s is None for s in row):
                    raise ValueError("missing parameter source for a past frame")
        slots[:, :-1] = param_history
    out = np.concatenate([static_feats, slots], axis=-1)
    return out if batched else out[0]


# --------------------------------------------------------------------------- GRU cell

def init_gru(rng, n_in, hidden, prefix):
    p = {}
    a_in = np.sqrt(6.0 / (n_in + hidden))
    a_h = np.sqrt(6.0 / (2 * hidden))
    for g in ("z", "r", "n"):
        p[f"{prefix}.W{g}"] = rng.uniform(-a_in, a_in, (n_in, hidden))
        p[f"{prefix}.U{g}"] = rng.uniform(-a_h, a_h, (hidden, hidden))
        p[f"{prefix}.b{g}"] = np.zeros(hidden)
    return p


def gru_step(x, h, cell):
    """One update. ``cell`` maps ``Wz Uz bz Wr Ur br Wn Un bn`` to arrays.

    z = sig(x Wz + h Uz + bz); r = sig(x Wr + h Ur + br);
    n = tanh(x Wn + (r*h) Un + bn); h' = (1 - z) n + z h
    """
    z = sigmoid(x @ cell["Wz"] + h @ cell["Uz"] + cell["bz"])
    r = sigmoid(x @ cell["Wr"] + h @ cell["Ur"] + cell["br"])
    rh = r * h
    n = np.tanh(x @ cell["Wn"] + rh @ cell["Un"] + cell["bn"])
    h_new = (1.0 - z) * n + z * h
    return h_new, (x, h, z, r, rh, n)


def gru_step_backward(cache, dh_new, cell, grads):
    """Accumulates parameter gradients into ``grads``; returns ``(dx, dh)``."""
    x, h, z, r, rh, n = cache
    dn = dh_new * (1.0 - z)
    dz = dh_new * (h - n)
    dh = dh_new * z
    dn_pre = dn * (1.0 - n * n)
    dz_pre = dz * z * (1.0 - z)
    grads["Wn"] += x.T @ dn_pre
    grads["Un"] += rh.T @ dn_pre
    grads["bn"] += dn_pre.sum(axis=0)
    drh = dn_pre @ cell["Un"].T
    dr_pre = drh * h * r * (1.0 - r)
    dh += drh * r
    grads["Wz"] += x.T @ dz_pre
    grads["Uz"] += h.T @ dz_pre
    grads["bz"] += dz_pre.sum(axis=0)
    grads["Wr"] += x.T @ dr_pre
    grads["Ur"] += h.T @ dr_pre
    grads["br"] += dr_pre.sum(axis=0)
    dx = dn_pre @ cell["Wn"].T + dz_pre @ cell["Wz"].T + dr_pre @ cell["Wr"].T
    dh += dz_pre @ cell["Uz"].T + dr_pre @ cell["Ur"].T
    return dx, dh


def _cell(params, prefix):
    n = len(prefix) + 1
    return {k[n:]: v for k, v in params.items() if k.startswith(prefix + ".")}


def run_gru(xs, cell, reverse=False):
    """Unroll over ``xs`` ``(B, T, in)`` from a zero state; returns ``(H, caches)``."""
    B, T, _ = xs.shape
    h = np.zeros((B, cell["Uz"].shape[0]))
    H = np.zeros((B, T, h.shape[1]))
    caches = [None] * T
    order = range(T - 1, -1, -1) if reverse else range(T)
    for t in order:
        h, caches[t] = gru_step(xs[:, t], h, cell)
        H[:, t] = h
    return H, caches


def run_gru_backward(dH, caches, cell, reverse=False):
    """BPTT for :func:`run_gru`; returns ``(dxs, cell_grads)``."""
    B, T, hid = dH.shape
    grads = {k: np.zeros_like(v) for k, v in cell.items()}
    dxs = np.zeros((B, T, caches[0][0].shape[1]))
    dh = np.zeros((B, hid))
    order = range(T) if reverse else range(T - 1, -1, -1)
    for t in order:
        dxs[:, t], dh = gru_step_backward(caches[t], dH[:, t] + dh, cell, grads)
    return dxs, grads


# --------------------------------------------------------------------------- encoder

@dataclass
class EncoderConfig:
    feature_dim: int = 64      # F; 2048 at full scale
    hidden: int = 128          # h; 1024 at full scale
    reg_hidden: int = 128      # regressor width; 1024 at full scale
    layers: int = 2
    n_iter: int = 3
    two_gru: bool = True       # False: a single uni-directional GRU stack
    feedback: bool = True      # False: parameter slots forced to zero

    @property
    def input_dim(self) -> int:
        return self.feature_dim + NUM_PARAMS


def default_mean_params():
    mean = np.zeros(NUM_PARAMS)
    mean[0] = 0.6
    return mean


def init_encoder(rng, cfg: EncoderConfig, mean_params=None) -> dict[str, np.ndarray]:
    p = {}
    n_in = cfg.input_dim
    for l in range(cfg.layers):
        p.update(init_gru(rng, n_in if l == 0 else cfg.hidden, cfg.hidden, f"uni.l{l}"))
    if cfg.two_gru:
        for l in range(cfg.layers):
            d_in = n_in if l == 0 else 2 * cfg.hidden
            p.update(init_gru(rng, d_in, cfg.hidden, f"bi.l{l}.fw"))
            p.update(init_gru(rng, d_in, cfg.hidden, f"bi.l{l}.bw"))
    d_in = cfg.hidden + NUM_PARAMS
    for name, a, b in (("fc1", d_in, cfg.reg_hidden), ("fc2", cfg.reg_hidden, cfg.reg_hidden)):
        lim = np.sqrt(6.0 / (a + b))
        p[f"reg.{name}.W"] = rng.uniform(-lim, lim, (a, b))
        p[f"reg.{name}.b"] = np.zeros(b)
    lim = 0.01 * np.sqrt(6.0 / (cfg.reg_hidden + NUM_PARAMS))
    p["reg.dec.W"] = rng.uniform(-lim, lim, (cfg.reg_hidden, NUM_PARAMS))
    p["reg.dec.b"] = np.zeros(NUM_PARAMS)
    p["reg.mean"] = np.array(default_mean_params() if mean_params is None else mean_params, dtype=np.float64)
    p["in.shift"] = np.zeros(n_in)
    p["in.scale"] = np.ones(n_in)
    return p


# fixed (non-trained) entries: the regressor's starting point and the input standardization
FROZEN = ("reg.mean", "in.shift", "in.scale")


def fit_input_normalization(params, static_feats, param_labels, min_scale=1e-3):
    """Set the fixed per-dimension input standardization from training data.

    ``static_feats`` is ``(n, F)`` and ``param_labels`` ``(n, 85)``, both
    pooled over training frames. Dimensions that never vary keep scale 1.
    """
    x = np.concatenate([np.asarray(static_feats, dtype=np.float64),
                        np.asarray(param_labels, dtype=np.float64)], axis=1)
    if x.shape[1] != params["in.shift"].shape[0]:
        raise ValueError(f"normalization data has {x.shape[1]} columns, encoder expects {params['in.shift'].shape[0]}")
    sd = x.std(axis=0)
    params["in.shift"] = x.mean(axis=0)
    params["in.scale"] = np.where(sd > min_scale, sd, 1.0)
    return params


def encode(feats, params, cfg: EncoderConfig):
    """Returns ``(g_uni, g_bi, cache)``; ``g_bi`` is ``None`` for a single GRU.

    ``g_uni`` is the top uni-directional state at the last (current) frame;
    ``g_bi`` averages the forward and backward top states at that frame.
    """
    feats = np.asarray(feats, dtype=np.float64)
    if feats.ndim == 2:
        feats = feats[None]
    if feats.shape[-1] != cfg.input_dim:
        raise ValueError(f"feature width {feats.shape[-1]} != {cfg.input_dim}")
    # parameter slots that are zero by construction (current frame, or all
    # frames without feedback) stay zero after standardization
    feats = (feats - params["in.shift"]) / params["in.scale"]
    feats[:, -1 if cfg.feedback else slice(None), cfg.feature_dim:] = 0.0
    cache = {"uni": [], "bi": []}
    h = feats
    for l in range(cfg.layers):
        h, c = run_gru(h, _cell(params, f"uni.l{l}"))
        cache["uni"].append(c)
    g_uni = h[:, -1]
    g_bi = None
    if cfg.two_gru:
        h = feats
        for l in range(cfg.layers):
            hf, cf = run_gru(h, _cell(params, f"bi.l{l}.fw"))
            hb, cb = run_gru(h, _cell(params, f"bi.l{l}.bw"), reverse=True)
            cache["bi"].append((cf, cb))
            h = np.concatenate([hf, hb], axis=-1)
        g_bi = 0.5 * (hf[:, -1] + hb[:, -1])
    cache["shape"] = feats.shape
    cache["g"] = (g_uni, g_bi)
    return g_uni, g_bi, cache


def encode_backward(cache, dg_uni, dg_bi, params, cfg: EncoderConfig):
    grads = {}
    B, T, _ = cache["shape"]
    hid = cfg.hidden
    if dg_uni is not None:
        dH = np.zeros((B, T, hid))
        dH[:, -1] = dg_uni
        for l in reversed(range(cfg.layers)):
            dH, g = run_gru_backward(dH, cache["uni"][l], _cell(params, f"uni.l{l}"))
            grads.update({f"uni.l{l}.{k}": v for k, v in g.items()})
    if cfg.two_gru and dg_bi is not None:
        dH = np.zeros((B, T, 2 * hid))
        dH[:, -1, :hid] = 0.5 * dg_bi
        dH[:, -1, hid:] = 0.5 * dg_bi
        for l in reversed(range(cfg.layers)):
            cf, cb = cache["bi"][l]
            dxf, gf = run_gru_backward(dH[:, :, :hid], cf, _cell(params, f"bi.l{l}.fw"))
            dxb, gb = run_gru_backward(dH[:, :, hid:], cb, _cell(params, f"bi.l{l}.bw"), reverse=True)
            grads.update({f"bi.l{l}.fw.{k}": v for k, v in gf.items()})
            grads.update({f"bi.l{l}.bw.{k}": v for k, v in gb.items()})
            dH = dxf + dxb
    return grads


# --------------------------------------------------------------------------- regressor

def regress(g, params, n_iter=3):
    """Iterative error feedback from the mean parameters.

    Each iteration maps ``[g, theta]`` through two linear hidden layers and a
    decoder, and adds the 85-dim residual to ``theta``.
    """
    if n_iter < 1:
        raise ValueError("n_iter must be >= 1")
    g = np.atleast_2d(np.asarray(g, dtype=np.float64))
    if g.shape[1] + NUM_PARAMS != params["reg.fc1.W"].shape[0]:
        raise ValueError(f"hidden width {g.shape[1]} does not match the regressor")
    theta = np.broadcast_to(params["reg.mean"], (g.shape[0], NUM_PARAMS)).copy()
    caches = []
    for _ in range(n_iter):
        xc = np.concatenate([g, theta], axis=1)
        a1 = xc @ params["reg.fc1.W"] + params["reg.fc1.b"]
        a2 = a1 @ params["reg.fc2.W"] + params["reg.fc2.b"]
        theta = theta + a2 @ params["reg.dec.W"] + params["reg.dec.b"]
        caches.append((xc, a1, a2))
    return theta, caches


def regress_backward(caches, dtheta, params):
    """Returns ``(dg, grads)`` for the regressor parameters."""
    hid = caches[0][0].shape[1] - NUM_PARAMS
    grads = {k: np.zeros_like(params[k]) for k in
             ("reg.fc1.W", "reg.fc1.b", "reg.fc2.W", "reg.fc2.b", "reg.dec.W", "reg.dec.b")}
    dg = np.zeros((dtheta.shape[0], hid))
    dtheta = np.array(dtheta, dtype=np.float64)
    for xc, a1, a2 in reversed(caches):
        grads["reg.dec.W"] += a2.T @ dtheta
        grads["reg.dec.b"] += dtheta.sum(axis=0)
        da2 = dtheta @ params["reg.dec.W"].T
        grads["reg.fc2.W"] += a1.T @ da2
        grads["reg.fc2.b"] += da2.sum(axis=0)
        da1 = da2 @ params["reg.fc2.W"].T
        grads["reg.fc1.W"] += xc.T @ da1
        grads["reg.fc1.b"] += da1.sum(axis=0)
        dxc = da1 @ params["reg.fc1.W"].T
        dg += dxc[:, :hid]
        dtheta = dtheta + dxc[:, hid:]
    return dg, grads


# --------------------------------------------------------------------------- prediction

def predict_frame(feats, params, cfg: EncoderConfig, mode="eval"):
    """Parameters for the last frame of each window.

    ``mode="train"`` returns a list with one prediction per GRU branch;
    ``mode="eval"`` regresses once from the averaged branch states.
    Also returns the cache needed by :func:`predict_backward`.
    """
    g_uni, g_bi, enc_cache = encode(feats, params, cfg)
    if mode == "train":
        preds, reg_caches = [], []
        for g in (g_uni, g_bi) if cfg.two_gru else (g_uni,):
            th, rc = regress(g, params, cfg.n_iter)
            preds.append(th)
            reg_caches.append(rc)
        return preds, (mode, enc_cache, reg_caches)
    if mode != "eval":
        raise ValueError(f"unknown mode {mode!r}")
    g = 0.5 * (g_uni + g_bi) if cfg.two_gru else g_uni
    th, rc = regress(g, params, cfg.n_iter)
    return th, (mode, enc_cache, [rc])


def predict_backward(cache, dpreds, params, cfg: EncoderConfig):
    """Gradients of ``sum(dpred * pred)`` over the outputs of :func:`predict_frame`."""
    mode, enc_cache, reg_caches = cache
    if mode == "eval":
        dpreds = [dpreds]
    grads = {}
    dgs = []
    for rc, dth in zip(reg_caches, dpreds):
        dg, g = regress_backward(rc, dth, params)
        dgs.append(dg)
        for k, v in g.items():
            grads[k] = grads.get(k, 0) + v
    if mode == "eval":
        dg_uni = 0.5 * dgs[0] if cfg.two_gru else dgs[0]
        dg_bi = 0.5 * dgs[0] if cfg.two_gru else None
    else:
        dg_uni = dgs[0]
        dg_bi = dgs[1] if cfg.two_gru else None
    grads.update(encode_backward(enc_cache, dg_uni, dg_bi, params, cfg))
    return grads
