"""Multi-scale spatial (MS-GCN) and spatio-temporal (MS-G3D) graph convolutions.

All layers take features shaped ``(B, T, N, C)`` (batch, frames, joints,
channels) and come as ``*_forward`` / ``*_backward`` pairs. A forward call
returns ``(out, cache)``; the matching backward takes the cache and the
upstream gradient and returns ``(dX, grads)``. Graph convolutions carry no
bias.
"""
from __future__ import annotations

import numpy as np


def relu(x):
    return np.maximum(x, 0.0)


def init_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape)


def _check(x, adj, w):
    if x.ndim != 4:
        raise ValueError(f"expected (B, T, N, C) features, got shape {x.shape}")
    if adj.shape[0] != w.shape[0]:
        raise ValueError(f"{adj.shape[0]} adjacency scales but {w.shape[0]} weight matrices")
    if adj.shape[1] != x.shape[2]:
        raise ValueError(f"adjacency is for {adj.shape[1]} joints, features have {x.shape[2]}")
    if w.shape[1] != x.shape[3]:
        raise ValueError(f"weights expect {w.shape[1]} channels, features have {x.shape[3]}")


# --------------------------------------------------------------------------- MS-GCN

def group_scales(adj):
    """Distinct matrices of ``adj`` and, per distinct matrix, the scales using it.

    Scales past the graph diameter (and scale 0) all reduce to the identity,
    so ``sum_k A_k X W_k`` is evaluated as ``sum_u A_u X (sum_{k in u} W_k)``.
    """
    uniq, groups = [], []
    for k, a in enumerate(adj):
        for u, b in enumerate(uniq):
            if np.array_equal(a, b):
                groups[u].append(k)
                break
        else:
            uniq.append(a)
            groups.append([k])
    return np.stack(uniq), groups


def _aggregate(adj_u, x):
    """``(U, N, M)`` x ``(B, T, M, C)`` -> ``(B*T*N, U*C)`` rows per (frame, joint)."""
    U, N, M = adj_u.shape
    B, T, _, C = x.shape
    xt = np.ascontiguousarray(x.transpose(2, 0, 1, 3)).reshape(M, B * T * C)
    z = (adj_u.reshape(U * N, M) @ xt).reshape(U, N, B * T, C)
    return np.ascontiguousarray(z.transpose(2, 1, 0, 3)).reshape(B * T * N, U * C)


def _aggregate_backward(adj_u, dz, xshape):
    U, N, M = adj_u.shape
    B, T, _, C = xshape
    dz = np.ascontiguousarray(dz.reshape(B * T, N, U, C).transpose(2, 1, 0, 3)).reshape(U * N, B * T * C)
    dxt = adj_u.reshape(U * N, M).T @ dz
    return dxt.reshape(M, B, T, C).transpose(1, 2, 0, 3)


def _grouped_weights(w, groups):
    return np.concatenate([w[g].sum(axis=0) for g in groups], axis=0)


def _split_weight_grad(dwu, groups, shape):
    S, C, Co = shape
    dw = np.empty(shape)
    for u, g in enumerate(groups):
        dw[g] = dwu[u * C:(u + 1) * C]
    return dw


def msgcn_forward(x, adj, w, activation=None, groups=None):
    """``act(sum_k adj[k] @ x_t @ w[k])`` for every frame.

    ``adj`` is ``(S, N, N)`` normalized, ``w`` is ``(S, C, C')``.
    """
    _check(x, adj, w)
    if groups is None:
        adj_u, groups = group_scales(adj)
    else:
        adj_u = np.stack([adj[g[0]] for g in groups])
    B, T, N, _ = x.shape
    Co = w.shape[2]
    z = _aggregate(adj_u, x)
    pre = (z @ _grouped_weights(w, groups)).reshape(B, T, N, Co)
    out = relu(pre) if activation == "relu" else pre
    return out, (z, adj_u, groups, w, pre, activation, x.shape)


def msgcn_backward(cache, dout):
    z, adj_u, groups, w, pre, activation, xshape = cache
    if dout.shape != pre.shape:
        raise ValueError(f"upstream gradient shape {dout.shape} != output shape {pre.shape}")
    if activation == "relu":
        dout = dout * (pre > 0)
    Co = w.shape[2]
    d2 = dout.reshape(-1, Co)
    dw = _split_weight_grad(z.T @ d2, groups, w.shape)
    dz = d2 @ _grouped_weights(w, groups).T
    return _aggregate_backward(adj_u, dz, xshape), {"w": dw}


# --------------------------------------------------------------------------- MS-G3D

def center_rows(tiled: np.ndarray, num_joints: int, tau: int) -> np.ndarray:
    """Rows of the tiled adjacency belonging to the window's middle frame.

    Returns ``(S, N, tau, N)``: weight from joint ``m`` at window offset
    ``d`` onto joint ``n`` of the centre frame.
    """
    S = tiled.shape[0]
    c = tau // 2
    rows = tiled[:, c * num_joints:(c + 1) * num_joints, :]
    return rows.reshape(S, num_joints, tau, num_joints)


def _windows(x, tau):
    B, T, N, C = x.shape
    h = tau // 2
    xp = np.zeros((B, T + 2 * h, N, C))
    xp[:, h:h + T] = x
    return np.stack([xp[:, d:d + T] for d in range(tau)], axis=2)  # (B, T, tau, N, C)


def msg3d_forward(x, tiled, w, tau, activation=None):
    """Spatio-temporal convolution over zero-padded windows of ``tau`` frames.

    ``tiled`` is ``(S, tau*N, tau*N)``. Each output frame is the centre
    block of the window result, so the output keeps ``T`` frames.
    """
    if tau < 1 or tau % 2 == 0:
        raise ValueError("window tau must be a positive odd number")
    B, T, N, C = x.shape
    if tiled.shape[1] != tau * N:
        raise ValueError(f"tiled adjacency size {tiled.shape[1]} != tau*N = {tau * N}")
    if tiled.shape[0] != w.shape[0] or w.shape[1] != C:
        raise ValueError("weight/adjacency/feature dimensions disagree")
    Co = w.shape[2]
    rows = center_rows(tiled, N, tau).reshape(-1, N, tau * N)
    adj_u, groups = group_scales(rows)
    xw = _windows(x, tau).reshape(B, T, tau * N, C)
    z = _aggregate(adj_u, xw)
    pre = (z @ _grouped_weights(w, groups)).reshape(B, T, N, Co)
    out = relu(pre) if activation == "relu" else pre
    return out, (z, adj_u, groups, w, pre, activation, tau, x.shape)


def msg3d_backward(cache, dout):
    z, adj_u, groups, w, pre, activation, tau, xshape = cache
    if dout.shape != pre.shape:
        raise ValueError(f"upstream gradient shape {dout.shape} != output shape {pre.shape}")
    if activation == "relu":
        dout = dout * (pre > 0)
    B, T, N, C = xshape
    Co = w.shape[2]
    d2 = dout.reshape(-1, Co)
    dw = _split_weight_grad(z.T @ d2, groups, w.shape)
    dz = d2 @ _grouped_weights(w, groups).T
    dxw = _aggregate_backward(adj_u, dz, (B, T, tau * N, C)).reshape(B, T, tau, N, C)
    h = tau // 2
    dxp = np.zeros((B, T + 2 * h, N, C))
    for d in range(tau):
        dxp[:, d:d + T] += dxw[:, :, d]
    return dxp[:, h:h + T], {"w": dw}


# --------------------------------------------------------------------------- block

def init_block(rng, c_in, c_out, gcn_scales, g3d_scales):
    """Parameters for one residual block; ``*_scales`` count matrices (K+1)."""
    p = {
        "gcn_w": init_uniform(rng, (gcn_scales, c_in, c_out), c_in, c_out),
        "g3d_w": init_uniform(rng, (g3d_scales, c_in, c_out), c_in, c_out),
    }
    if c_in != c_out:
        p["res_w"] = init_uniform(rng, (c_in, c_out), c_in, c_out)
    return p


def block_forward(x, params, gcn_adj, g3d_tiled, tau, activation="relu"):
    """``act(msgcn(x) + msg3d(x) + residual(x))`` with linear branches."""
    y1, c1 = msgcn_forward(x, gcn_adj, params["gcn_w"])
    y2, c2 = msg3d_forward(x, g3d_tiled, params["g3d_w"], tau)
    res_w = params.get("res_w")
    if res_w is None:
        if x.shape[-1] != y1.shape[-1]:
            raise ValueError("channel change needs a residual projection")
        res = x
    else:
        res = x @ res_w
    pre = y1 + y2 + res
    out = relu(pre) if activation == "relu" else pre
    return out, (x, c1, c2, res_w, pre, activation)


def block_backward(cache, dout):
    x, c1, c2, res_w, pre, activation = cache
    if activation == "relu":
        dout = dout * (pre > 0)
    dx1, g1 = msgcn_backward(c1, dout)
    dx2, g2 = msg3d_backward(c2, dout)
    grads = {"gcn_w": g1["w"], "g3d_w": g2["w"]}
    if res_w is None:
        dres = dout
    else:
        C, Co = res_w.shape
        grads["res_w"] = x.reshape(-1, C).T @ dout.reshape(-1, Co)
        dres = dout @ res_w.T
    return dx1 + dx2 + dres, grads
