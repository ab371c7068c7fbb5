"""Central finite-difference checks for every hand-written backward pass.

Each suite builds small random instances, turns the operation into a scalar
``sum(G * out)`` with a random ``G``, and compares the analytic gradient of
every input and parameter against ``(f(x + h) - f(x - h)) / 2h``. The error
of one instance is ``|a - n| / max(|a|, |n|)`` over the probed coordinates
(2-norms).
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import gcn
from . import losses as L
from .discriminator import DiscriminatorConfig, MotionDiscriminator
from .encoder import (EncoderConfig, gru_step, gru_step_backward, init_encoder, init_gru, predict_backward,
                      predict_frame, regress, regress_backward)
from .graph import SkeletonGraph, build_adjacency_set
from .kinematics import NUM_PARAMS, NUM_POSE, NUM_SHAPE, default_model, fk_backward, fk_joints, project_2d, project_backward

STEP = 1e-5
TOLERANCE = 1e-5


@dataclass
class SuiteResult:
    name: str
    instances: int
    max_error: float
    seconds: float

    @property
    def passed(self) -> bool:
        return bool(self.max_error < TOLERANCE)


def relative_error(a, n, floor=1e-12) -> float:
    a = np.ravel(a)
    n = np.ravel(n)
    return float(np.linalg.norm(a - n) / max(np.linalg.norm(a), np.linalg.norm(n), floor))


def check(f, arrays: dict, analytic: dict, rng, max_probe: int | None = None, step=STEP) -> float:
    """Compare ``analytic[k]`` with central differences of ``f()`` w.r.t. ``arrays[k]``.

    ``f`` must read the arrays in place. With ``max_probe`` only that many
    random coordinates per array are probed.
    """
    num, ana = [], []
    for k, arr in arrays.items():
        flat = arr.reshape(-1)      # a view: arrays are contiguous
        idx = np.arange(flat.size)
        if max_probe is not None and flat.size > max_probe:
            idx = rng.choice(flat.size, size=max_probe, replace=False)
        g = np.asarray(analytic[k]).reshape(-1)
        for i in idx:
            old = flat[i]
            flat[i] = old + step
            fp = f()
            flat[i] = old - step
            fm = f()
            flat[i] = old
            num.append((fp - fm) / (2 * step))
            ana.append(g[i])
    return relative_error(np.array(ana), np.array(num))


# Rectifier inputs closer to zero than this could cross the kink under a
# probe step; such instances are redrawn.
KINK_MARGIN = 1e-4


def _near_kink(*pre) -> bool:
    return any(np.min(np.abs(p)) < KINK_MARGIN for p in pre)


def random_graph(rng, n_min=3, n_max=6) -> SkeletonGraph:
    """A random tree plus, sometimes, one extra edge."""
    n = int(rng.integers(n_min, n_max + 1))
    edges = [(int(rng.integers(j)), j) for j in range(1, n)]
    if n > 3 and rng.random() < 0.5:
        a, b = rng.choice(n, size=2, replace=False)
        if (min(a, b), max(a, b)) not in {(min(e), max(e)) for e in edges}:
            edges.append((int(a), int(b)))
    return SkeletonGraph(n, edges)


# --------------------------------------------------------------------------- suites

def _msgcn(rng):
    g = random_graph(rng)
    adj = build_adjacency_set(g, int(rng.integers(1, 5))).stacked()
    S = adj.shape[0]
    B, T, C, Co = 2, 3, 3, 4
    x = rng.normal(size=(B, T, g.num_joints, C))
    w = rng.normal(size=(S, C, Co))
    act = "relu" if rng.random() < 0.5 else None
    G = rng.normal(size=(B, T, g.num_joints, Co))
    out, cache = gcn.msgcn_forward(x, adj, w, act)
    if act and _near_kink(cache[4]):
        return _msgcn(rng)
    dx, gr = gcn.msgcn_backward(cache, G)
    return check(lambda: float(np.sum(G * gcn.msgcn_forward(x, adj, w, act)[0])),
                 {"x": x, "w": w}, {"x": dx, "w": gr["w"]}, rng)


def _msg3d(rng):
    g = random_graph(rng)
    tau = int(rng.choice([1, 3, 5]))
    tiled = build_adjacency_set(g, int(rng.integers(1, 4))).tiled(tau)
    S = tiled.shape[0]
    B, T, C, Co = 2, 4, 2, 3
    x = rng.normal(size=(B, T, g.num_joints, C))
    w = rng.normal(size=(S, C, Co))
    act = "relu" if rng.random() < 0.5 else None
    G = rng.normal(size=(B, T, g.num_joints, Co))
    _, cache = gcn.msg3d_forward(x, tiled, w, tau, act)
    if act and _near_kink(cache[4]):
        return _msg3d(rng)
    dx, gr = gcn.msg3d_backward(cache, G)
    return check(lambda: float(np.sum(G * gcn.msg3d_forward(x, tiled, w, tau, act)[0])),
                 {"x": x, "w": w}, {"x": dx, "w": gr["w"]}, rng)


def _block(rng):
    g = random_graph(rng)
    gcn_adj = build_adjacency_set(g, 3).stacked()
    g3d = build_adjacency_set(g, 2).tiled(3)
    C = 3
    Co = int(rng.choice([3, 4]))
    params = gcn.init_block(rng, C, Co, gcn_adj.shape[0], g3d.shape[0])
    x = rng.normal(size=(2, 4, g.num_joints, C))
    G = rng.normal(size=(2, 4, g.num_joints, Co))
    _, cache = gcn.block_forward(x, params, gcn_adj, g3d, 3)
    if _near_kink(cache[4]):
        return _block(rng)
    dx, gr = gcn.block_backward(cache, G)
    arrays = {"x": x, **params}
    ana = {"x": dx, **gr}
    return check(lambda: float(np.sum(G * gcn.block_forward(x, params, gcn_adj, g3d, 3)[0])), arrays, ana, rng)


def _discriminator(rng):
    g = random_graph(rng, 4, 6)
    disc = MotionDiscriminator(g, DiscriminatorConfig(channels=(3, 4, 5, 6), gcn_scales=3, g3d_scales=2, tau=3))
    params = disc.init_params(rng)
    params["head_b"] = np.array(rng.normal())
    x = rng.normal(size=(3, 4, g.num_joints, 3))
    G = rng.normal(size=3)
    _, cache = disc.forward(x, params)
    if _near_kink(*(c[4] for c in cache[0])):
        return _discriminator(rng)
    dx, gr = disc.backward(cache, G, params)
    return check(lambda: float(np.sum(G * disc.forward(x, params)[0])), {"x": x, **params}, {"x": dx, **gr},
                 rng, max_probe=25)


def _gru(rng):
    n_in, hid, B = 4, 3, 2
    p = init_gru(rng, n_in, hid, "c")
    cell = {k[2:]: v for k, v in p.items()}
    for k in ("bz", "br", "bn"):
        cell[k] = rng.normal(scale=0.5, size=hid)
    x = rng.normal(size=(B, n_in))
    h = rng.normal(scale=0.5, size=(B, hid))
    G = rng.normal(size=(B, hid))
    _, cache = gru_step(x, h, cell)
    grads = {k: np.zeros_like(v) for k, v in cell.items()}
    dx, dh = gru_step_backward(cache, G, cell, grads)
    return check(lambda: float(np.sum(G * gru_step(x, h, cell)[0])), {"x": x, "h": h, **cell},
                 {"x": dx, "h": dh, **grads}, rng)


def _small_encoder(rng, two_gru=True):
    cfg = EncoderConfig(feature_dim=4, hidden=3, reg_hidden=4, layers=2, n_iter=3, two_gru=two_gru)
    params = init_encoder(rng, cfg)
    params["reg.dec.W"] = rng.normal(scale=0.3, size=params["reg.dec.W"].shape)
    params["in.shift"] = rng.normal(scale=0.1, size=cfg.input_dim)
    params["in.scale"] = rng.uniform(0.5, 2.0, size=cfg.input_dim)
    return cfg, params


def _regressor(rng):
    cfg, params = _small_encoder(rng)
    g = rng.normal(size=(2, cfg.hidden))
    G = rng.normal(size=(2, NUM_PARAMS))
    _, caches = regress(g, params, cfg.n_iter)
    dg, gr = regress_backward(caches, G, params)
    arrays = {"g": g, **{k: params[k] for k in gr}}
    return check(lambda: float(np.sum(G * regress(g, params, cfg.n_iter)[0])), arrays, {"g": dg, **gr},
                 rng, max_probe=30)


def _encoder(rng):
    cfg, params = _small_encoder(rng, two_gru=bool(rng.random() < 0.7))
    mode = "train" if rng.random() < 0.5 else "eval"
    feats = rng.normal(size=(2, 3, cfg.input_dim))
    feats[:, -1, cfg.feature_dim:] = 0.0
    out, cache = predict_frame(feats, params, cfg, mode)
    Gs = [rng.normal(size=o.shape) for o in out] if mode == "train" else rng.normal(size=out.shape)

    def f():
        o = predict_frame(feats, params, cfg, mode)[0]
        if mode == "train":
            return float(sum(np.sum(G * oo) for G, oo in zip(Gs, o)))
        return float(np.sum(Gs * o))

    grads = predict_backward(cache, Gs, params, cfg)
    trained = {k: params[k] for k in grads}
    return check(f, trained, grads, rng, max_probe=6)


def _fk(rng):
    model = default_model()
    B = 2
    pose = rng.normal(scale=0.5, size=(B, NUM_POSE))
    shape = rng.normal(size=(B, NUM_SHAPE))
    G = rng.normal(size=(B, model.num_joints, 3))
    _, cache = fk_joints(pose, shape, model, return_cache=True)
    dpose, dshape = fk_backward(cache, G, model)
    return check(lambda: float(np.sum(G * fk_joints(pose, shape, model))), {"pose": pose, "shape": shape},
                 {"pose": dpose, "shape": dshape}, rng)


def _project(rng):
    X = rng.normal(size=(3, 5, 3))
    cam = rng.normal(size=(3, 3))
    G = rng.normal(size=(3, 5, 2))
    dX, dcam = project_backward(X, cam, G)
    return check(lambda: float(np.sum(G * project_2d(X, cam))), {"X": X, "cam": cam}, {"X": dX, "cam": dcam}, rng)


def _losses(rng):
    errs = []
    a, b = rng.normal(size=(5, 3)), rng.normal(size=(5, 3))
    errs.append(check(lambda: L.keypoint_loss(a, b), {"a": a}, {"a": L.keypoint_loss_grad(a, b)}, rng))
    p, q = rng.normal(size=(2, NUM_PARAMS)), rng.normal(size=(2, NUM_PARAMS))
    errs.append(check(lambda: L.loss_smpl(p, q), {"p": p}, {"p": L.loss_smpl_grad(p, q)}, rng, max_probe=40))
    s = np.array(rng.normal())
    errs.append(check(lambda: L.adversarial_loss(s), {"s": s.reshape(1)}, {"s": L.adversarial_loss_grad(s)}, rng))
    r, f = rng.normal(size=4), rng.normal(size=3)
    dr, df = L.discriminator_loss_grad(r, f)
    errs.append(check(lambda: L.discriminator_loss(r, f), {"r": r, "f": f}, {"r": dr, "f": df}, rng))
    return max(errs)


def _generator_loss(rng):
    # imported here: the training module pulls in the whole model stack
    from .config import desk_config
    from .losses import SupervisionFlags
    from .model import TePose
    from .train import generator_loss

    cfg = desk_config(feature_dim=4, hidden=3, reg_hidden=4, disc_channels=(3, 4, 4, 4), gcn_scales=2,
                      g3d_scales=1, seed=int(rng.integers(1 << 30)))
    model = TePose(cfg)
    B, N, T = 4, model.kin.num_joints, cfg.T
    theta = np.concatenate([rng.uniform(0.5, 0.7, (B, 1)), rng.normal(scale=0.1, size=(B, 2)),
                            rng.normal(scale=0.3, size=(B, NUM_POSE)), rng.normal(size=(B, NUM_SHAPE))], axis=1)
    flags = [SupervisionFlags(1, 1), SupervisionFlags(1, 0), SupervisionFlags(0, 0), SupervisionFlags(0, 1)]
    targets = {
        "flags": flags,
        "j2d": [rng.normal(scale=0.3, size=(N, 2)) for _ in range(B)],
        "j3d": [rng.normal(scale=0.3, size=(N, 3)) if f.has_3d else None for f in flags],
        "params": [rng.normal(scale=0.3, size=NUM_PARAMS) if f.has_smpl else None for f in flags],
    }
    past = rng.normal(scale=0.3, size=(B, T, N, 3))
    weights = {"l2d": 1.0, "l3d": 0.7, "l_theta": 1.3, "l_adv": 0.5}
    adv = [i for i, f in enumerate(flags) if not f.has_smpl]
    win = np.concatenate([past[adv], model.joints(theta[adv])[:, None]], axis=1)
    if _near_kink(*(c[4] for c in model.disc.forward(win, model.disc_params)[1][0])):
        return _generator_loss(rng)
    _, dtheta = generator_loss(model, theta, targets, past, model.disc_params, weights)
    return check(lambda: generator_loss(model, theta, targets, past, model.disc_params, weights)[0].total,
                 {"theta": theta}, {"theta": dtheta}, rng, max_probe=60)


SUITES = {
    "msgcn": _msgcn,
    "msg3d": _msg3d,
    "gcn_block": _block,
    "discriminator": _discriminator,
    "gru_cell": _gru,
    "regressor": _regressor,
    "encoder": _encoder,
    "fk_joints": _fk,
    "project_2d": _project,
    "losses": _losses,
    "generator_loss": _generator_loss,
}


def run_suite(name, instances=20, seed=0) -> SuiteResult:
    fn = SUITES[name]
    t0 = time.perf_counter()
    worst = 0.0
    for i in range(instances):
        rng = np.random.default_rng([seed, i, len(name)])
        worst = max(worst, fn(rng))
    return SuiteResult(name, instances, worst, time.perf_counter() - t0)


def run_all(instances=20, seed=0, names=None) -> list[SuiteResult]:
    return [run_suite(n, instances, seed) for n in (names or SUITES)]
