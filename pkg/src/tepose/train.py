"""Alternating predictor / discriminator training with sequential loading."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import losses as L
from .encoder import build_input_features, fit_input_normalization, predict_backward, predict_frame, regress
from .kinematics import CAM, NUM_PARAMS, POSE, SHAPE, fk_backward, fk_joints, project_2d, project_backward
from .loader import (LoaderState, PredictionCache, assemble_mixed_batch, epoch_subsample, warm_start)
from .model import TePose, evaluate_videos
from .optim import Adam, PlateauDecay

log = logging.getLogger(__name__)


class NumericalError(RuntimeError):
    pass


@dataclass
class BranchLoss:
    l2d: float = 0.0
    l3d: float = 0.0
    l_theta: float = 0.0
    l_adv: float = 0.0
    total: float = 0.0


def generator_loss(model: TePose, theta, targets, fake_past, disc_params, weights):
    """Batch-mean gated loss for one branch's predictions ``theta`` ``(B, 85)``.

    ``targets`` holds per-sample ``flags``, ``j2d``, ``j3d`` and ``params``
    (rows may be ``None`` where the flag is off); ``fake_past`` is the
    ``(B, T, N, 3)`` skeleton of the previous predictions that precede the
    current frame in the discriminator window. Returns ``(BranchLoss, dtheta)``.
    """
    B = theta.shape[0]
    cam, pose, shape = theta[:, CAM], theta[:, POSE], theta[:, SHAPE]
    joints, fk_cache = fk_joints(pose, shape, model.kin, return_cache=True)
    x2d = project_2d(joints, cam)
    dx2d = np.zeros_like(x2d)
    dj = np.zeros_like(joints)
    dtheta = np.zeros_like(theta)
    acc = BranchLoss()

    adv_idx = [i for i in range(B) if not targets["flags"][i].has_smpl]
    scores = {}
    if adv_idx and weights["l_adv"] > 0:
        win = np.concatenate([fake_past[adv_idx], joints[adv_idx][:, None]], axis=1)
        s, dcache = model.disc.forward(win, disc_params)
        ds = np.array([L.adversarial_loss_grad(x) for x in s]) * weights["l_adv"] / B
        dwin, _ = model.disc.backward(dcache, ds, disc_params)
        dj[adv_idx] += dwin[:, -1]
        scores = dict(zip(adv_idx, s))

    for i in range(B):
        f = targets["flags"][i]
        l2d = L.loss_2d(x2d[i], targets["j2d"][i])
        dx2d[i] += weights["l2d"] * L.keypoint_loss_grad(x2d[i], targets["j2d"][i]) / B
        l3d = l_theta = l_adv = None
        if f.has_3d:
            l3d = L.loss_3d(joints[i], targets["j3d"][i])
            dj[i] += weights["l3d"] * L.keypoint_loss_grad(joints[i], targets["j3d"][i]) / B
        if f.has_smpl:
            l_theta = L.loss_smpl(theta[i], targets["params"][i])
            dtheta[i] += weights["l_theta"] * L.loss_smpl_grad(theta[i], targets["params"][i]) / B
        elif weights["l_adv"] > 0:
            l_adv = L.adversarial_loss(scores[i])
        else:
            l_adv = 0.0
        br = L.total_loss(f, l2d, l3d, l_theta, l_adv, weights)
        acc.l2d += br.l2d / B
        acc.l3d += br.l3d / B
        acc.l_theta += br.l_theta / B
        acc.l_adv += br.l_adv / B
        acc.total += br.total / B

    dj_proj, dcam = project_backward(joints, cam, dx2d)
    dpose, dshape = fk_backward(fk_cache, dj + dj_proj, model.kin)
    dtheta[:, CAM] += dcam
    dtheta[:, POSE] += dpose
    dtheta[:, SHAPE] += dshape
    return acc, dtheta


class Trainer:
    def __init__(self, model: TePose, data: dict, real_windows: np.ndarray):
        cfg = model.cfg
        self.model = model
        self.cfg = cfg
        self.data = data
        self.real = real_windows
        ss = np.random.SeedSequence([cfg.seed, 1])
        load_ss, disc_ss, epoch_ss = ss.spawn(3)
        self.state = LoaderState(T=cfg.T, H=cfg.H, gamma=cfg.gamma, batch_size=cfg.batch_size,
                                 gamma_scope=cfg.gamma_scope, ratio_3d=cfg.ratio_3d,
                                 selection=cfg.selection, seed=cfg.seed, rng=np.random.default_rng(load_ss))
        self.disc_rng = np.random.default_rng(disc_ss)
        self.epoch_rng = np.random.default_rng(epoch_ss)
        betas = (cfg.adam_beta1, cfg.adam_beta2)
        self.opt_gen = Adam(model.enc_params, cfg.lr_gen, betas, frozen=model.frozen)
        self.opt_disc = Adam(model.disc_params, cfg.lr_disc, betas)
        self.plateau = PlateauDecay([self.opt_gen, self.opt_disc], cfg.patience, cfg.lr_factor)
        self.weights = {"l2d": cfg.w_2d, "l3d": cfg.w_3d, "l_theta": cfg.w_theta,
                        "l_adv": cfg.w_adv if cfg.adversarial else 0.0}
        if cfg.normalize_inputs and data["train_3d"]:
            fit_input_normalization(model.enc_params,
                                    np.concatenate([v.static_feats for v in data["train_3d"]]),
                                    np.concatenate([v.gt_params for v in data["train_3d"]]))
        self.cache = PredictionCache()
        mean = model.enc_params["reg.mean"]
        for v in list(data["train_3d"]) + list(data["train_2d"]):
            warm_start(v, self.cache, cfg.T, cfg.warm_start, mean, upto=v.length if cfg.prefill else None)
        self.pool_3d = list(data["train_3d"])
        self.history: list[dict] = []
        self.epoch_log: list[dict] = []

    @property
    def j(self) -> int:
        return self.state.j

    def _new_epoch(self):
        self.pool_3d = epoch_subsample(self.data["train_3d"], self.cfg.epoch_fraction, self.epoch_rng)
        if (self.cfg.refresh_cache or self.cfg.refresh_every) and self.state.j > 0:
            self.refresh_cache(self.pool_3d + list(self.data["train_2d"]))

    def refresh_cache(self, videos):
        """Overwrite cached frames ``T..`` with a causal rollout of the current model."""
        model, T = self.model, self.cfg.T
        if not videos:
            return
        # causal rollout, so zero-padding short videos to a common length
        # leaves their real frames untouched
        L = max(v.length for v in videos)
        feats = np.zeros((len(videos), L, self.cfg.feature_dim))
        for i, v in enumerate(videos):
            feats[i, :v.length] = v.static_feats
        warm = np.stack([[self.cache.get(v.id, t) for t in range(T)] for v in videos])
        out = model.rollout(feats, warm)
        for v, o in zip(videos, out):
            for t in range(T, v.length):
                self.cache.update(v.id, t, o[t], self.state.j)

    def step(self):
        """One iteration; returns a log row (or ``None`` when the batch squeezed to nothing)."""
        cfg, model = self.cfg, self.model
        if self.state.j % cfg.H == 0:
            self._new_epoch()
        elif cfg.refresh_every and self.state.j % cfg.refresh_every == 0:
            self.refresh_cache(self.pool_3d + list(self.data["train_2d"]))
        items = assemble_mixed_batch(self.state, self.pool_3d, self.data["train_2d"], self.cache)
        row = None
        if items:
            row = self._train_on(items)
        self.state.j += 1
        if self.state.j % cfg.H == 0:
            self._end_epoch()
        return row

    def _train_on(self, items):
        cfg, model = self.cfg, self.model
        T = cfg.T
        B = len(items)
        static = np.stack([it.video.static_feats[it.window] for it in items])
        hist = np.stack([it.history(self.cache) for it in items])
        X = build_input_features(static, hist if model.enc_cfg.feedback else None,
                                 feedback=model.enc_cfg.feedback)
        preds, pcache = predict_frame(X, model.enc_params, model.enc_cfg, "train")

        # the discriminator's generated window: resolved past frames + current prediction
        past_joints = model.joints(hist.reshape(-1, NUM_PARAMS)).reshape(B, T, -1, 3)
        targets = {
            "flags": [it.video.flags for it in items],
            "j2d": [it.video.gt_joints2d[it.frame] for it in items],
            "j3d": [None if it.video.gt_joints3d is None else it.video.gt_joints3d[it.frame] for it in items],
            "params": [None if it.video.gt_params is None else it.video.gt_params[it.frame] for it in items],
        }
        branch_losses, dpreds = [], []
        for th in preds:
            bl, dth = generator_loss(model, th, targets, past_joints, model.disc_params, self.weights)
            branch_losses.append(bl)
            dpreds.append(dth)
        total = sum(b.total for b in branch_losses)
        if not np.isfinite(total):
            raise NumericalError(f"non-finite predictor loss at iteration {self.state.j}")
        grads = predict_backward(pcache, dpreds, model.enc_params, model.enc_cfg)

        # eval-mode prediction with the pre-step parameters feeds the cache
        g_uni, g_bi = pcache[1]["g"]
        g = 0.5 * (g_uni + g_bi) if model.enc_cfg.two_gru else g_uni
        theta_eval = regress(g, model.enc_params, model.enc_cfg.n_iter)[0]
        self.opt_gen.step(model.enc_params, grads)

        d_loss = float("nan")
        if self.weights["l_adv"] > 0:
            fake = np.concatenate([past_joints, model.joints(theta_eval)[:, None]], axis=1)
            real = self.real[self.disc_rng.integers(len(self.real), size=B)]
            s, c = model.disc.forward(np.concatenate([real, fake]), model.disc_params)
            d_loss = L.discriminator_loss(s[:B], s[B:])
            if not np.isfinite(d_loss):
                raise NumericalError(f"non-finite discriminator loss at iteration {self.state.j}")
            dr, df = L.discriminator_loss_grad(s[:B], s[B:])
            _, dgrads = model.disc.backward(c, np.concatenate([dr, df]), model.disc_params)
            self.opt_disc.step(model.disc_params, dgrads)

        for it, th in zip(items, theta_eval):
            self.cache.update(it.video.id, it.frame, th, self.state.j)

        def mean(attr):
            return float(np.mean([getattr(b, attr) for b in branch_losses]))

        row = {"iteration": self.state.j, "frame": items[0].frame, "batch": B, "loss": total,
               "l2d": mean("l2d"), "l3d": mean("l3d"), "l_theta": mean("l_theta"), "l_adv": mean("l_adv"),
               "d_loss": d_loss, "lr_gen": self.opt_gen.lr}
        self.history.append(row)
        return row

    def _end_epoch(self):
        if not self.cfg.validate_every_epoch or not self.data.get("val"):
            return
        res, _ = evaluate_videos(self.model, self.data["val"], source=self.cfg.warm_start, batched=True)
        decayed = self.plateau.step(res["mpjpe"])
        self.epoch_log.append({"iteration": self.state.j, "val_mpjpe": res["mpjpe"], "decayed": decayed,
                               "lr_gen": self.opt_gen.lr})
        log.info("epoch end j=%d val mpjpe %.2f mm%s", self.state.j, res["mpjpe"], " (lr decay)" if decayed else "")

    def run(self, iterations=None, callback=None):
        n = self.cfg.iterations if iterations is None else iterations
        for _ in range(n):
            row = self.step()
            if callback is not None and row is not None:
                callback(row)
        return self.history
