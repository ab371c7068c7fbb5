"""The assembled predictor + discriminator and the frame-by-frame rollout used
for evaluation and live streams."""
from __future__ import annotations

from collections import deque

import numpy as np

from .config import RunConfig
from .discriminator import DiscriminatorConfig, MotionDiscriminator
from .encoder import EncoderConfig, FROZEN, build_input_features, init_encoder, predict_frame
from .graph import SkeletonGraph
from .kinematics import CAM, NUM_PARAMS, POSE, SHAPE, KinematicModel, default_model, fk_joints
from .metrics import accel_error, mpjpe, pa_mpjpe


class TePose:
    """Fixed structure (configs, kinematics, graph operators) plus parameter dicts."""

    def __init__(self, cfg: RunConfig, kin: KinematicModel | None = None, graph: SkeletonGraph | None = None):
        self.cfg = cfg
        self.kin = kin or default_model()
        graph = graph or self.kin.graph()
        if graph.num_joints != self.kin.num_joints:
            raise ValueError("discriminator skeleton and kinematic model disagree on the joint count")
        self.enc_cfg = EncoderConfig(cfg.feature_dim, cfg.hidden, cfg.reg_hidden, cfg.gru_layers,
                                     cfg.n_iter, cfg.two_gru, cfg.feedback)
        self.disc = MotionDiscriminator(graph, DiscriminatorConfig(tuple(cfg.disc_channels), cfg.gcn_scales,
                                                                   cfg.g3d_scales, cfg.tau))
        ss = np.random.SeedSequence(cfg.seed)
        enc_ss, disc_ss = ss.spawn(2)
        self.enc_params = init_encoder(np.random.default_rng(enc_ss), self.enc_cfg)
        self.disc_params = self.disc.init_params(np.random.default_rng(disc_ss))

    frozen = FROZEN

    @property
    def T(self) -> int:
        return self.cfg.T

    def joints(self, theta):
        theta = np.atleast_2d(theta)
        return fk_joints(theta[:, POSE], theta[:, SHAPE], self.kin)

    def predict_window(self, static_window, history, params=None):
        """Eval-mode parameters for the last frame of each window ``(B, T+1, F)``."""
        params = self.enc_params if params is None else params
        X = build_input_features(static_window, history, feedback=self.enc_cfg.feedback)
        return predict_frame(X, params, self.enc_cfg, "eval")[0]

    # ------------------------------------------------------------------ rollout

    def rollout(self, static_feats, warm_params, params=None):
        """Causal frame-by-frame prediction over ``(V, L, F)`` feature sequences.

        Frames ``0..T-1`` take ``warm_params`` ``(V, T, 85)``; every later frame
        is predicted from the previous ``T`` parameter vectors (warm start or
        own predictions). Returns ``(V, L, 85)``.
        """
        static_feats = np.asarray(static_feats, dtype=np.float64)
        V, L, _ = static_feats.shape
        T = self.T
        out = np.zeros((V, L, NUM_PARAMS))
        out[:, :T] = warm_params
        for t in range(T, L):
            out[:, t] = self.predict_window(static_feats[:, t - T:t + 1], out[:, t - T:t], params)
        return out


class StreamingPredictor:
    """Live-stream wrapper: keeps only the last ``T+1`` features and ``T``
    parameter vectors, so memory and per-frame cost do not grow."""

    def __init__(self, model: TePose, warm_params, params=None):
        T = model.T
        warm_params = np.asarray(warm_params, dtype=np.float64)
        if warm_params.shape != (T, NUM_PARAMS):
            raise ValueError(f"warm start needs {T} parameter vectors")
        self.model = model
        self.params = params
        self.warm = warm_params
        self.feats: deque = deque(maxlen=T + 1)
        self.history: deque = deque(maxlen=T)
        self.t = 0

    def push(self, feat):
        """Consume frame ``t``; returns its prediction, or ``None`` during warm start."""
        feat = np.asarray(feat, dtype=np.float64)
        if feat.ndim != 1 or feat.shape[0] != self.model.cfg.feature_dim:
            raise ValueError(f"frame {self.t}: expected a {self.model.cfg.feature_dim}-dim feature vector")
        T = self.model.T
        self.feats.append(feat)
        if self.t < T:
            self.history.append(self.warm[self.t])
            self.t += 1
            return None
        pred = self.model.predict_window(np.stack(self.feats)[None], np.stack(self.history)[None],
                                         self.params)[0]
        self.history.append(pred)
        self.t += 1
        return pred


def warm_params_for(model: TePose, video, source="gt"):
    T = model.T
    if source == "gt" and video.gt_params is not None:
        return video.gt_params[:T].copy()
    return np.broadcast_to(model.enc_params["reg.mean"], (T, NUM_PARAMS)).copy()


def evaluate_videos(model: TePose, videos, params=None, source="gt", batched=False):
    """MPJPE / PA-MPJPE / ACCEL (mm) over predicted frames ``T..L-1``.

    Errors are pooled over all predicted frames; ACCEL is weighted by each
    video's number of interior frames. With ``batched`` equal-length videos
    are rolled out together (faster, not bitwise equal to one-by-one).
    """
    T = model.T
    preds = {}
    if batched:
        groups: dict[int, list] = {}
        for v in videos:
            groups.setdefault(v.length, []).append(v)
        for vs in groups.values():
            out = model.rollout(np.stack([v.static_feats for v in vs]),
                                np.stack([warm_params_for(model, v, source) for v in vs]), params)
            preds.update({v.id: o for v, o in zip(vs, out)})
    else:
        for v in videos:
            preds[v.id] = model.rollout(v.static_feats[None], warm_params_for(model, v, source)[None], params)[0]
    pj, gj, acc, acc_w = [], [], 0.0, 0
    for v in videos:
        p = model.joints(preds[v.id][T:]) * 1000.0
        g = v.gt_joints3d[T:] * 1000.0
        pj.append(p)
        gj.append(g)
        if len(p) >= 3:
            acc += accel_error(p, g) * (len(p) - 2)
            acc_w += len(p) - 2
    P = np.concatenate(pj)
    G = np.concatenate(gj)
    return {
        "mpjpe": mpjpe(P, G),
        "pa_mpjpe": pa_mpjpe(P, G),
        "accel": acc / max(acc_w, 1),
        "mpvpe": "n/a",
    }, preds
