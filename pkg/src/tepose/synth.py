"""Deterministic synthetic motion corpora.

Poses are sums of sinusoids per driven axis-angle coordinate. Static
"image" features are a fixed linear image of the labels plus a per-video
constant bias and per-frame noise, so that frame features are shifted in a
way that is constant within a video but differs between videos.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .kinematics import (NUM_PARAMS, NUM_POSE, NUM_SHAPE, POSE, SHAPE, KinematicModel,
                         fk_joints, project_2d)
from .losses import SupervisionFlags

SMOOTH_BAND = (0.005, 0.05)
JERKY_BAND = (0.15, 0.4)


@dataclass
class MotionGenConfig:
    seed: int = 0
    length: int = 120
    smoothness: str = "smooth"            # "smooth" | "jerky"
    band: tuple[float, float] = SMOOTH_BAND
    high_band: tuple[float, float] = JERKY_BAND
    amplitude: tuple[float, float] = (0.1, 0.6)   # radians, total per coordinate
    high_amplitude: float = 0.15                  # radians, total added by the jerky class
    root_amplitude: float = 0.3
    components: tuple[int, int] = (2, 4)
    shape_scale: float = 1.0
    camera_scale: tuple[float, float] = (0.5, 0.7)
    camera_shift: float = 0.1

    def __post_init__(self):
        for lo, hi in (self.band, self.high_band):
            if not (0 < lo <= hi < 0.5):
                raise ValueError("frequencies must lie in (0, 0.5) cycles/frame")
        if self.smoothness not in ("smooth", "jerky"):
            raise ValueError("smoothness is 'smooth' or 'jerky'")


@dataclass
class FeatureSimConfig:
    seed: int = 0
    feature_dim: int = 64
    noise: float = 0.05         # per-frame noise scale
    bias: float = 0.5           # per-video constant bias scale
    gain: float = 2.5
    pose_scale: float = 0.25    # typical pose-coordinate magnitude; pose columns are divided by it


@dataclass
class VideoRecord:
    id: str
    static_feats: np.ndarray | None          # (L, F)
    gt_params: np.ndarray | None             # (L, 85)
    gt_joints3d: np.ndarray | None           # (L, N, 3) meters
    gt_joints2d: np.ndarray                  # (L, N, 2)
    flags: SupervisionFlags = field(default_factory=SupervisionFlags)
    # labels kept for feature simulation / diagnostics even on 2D-only records
    hidden_params: np.ndarray | None = None

    @property
    def length(self) -> int:
        return int(self.gt_joints2d.shape[0])

    def __post_init__(self):
        L = self.gt_joints2d.shape[0]
        for name in ("static_feats", "gt_params", "gt_joints3d", "hidden_params"):
            arr = getattr(self, name)
            if arr is not None and arr.shape[0] != L:
                raise ValueError(f"{name} has {arr.shape[0]} frames, expected {L}")
        if self.flags.has_smpl and self.gt_params is None:
            raise ValueError("has_smpl flag set without parameter labels")
        if self.flags.has_3d and self.gt_joints3d is None:
            raise ValueError("has_3d flag set without 3D joint labels")


def driven_coordinates(model: KinematicModel) -> np.ndarray:
    """Pose-vector indices (0..71) whose triples move some joint position."""
    has_child = set(p for p in model.parents if p >= 0)
    trip = [model.joint_map[j] for j in range(model.num_joints) if j in has_child]
    return np.array(sorted(3 * t + c for t in set(trip) for c in range(3)))


def _components(rng, n_coord, band, amp_total, n_range):
    """Per coordinate: list of (amp, freq, phase) with amplitudes summing to <= amp_total."""
    comps = []
    for i in range(n_coord):
        k = rng.integers(n_range[0], n_range[1] + 1)
        freqs = rng.uniform(band[0], band[1], size=k)
        phases = rng.uniform(0, 2 * np.pi, size=k)
        w = rng.dirichlet(np.ones(k))
        comps.append(np.stack([amp_total[i] * w, freqs, phases], axis=1))
    return comps


def _evaluate(comps, t):
    return np.stack([np.sum(c[:, 0:1] * np.sin(2 * np.pi * c[:, 1:2] * t[None] + c[:, 2:3]), axis=0)
                     for c in comps], axis=1)


def generate_motion(cfg: MotionGenConfig, model: KinematicModel, video_id: str | None = None,
                    return_components: bool = False):
    """A fully labelled :class:`VideoRecord` (no static features yet)."""
    rng = np.random.default_rng(cfg.seed)
    coords = driven_coordinates(model)
    root = 3 * model.joint_map[0]
    amp_total = rng.uniform(cfg.amplitude[0], cfg.amplitude[1], size=len(coords))
    is_root = (coords >= root) & (coords < root + 3)
    amp_total[is_root] = np.minimum(amp_total[is_root], cfg.root_amplitude)
    comps = _components(rng, len(coords), cfg.band, amp_total, cfg.components)
    if cfg.smoothness == "jerky":
        hi = _components(rng, len(coords), cfg.high_band, np.full(len(coords), cfg.high_amplitude),
                         cfg.components)
        comps = [np.concatenate([a, b]) for a, b in zip(comps, hi)]
    t = np.arange(cfg.length, dtype=np.float64)
    pose = np.zeros((cfg.length, NUM_POSE))
    pose[:, coords] = _evaluate(comps, t)
    beta = rng.normal(scale=cfg.shape_scale, size=NUM_SHAPE)
    cam = np.array([rng.uniform(*cfg.camera_scale), *rng.uniform(-cfg.camera_shift, cfg.camera_shift, 2)])
    params = np.zeros((cfg.length, NUM_PARAMS))
    params[:, :3] = cam
    params[:, POSE] = pose
    params[:, SHAPE] = beta
    j3d = fk_joints(pose, np.broadcast_to(beta, (cfg.length, NUM_SHAPE)), model)
    j2d = project_2d(j3d, np.broadcast_to(cam, (cfg.length, 3)))
    rec = VideoRecord(video_id or f"video{cfg.seed}", None, params, j3d, j2d,
                      SupervisionFlags(1, 1), hidden_params=params)
    if return_components:
        return rec, (coords, comps)
    return rec


def displacement_bound(rec: VideoRecord, comps_info, model: KinematicModel) -> np.ndarray:
    """Upper bound on any joint's per-frame displacement, per joint.

    Each coordinate moves at most ``sum 2 pi f A`` per frame; a rotation
    changes by at most the norm of its axis-angle change, and a joint moves
    by at most the sum over its ancestors of (rotation change along the
    chain) times the bone length.
    """
    coords, comps = comps_info
    step = np.zeros(NUM_POSE)
    for c, cc in zip(coords, comps):
        step[c] = np.sum(2 * np.pi * cc[:, 1] * np.abs(cc[:, 0]))
    trip_step = np.linalg.norm(step.reshape(-1, 3), axis=1)
    beta = rec.gt_params[0, SHAPE]
    bone = np.linalg.norm(model.offsets(beta)[0], axis=1)
    N = model.num_joints
    rot_change = np.zeros(N)   # bound on |Delta G_j|
    bound = np.zeros(N)
    for j in range(N):
        p = model.parents[j]
        own = trip_step[model.joint_map[j]]
        if p < 0:
            rot_change[j] = own
            continue
        rot_change[j] = rot_change[p] + own
        bound[j] = bound[p] + rot_change[p] * bone[j]
    return bound


def feature_matrix(cfg: FeatureSimConfig) -> np.ndarray:
    rng = np.random.default_rng([cfg.seed, 0x5EED])
    k = NUM_POSE + NUM_SHAPE
    M = rng.normal(scale=cfg.gain / np.sqrt(k), size=(cfg.feature_dim, k))
    M[:, :NUM_POSE] /= cfg.pose_scale     # pose and shape comparably visible
    return M


def simulate_static_features(rec: VideoRecord, cfg: FeatureSimConfig, video_seed: int,
                             matrix: np.ndarray | None = None) -> np.ndarray:
    """``M (theta, beta) + b_video + noise_frame`` for every frame."""
    labels = rec.hidden_params if rec.hidden_params is not None else rec.gt_params
    if labels is None:
        raise ValueError("feature simulation needs parameter labels")
    M = feature_matrix(cfg) if matrix is None else matrix
    rng = np.random.default_rng([cfg.seed, video_seed])
    x = np.concatenate([labels[:, POSE], labels[:, SHAPE]], axis=1)
    bias = rng.normal(scale=cfg.bias, size=cfg.feature_dim) if cfg.bias > 0 else np.zeros(cfg.feature_dim)
    noise = rng.normal(scale=cfg.noise, size=(rec.length, cfg.feature_dim)) if cfg.noise > 0 else 0.0
    return x @ M.T + bias + noise


def sliding_windows(joints, window):
    """All root-centered windows ``(L - window + 1, window, N, 3)``."""
    joints = np.asarray(joints)
    n = joints.shape[0] - window + 1
    w = np.stack([joints[i:i + window] for i in range(max(n, 0))]) if n > 0 else \
        np.zeros((0, window) + joints.shape[1:])
    return w - w[:, :, :1]


def generate_real_pool(cfgs, model: KinematicModel, T: int) -> np.ndarray:
    """Root-centered ``(T+1)``-frame windows from each configured sequence."""
    out = [sliding_windows(generate_motion(c, model).gt_joints3d, T + 1) for c in cfgs]
    return np.concatenate(out) if out else np.zeros((0, T + 1, model.num_joints, 3))


def class_windows(smoothness: str, count: int, model: KinematicModel, T: int, seed: int = 0,
                  length: int = 40, stride: int = 7) -> np.ndarray:
    """``count`` root-centered ``(T+1)``-frame windows of one motion class.

    Windows are taken every ``stride`` frames from consecutive seeds starting
    at ``seed``, so pools built from disjoint seed ranges share no motion.
    """
    out, have, s = [], 0, seed
    while have < count:
        rec = generate_motion(MotionGenConfig(seed=s, length=length, smoothness=smoothness), model)
        w = sliding_windows(rec.gt_joints3d, T + 1)[::stride]
        out.append(w)
        have += len(w)
        s += 1
    return np.concatenate(out)[:count]


@dataclass
class DatasetConfig:
    seed: int = 0
    n_3d: int = 24
    n_2d: int = 24
    n_val: int = 2
    n_test: int = 6
    n_real: int = 24
    length: tuple[int, int] = (90, 130)
    test_length: int = 100
    motion: MotionGenConfig = field(default_factory=MotionGenConfig)
    features: FeatureSimConfig = field(default_factory=FeatureSimConfig)


def make_dataset(cfg: DatasetConfig, model: KinematicModel):
    """Splits ``train_3d``, ``train_2d`` (labels stripped to 2D), ``val``,
    ``test`` and ``real`` (smooth motions without features, for the
    discriminator's real pool)."""
    ss = np.random.SeedSequence(cfg.seed)
    rng = np.random.default_rng(ss)
    M = feature_matrix(cfg.features)
    out = {"train_3d": [], "train_2d": [], "val": [], "test": [], "real": []}
    idx = 0
    plan = [("train_3d", cfg.n_3d), ("train_2d", cfg.n_2d), ("val", cfg.n_val), ("test", cfg.n_test),
            ("real", cfg.n_real)]
    for split, count in plan:
        for _ in range(count):
            seed = int(rng.integers(2 ** 31))
            length = cfg.test_length if split in ("val", "test") else int(rng.integers(cfg.length[0], cfg.length[1] + 1))
            mcfg = replace(cfg.motion, seed=seed, length=length)
            rec = generate_motion(mcfg, model, video_id=f"{split}_{idx:04d}")
            idx += 1
            if split != "real":
                rec.static_feats = simulate_static_features(rec, cfg.features, seed, M)
            if split == "train_2d":
                rec = VideoRecord(rec.id, rec.static_feats, None, None, rec.gt_joints2d,
                                  SupervisionFlags(0, 0), hidden_params=rec.hidden_params)
            out[split].append(rec)
    return out


def dataset_config(run_cfg) -> DatasetConfig:
    """Dataset settings carried by a :class:`~tepose.config.RunConfig`."""
    return DatasetConfig(
        seed=run_cfg.seed, n_3d=run_cfg.n_3d, n_2d=run_cfg.n_2d, n_val=run_cfg.n_val,
        n_test=run_cfg.n_test, n_real=run_cfg.n_real,
        length=(run_cfg.min_length, run_cfg.max_length), test_length=run_cfg.test_length,
        features=FeatureSimConfig(seed=run_cfg.seed, feature_dim=run_cfg.feature_dim,
                                  noise=run_cfg.feature_noise, bias=run_cfg.feature_bias,
                                  gain=run_cfg.feature_gain),
    )


def real_windows(records, T: int) -> np.ndarray:
    """Root-centered ``(T+1)``-frame windows from every record in ``records``."""
    return np.concatenate([sliding_windows(r.gt_joints3d, T + 1) for r in records])
