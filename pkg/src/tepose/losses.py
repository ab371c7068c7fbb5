"""Training objectives: mean-square keypoint and parameter losses, the gated
total, and the least-squares adversarial pair.

Each loss has a ``*_grad`` companion giving the derivative with respect to
its prediction argument.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kinematics import POSE, SHAPE, NUM_PARAMS


@dataclass(frozen=True)
class SupervisionFlags:
    has_3d: int = 1
    has_smpl: int = 1

    def __post_init__(self):
        if self.has_3d not in (0, 1) or self.has_smpl not in (0, 1):
            raise ValueError("supervision flags must be 0 or 1")


@dataclass
class LossBreakdown:
    l2d: float
    l3d: float
    l_theta: float
    l_adv: float
    total: float


def _same(pred, gt):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    return pred, gt


def keypoint_loss(pred, gt):
    """Mean of squared coordinate differences."""
    pred, gt = _same(pred, gt)
    return float(np.mean((pred - gt) ** 2))


def keypoint_loss_grad(pred, gt):
    pred, gt = _same(pred, gt)
    return 2.0 * (pred - gt) / pred.size


loss_3d = keypoint_loss
loss_2d = keypoint_loss


def loss_smpl(pred, gt):
    """Mean-square pose error plus mean-square shape error; camera unsupervised."""
    pred, gt = _same(pred, gt)
    if pred.shape[-1] != NUM_PARAMS:
        raise ValueError(f"parameter vectors must have {NUM_PARAMS} entries")
    return float(np.mean((pred[..., POSE] - gt[..., POSE]) ** 2)
                 + np.mean((pred[..., SHAPE] - gt[..., SHAPE]) ** 2))


def loss_smpl_grad(pred, gt):
    pred, gt = _same(pred, gt)
    g = np.zeros_like(pred)
    d_pose = pred[..., POSE] - gt[..., POSE]
    d_shape = pred[..., SHAPE] - gt[..., SHAPE]
    g[..., POSE] = 2.0 * d_pose / d_pose.size
    g[..., SHAPE] = 2.0 * d_shape / d_shape.size
    return g


def adversarial_loss(score):
    """Generator side: ``(D(x_hat) - 1)^2``."""
    return float((np.asarray(score, dtype=np.float64) - 1.0) ** 2)


def adversarial_loss_grad(score):
    return 2.0 * (np.asarray(score, dtype=np.float64) - 1.0)


def discriminator_loss(real_scores, fake_scores):
    """``mean (D(x) - 1)^2 + mean D(x_hat)^2``."""
    real = np.asarray(real_scores, dtype=np.float64).reshape(-1)
    fake = np.asarray(fake_scores, dtype=np.float64).reshape(-1)
    if real.size == 0 or fake.size == 0:
        raise ValueError("discriminator loss needs non-empty real and fake batches")
    return float(np.mean((real - 1.0) ** 2) + np.mean(fake ** 2))


def discriminator_loss_grad(real_scores, fake_scores):
    real = np.asarray(real_scores, dtype=np.float64).reshape(-1)
    fake = np.asarray(fake_scores, dtype=np.float64).reshape(-1)
    return 2.0 * (real - 1.0) / real.size, 2.0 * fake / fake.size


def total_loss(flags: SupervisionFlags, l2d, l3d=None, l_theta=None, l_adv=None, weights=None) -> LossBreakdown:
    """``L2D + 1_3D L3D + 1_smpl Ltheta + (1 - 1_smpl) Ladv``.

    Components not selected by ``flags`` may be ``None``; a selected one that is
    ``None`` is an error. ``weights`` (default all 1) scales each term.
    """
    w = {"l2d": 1.0, "l3d": 1.0, "l_theta": 1.0, "l_adv": 1.0, **(weights or {})}
    if flags.has_3d and l3d is None:
        raise ValueError("3D supervision is flagged but no 3D loss was given")
    if flags.has_smpl and l_theta is None:
        raise ValueError("parameter supervision is flagged but no parameter loss was given")
    if not flags.has_smpl and l_adv is None:
        raise ValueError("adversarial loss is required when parameter labels are absent")
    l3d = 0.0 if l3d is None else float(l3d)
    l_theta = 0.0 if l_theta is None else float(l_theta)
    l_adv = 0.0 if l_adv is None else float(l_adv)
    total = (w["l2d"] * float(l2d) + flags.has_3d * w["l3d"] * l3d
             + flags.has_smpl * w["l_theta"] * l_theta + (1 - flags.has_smpl) * w["l_adv"] * l_adv)
    return LossBreakdown(float(l2d), l3d, l_theta, l_adv, total)
