"""Pose evaluation metrics on ``(frames, joints, 3)`` sequences in millimeters."""
from __future__ import annotations

import numpy as np


def _pair(pred, gt):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.ndim == 2:
        pred, gt = pred[None], gt[None]
    if pred.shape != gt.shape or pred.shape[-1] != 3:
        raise ValueError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    return pred, gt


def mpjpe(pred, gt, root=0):
    """Mean joint distance after subtracting each sequence's root joint per frame."""
    pred, gt = _pair(pred, gt)
    p = pred - pred[:, root:root + 1]
    g = gt - gt[:, root:root + 1]
    return float(np.mean(np.linalg.norm(p - g, axis=-1)))


def similarity_align(src, dst):
    """Best ``s R src + t`` approximating ``dst`` for one ``(N, 3)`` frame.

    Orthogonal Procrustes on the centered cross-covariance with a determinant
    correction that rules out reflections.
    """
    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    xs = src - mu_s
    xd = dst - mu_d
    var_s = np.sum(xs ** 2)
    if np.linalg.matrix_rank(xs, tol=1e-9 * max(1.0, np.sqrt(var_s))) < 2:
        raise ValueError("degenerate (collinear or coincident) joint configuration")
    K = xd.T @ xs
    U, sig, Vt = np.linalg.svd(K)
    Z = np.eye(3)
    Z[-1, -1] = np.sign(np.linalg.det(U @ Vt))
    R = U @ Z @ Vt
    scale = np.trace(np.diag(sig) @ Z) / var_s
    t = mu_d - scale * R @ mu_s
    return scale * src @ R.T + t


def procrustes_align(pred, gt):
    pred, gt = _pair(pred, gt)
    return np.stack([similarity_align(p, g) for p, g in zip(pred, gt)])


def pa_mpjpe(pred, gt):
    """Mean joint distance after per-frame similarity alignment of ``pred`` onto ``gt``."""
    pred, gt = _pair(pred, gt)
    aligned = procrustes_align(pred, gt)
    return float(np.mean(np.linalg.norm(aligned - gt, axis=-1)))


def accel_error(pred, gt):
    """Mean norm of the difference of second differences (mm / frame^2)."""
    pred, gt = _pair(pred, gt)
    if pred.shape[0] < 3:
        raise ValueError("acceleration error needs at least 3 frames")
    a_p = pred[2:] - 2 * pred[1:-1] + pred[:-2]
    a_g = gt[2:] - 2 * gt[1:-1] + gt[:-2]
    return float(np.mean(np.linalg.norm(a_p - a_g, axis=-1)))


def evaluate_sequence(pred, gt, root=0):
    return {
        "mpjpe": mpjpe(pred, gt, root),
        "pa_mpjpe": pa_mpjpe(pred, gt),
        "accel": accel_error(pred, gt),
        "mpvpe": "n/a",
    }
