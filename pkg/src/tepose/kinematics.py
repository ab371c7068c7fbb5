"""Toy kinematic body model: axis-angle forward kinematics over a joint tree,
weak-perspective projection, and their exact reverse-mode gradients.

Parameter layout of the 85-dim vector is ``[camera(3) | pose(72) | shape(10)]``
with camera ``(scale, tx, ty)`` and pose as 24 axis-angle triples.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import DEFAULT_PARENTS, SkeletonGraph

NUM_CAM = 3
NUM_POSE = 72
NUM_SHAPE = 10
NUM_PARAMS = NUM_CAM + NUM_POSE + NUM_SHAPE
CAM = slice(0, NUM_CAM)
POSE = slice(NUM_CAM, NUM_CAM + NUM_POSE)
SHAPE = slice(NUM_CAM + NUM_POSE, NUM_PARAMS)

SMALL_ANGLE = 1e-8


def split_params(theta_full):
    theta_full = np.asarray(theta_full)
    return theta_full[..., CAM], theta_full[..., POSE], theta_full[..., SHAPE]


def skew(v):
    v = np.asarray(v, dtype=np.float64)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def rodrigues(r):
    """Axis-angle vectors ``(..., 3)`` to rotation matrices ``(..., 3, 3)``."""
    r = np.asarray(r, dtype=np.float64)
    angle = np.linalg.norm(r, axis=-1)
    K = skew(r)
    K2 = K @ K
    small = angle < SMALL_ANGLE
    safe = np.where(small, 1.0, angle)
    a = np.where(small, 1.0, np.sin(safe) / safe)
    b = np.where(small, 0.5, (1.0 - np.cos(safe)) / safe ** 2)
    return np.eye(3) + a[..., None, None] * K + b[..., None, None] * K2


def rodrigues_backward(r, R, dR):
    """Gradient of ``sum(dR * rodrigues(r))`` with respect to ``r``.

    Uses dR/dr_i = (r_i [r]x + [r x (I - R) e_i]x) R / |r|^2, and the
    first-order term [e_i]x below the small-angle threshold.
    """
    r = np.asarray(r, dtype=np.float64)
    angle2 = np.sum(r * r, axis=-1)
    small = np.sqrt(angle2) < SMALL_ANGLE
    safe2 = np.where(small, 1.0, angle2)
    K = skew(r)
    IR = np.eye(3) - R
    grad = np.zeros(r.shape)
    eye = np.eye(3)
    for i in range(3):
        col = IR[..., :, i]
        M = (r[..., i, None, None] * K + skew(np.cross(r, col))) / safe2[..., None, None]
        dRi = M @ R
        dRi = np.where(small[..., None, None], skew(eye[i]), dRi)
        grad[..., i] = np.sum(dRi * dR, axis=(-2, -1))
    return grad


def _default_rest_offsets():
    # meters, y up; left is +x
    return np.array([
        [0.00, 0.00, 0.00],    # pelvis
        [0.00, 0.50, 0.00],    # neck
        [0.17, 0.00, 0.00],    # l_shoulder
        [0.28, 0.00, 0.00],    # l_elbow
        [0.25, 0.00, 0.00],    # l_wrist
        [-0.17, 0.00, 0.00],   # r_shoulder
        [-0.28, 0.00, 0.00],   # r_elbow
        [-0.25, 0.00, 0.00],   # r_wrist
        [0.10, -0.05, 0.00],   # l_hip
        [0.00, -0.42, 0.00],   # l_knee
        [0.00, -0.40, 0.00],   # l_ankle
        [-0.10, -0.05, 0.00],  # r_hip
        [0.00, -0.42, 0.00],   # r_knee
        [0.00, -0.40, 0.00],   # r_ankle
    ])


# SMPL-style joint indices whose pose triples drive each of the 14 joints.
DEFAULT_JOINT_MAP = (0, 12, 16, 18, 20, 17, 19, 21, 1, 4, 7, 2, 5, 8)


@dataclass
class KinematicModel:
    parents: tuple[int, ...]
    rest_offsets: np.ndarray          # (N, 3)
    joint_map: tuple[int, ...]        # (N,) pose-triple index per joint
    shape_basis: np.ndarray           # (N, 3, 10)

    def __post_init__(self):
        n = len(self.parents)
        self.rest_offsets = np.asarray(self.rest_offsets, dtype=np.float64)
        self.shape_basis = np.asarray(self.shape_basis, dtype=np.float64)
        roots = [j for j, p in enumerate(self.parents) if p < 0]
        if len(roots) != 1 or roots[0] != 0:
            raise ValueError("kinematic model needs exactly one root, at joint 0")
        for j, p in enumerate(self.parents):
            if j > 0 and not (0 <= p < j):
                raise ValueError(f"joint {j} has parent {p}; parents must precede children in a tree")
        if self.rest_offsets.shape != (n, 3) or self.shape_basis.shape != (n, 3, NUM_SHAPE):
            raise ValueError("rest offsets / shape basis do not match the joint count")
        if len(self.joint_map) != n or not all(0 <= m < NUM_POSE // 3 for m in self.joint_map):
            raise ValueError("joint_map must give one pose triple in [0, 24) per joint")

    @property
    def num_joints(self) -> int:
        return len(self.parents)

    def graph(self) -> SkeletonGraph:
        return SkeletonGraph(self.num_joints, tuple((j, p) for j, p in enumerate(self.parents) if p >= 0))

    def offsets(self, beta):
        """Shape-adjusted bone offsets ``(B, N, 3)``."""
        return self.rest_offsets + np.einsum("nkd,bd->bnk", self.shape_basis, np.atleast_2d(beta))


def default_model(seed: int = 7) -> KinematicModel:
    rest = _default_rest_offsets()
    coef = np.random.default_rng(seed).normal(scale=0.03, size=(len(DEFAULT_PARENTS), NUM_SHAPE))
    basis = rest[:, :, None] * coef[:, None, :]
    return KinematicModel(DEFAULT_PARENTS, rest, DEFAULT_JOINT_MAP, basis)


def fk_joints(pose, shape, model: KinematicModel, return_cache: bool = False):
    """Joint positions ``(B, N, 3)`` in meters, root at the origin."""
    pose = np.atleast_2d(np.asarray(pose, dtype=np.float64))
    shape = np.atleast_2d(np.asarray(shape, dtype=np.float64))
    B = pose.shape[0]
    aa = pose.reshape(B, NUM_POSE // 3, 3)[:, list(model.joint_map)]   # (B, N, 3)
    R = rodrigues(aa)                                                  # (B, N, 3, 3)
    off = model.offsets(shape)
    N = model.num_joints
    G = np.zeros((B, N, 3, 3))
    P = np.zeros((B, N, 3))
    G[:, 0] = R[:, 0]
    for j in range(1, N):
        p = model.parents[j]
        P[:, j] = P[:, p] + np.einsum("bij,bj->bi", G[:, p], off[:, j])
        G[:, j] = G[:, p] @ R[:, j]
    if return_cache:
        return P, (aa, R, G, off)
    return P


def fk_backward(cache, dP, model: KinematicModel):
    """Gradients of ``sum(dP * joints)`` w.r.t. ``(pose (B,72), shape (B,10))``."""
    aa, R, G, off = cache
    B, N = aa.shape[:2]
    dP = np.array(dP, dtype=np.float64).reshape(B, N, 3)
    dG = np.zeros_like(G)
    doff = np.zeros_like(off)
    dR = np.zeros_like(R)
    for j in range(N - 1, 0, -1):
        p = model.parents[j]
        # G_j = G_p R_j
        dG[:, p] += dG[:, j] @ np.swapaxes(R[:, j], -1, -2)
        dR[:, j] = np.swapaxes(G[:, p], -1, -2) @ dG[:, j]
        # P_j = P_p + G_p off_j
        dP[:, p] += dP[:, j]
        dG[:, p] += dP[:, j][:, :, None] * off[:, j][:, None, :]
        doff[:, j] = np.einsum("bij,bi->bj", G[:, p], dP[:, j])
    dR[:, 0] = dG[:, 0]
    daa = rodrigues_backward(aa, R, dR)
    dpose = np.zeros((B, NUM_POSE // 3, 3))
    np.add.at(dpose, (slice(None), list(model.joint_map)), daa)
    dshape = np.einsum("nkd,bnk->bd", model.shape_basis, doff)
    return dpose.reshape(B, NUM_POSE), dshape


def project_2d(X, cam):
    """Orthographic drop of depth, then ``s * (x, y) + (tx, ty)``."""
    X = np.asarray(X, dtype=np.float64)
    cam = np.asarray(cam, dtype=np.float64)
    s = cam[..., 0][..., None, None]
    t = cam[..., 1:3][..., None, :]
    return s * X[..., :2] + t


def project_backward(X, cam, dx):
    """Gradients of ``sum(dx * project_2d(X, cam))`` w.r.t. ``(X, cam)``."""
    X = np.asarray(X, dtype=np.float64)
    cam = np.asarray(cam, dtype=np.float64)
    dX = np.zeros_like(X)
    dX[..., :2] = cam[..., 0][..., None, None] * dx
    dcam = np.zeros_like(cam)
    dcam[..., 0] = np.sum(dx * X[..., :2], axis=(-2, -1))
    dcam[..., 1:3] = np.sum(dx, axis=-2)
    return dX, dcam
