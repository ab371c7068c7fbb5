import numpy as np
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from tepose.kinematics import (NUM_POSE, NUM_SHAPE, KinematicModel, default_model, fk_joints,
                               project_2d, rodrigues)

vec3 = arrays(np.float64, 3, elements=st.floats(-2.5, 2.5, allow_nan=False))


def rot_oracle(r):
    a = np.linalg.norm(r)
    if a == 0:
        return np.eye(3)
    k = r / a
    K = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.cos(a) * np.eye(3) + np.sin(a) * K + (1 - np.cos(a)) * np.outer(k, k)


@given(vec3)
def test_rodrigues_matches_axis_form(r):
    R = rodrigues(r)
    assert np.allclose(R, rot_oracle(r), atol=1e-12)
    assert np.allclose(R @ R.T, np.eye(3), atol=1e-12)


def test_rest_pose_is_cumulative_offsets():
    m = default_model()
    P = fk_joints(np.zeros(NUM_POSE), np.zeros(NUM_SHAPE), m)[0]
    expected = np.zeros_like(m.rest_offsets)
    for j in range(1, m.num_joints):
        expected[j] = expected[m.parents[j]] + m.rest_offsets[j]
    assert np.allclose(P, expected, rtol=0, atol=1e-15)


@given(vec3)
def test_root_rotation_is_rigid(r):
    m = default_model()
    pose = np.zeros(NUM_POSE)
    pose[3 * m.joint_map[0]:3 * m.joint_map[0] + 3] = r
    rest = fk_joints(np.zeros(NUM_POSE), np.zeros(NUM_SHAPE), m)[0]
    P = fk_joints(pose, np.zeros(NUM_SHAPE), m)[0]
    assert np.allclose(P, rest @ rodrigues(r).T, atol=1e-12)


def test_three_joint_chain_oracle(rng):
    basis = rng.normal(scale=0.05, size=(3, 3, NUM_SHAPE))
    rest = np.array([[0, 0, 0], [0.3, 0, 0], [0, 0.2, 0.1]])
    m = KinematicModel((-1, 0, 1), rest, (0, 1, 2), basis)
    pose = rng.normal(scale=0.5, size=NUM_POSE)
    beta = rng.normal(size=NUM_SHAPE)
    off = rest + basis @ beta
    R0, R1 = rot_oracle(pose[0:3]), rot_oracle(pose[3:6])
    j1 = R0 @ off[1]
    j2 = j1 + R0 @ R1 @ off[2]
    P = fk_joints(pose, beta, m)[0]
    assert np.allclose(P, [np.zeros(3), j1, j2], atol=1e-13)


def test_projection_cases(rng):
    X = rng.normal(size=(5, 3))
    assert np.array_equal(project_2d(X, np.array([1.0, 0, 0])), X[:, :2])
    a = project_2d(X, np.array([1.0, 0.3, -0.2]))
    b = project_2d(X, np.array([2.0, 0.6, -0.4]))
    assert np.allclose(b, 2 * a, atol=1e-15)
    cam = np.array([0.7, 0.1, -0.3])
    out = project_2d(X, cam)
    for n in range(5):
        assert out[n, 0] == cam[0] * X[n, 0] + cam[1]
        assert out[n, 1] == cam[0] * X[n, 1] + cam[2]


def test_model_validation():
    import pytest
    rest = np.zeros((2, 3))
    basis = np.zeros((2, 3, NUM_SHAPE))
    with pytest.raises(ValueError):
        KinematicModel((-1, -1), rest, (0, 1), basis)
    with pytest.raises(ValueError):
        KinematicModel((-1, 0), rest, (0, 24), basis)
