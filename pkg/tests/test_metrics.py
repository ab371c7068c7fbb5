import numpy as np
import pytest
from hypothesis import given, strategies as st

from tepose.metrics import accel_error, evaluate_sequence, mpjpe, pa_mpjpe
from tepose.kinematics import rodrigues

seeds = st.integers(0, 2 ** 31)


def random_similarity(rng):
    R = rodrigues(rng.normal(size=3))
    return rng.uniform(0.2, 5.0), R, rng.normal(scale=100, size=3)


def test_identical_and_translated():
    g = np.random.default_rng(0).normal(size=(4, 14, 3))
    assert mpjpe(g, g) == 0
    assert mpjpe(g + np.array([3.0, -1.0, 2.0]), g) == pytest.approx(0, abs=1e-12)


def test_worked_mpjpe():
    gt = np.zeros((1, 2, 3))
    pred = gt.copy()
    pred[0, 1] = [3.0, 4.0, 0.0]
    assert mpjpe(pred, gt) == 2.5


@given(seeds)
def test_pa_zero_under_similarity(seed):
    rng = np.random.default_rng(seed)
    gt = rng.normal(scale=300, size=(3, 14, 3))
    s, R, c = random_similarity(rng)
    assert pa_mpjpe(s * gt @ R.T + c, gt) < 1e-8


@given(seeds)
def test_pa_not_above_mpjpe(seed):
    rng = np.random.default_rng(seed)
    gt = rng.normal(scale=300, size=(2, 14, 3))
    pred = gt + rng.normal(scale=rng.uniform(1, 400), size=gt.shape)
    assert pa_mpjpe(pred, gt) <= mpjpe(pred, gt) + 1e-9


def test_pa_matches_numerical_minimization(rng):
    least_squares = pytest.importorskip("scipy.optimize").least_squares
    gt = rng.normal(scale=200, size=(14, 3))
    pred = gt @ rodrigues([0.3, -0.2, 0.5]).T * 1.2 + 40 + rng.normal(scale=20, size=gt.shape)

    def residual(v):
        return (v[0] * pred @ rodrigues(v[1:4]).T + v[4:] - gt).ravel()
    fits = [least_squares(residual, np.r_[1.0, r0, np.zeros(3)], xtol=1e-15, ftol=1e-15, gtol=1e-15)
            for r0 in (np.zeros(3), [-0.3, 0.2, -0.5], [1.0, 1.0, 0.0])]
    v = min(fits, key=lambda f: f.cost).x
    aligned = v[0] * pred @ rodrigues(v[1:4]).T + v[4:]
    oracle = np.mean(np.linalg.norm(aligned - gt, axis=1))
    assert abs(pa_mpjpe(pred[None], gt[None]) - oracle) < 1e-4


def test_accel_cases():
    g = np.random.default_rng(1).normal(size=(5, 3, 3))
    assert accel_error(g, g) == 0
    t = np.arange(6.0)[:, None, None]
    v1, v2 = np.array([1.0, 2, 3]), np.array([-4.0, 0.5, 2])
    assert accel_error(t * v1 + 7, t * v2 - 1) == 0
    pred = np.zeros((3, 1, 3))
    pred[1, 0, 0] = -0.5                  # second difference (1, 0, 0)
    assert accel_error(pred, np.zeros((3, 1, 3))) == 1.0


def test_input_validation():
    with pytest.raises(ValueError):
        mpjpe(np.zeros((2, 3, 3)), np.zeros((2, 4, 3)))
    with pytest.raises(ValueError):
        accel_error(np.zeros((2, 3, 3)), np.zeros((2, 3, 3)))
    with pytest.raises(ValueError):
        pa_mpjpe(np.zeros((1, 3, 3)), np.zeros((1, 3, 3)))


def test_mpvpe_not_available(rng):
    g = rng.normal(size=(4, 14, 3))
    assert evaluate_sequence(g, g)["mpvpe"] == "n/a"
