import numpy as np
import pytest
from hypothesis import given, strategies as st

from tepose.encoder import (EncoderConfig, build_input_features, encode, fit_input_normalization,
                            gru_step, gru_step_backward, init_encoder, predict_backward, predict_frame,
                            regress, run_gru)
from tepose.kinematics import NUM_PARAMS

SMALL = EncoderConfig(feature_dim=4, hidden=3, reg_hidden=5, layers=2, n_iter=3)


def logistic(v):
    return 1.0 / (1.0 + np.exp(-v))


def scalar_gru(x, h, c):
    """Element-by-element evaluation of the cell equations."""
    H = len(h)
    out = np.zeros(H)
    r = np.zeros(H)
    for j in range(H):
        r[j] = logistic(sum(x[i] * c["Wr"][i, j] for i in range(len(x)))
                        + sum(h[i] * c["Ur"][i, j] for i in range(H)) + c["br"][j])
    for j in range(H):
        z = logistic(sum(x[i] * c["Wz"][i, j] for i in range(len(x)))
                     + sum(h[i] * c["Uz"][i, j] for i in range(H)) + c["bz"][j])
        n = np.tanh(sum(x[i] * c["Wn"][i, j] for i in range(len(x)))
                    + sum(r[i] * h[i] * c["Un"][i, j] for i in range(H)) + c["bn"][j])
        out[j] = (1 - z) * n + z * h[j]
    return out


def random_cell(rng, n_in, hid):
    c = {}
    for g in "zrn":
        c["W" + g] = rng.normal(size=(n_in, hid))
        c["U" + g] = rng.normal(size=(hid, hid))
        c["b" + g] = rng.normal(size=hid)
    return c


def zero_cell(n_in, hid):
    return {k: np.zeros_like(v) for k, v in random_cell(np.random.default_rng(0), n_in, hid).items()}


# ------------------------------------------------------------------ input features

def test_current_slot_always_zero(rng):
    f = build_input_features(rng.normal(size=(6, 4)), rng.normal(size=(5, NUM_PARAMS)))
    assert not f[-1, 4:].any()


def test_ground_truth_slots_pass_through(rng):
    hist = rng.normal(size=(5, NUM_PARAMS))
    f = build_input_features(rng.normal(size=(6, 4)), hist, sources=["gt"] * 5)
    assert np.array_equal(f[:-1, 4:], hist)


def test_full_width():
    f = build_input_features(np.zeros((6, 2048)), np.zeros((5, NUM_PARAMS)))
    assert f.shape == (6, 2133)


def test_missing_source_is_error(rng):
    with pytest.raises(ValueError):
        build_input_features(np.zeros((6, 4)), np.zeros((5, NUM_PARAMS)), sources=["gt"] * 4 + [None])
    with pytest.raises(ValueError):
        build_input_features(np.zeros((6, 4)), None)


def test_no_feedback_zeroes_all_slots(rng):
    f = build_input_features(rng.normal(size=(6, 4)), None, feedback=False)
    assert not f[:, 4:].any()


# ------------------------------------------------------------------ GRU cell

def test_zero_cell_zero_state():
    h, _ = gru_step(np.ones((1, 4)), np.zeros((1, 3)), zero_cell(4, 3))
    assert not h.any()


@given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=3, max_size=3))
def test_zero_cell_halves_state(hv):
    h = np.array([hv])
    out, _ = gru_step(np.ones((1, 4)), h, zero_cell(4, 3))
    assert np.array_equal(out, 0.5 * h)


def test_gru_elementwise_oracle(rng):
    c = random_cell(rng, 4, 3)
    x, h = rng.normal(size=4), rng.normal(size=3)
    out, _ = gru_step(x[None], h[None], c)
    assert np.allclose(out[0], scalar_gru(x, h, c), rtol=1e-13, atol=1e-13)


def test_zero_cell_backward_only_candidate_bias():
    c = zero_cell(4, 3)
    _, cache = gru_step(np.zeros((1, 4)), np.zeros((1, 3)), c)
    grads = {k: np.zeros_like(v) for k, v in c.items()}
    up = np.array([[1.0, -2.0, 3.0]])
    gru_step_backward(cache, up, c, grads)
    assert np.array_equal(grads["bn"], 0.5 * up[0])
    assert all(not v.any() for k, v in grads.items() if k != "bn")


# ------------------------------------------------------------------ encoder

def test_zero_parameter_cells_give_zero_states(rng):
    p = init_encoder(rng, SMALL)
    for k in p:
        if k.startswith(("uni", "bi")):
            p[k] = np.zeros_like(p[k])
    g_uni, g_bi, _ = encode(rng.normal(size=(2, 6, SMALL.input_dim)), p, SMALL)
    assert not g_uni.any() and not g_bi.any()


def test_encode_unrolled_oracle(rng):
    p = init_encoder(rng, SMALL)
    x = rng.normal(size=(6, SMALL.input_dim))
    x[-1, SMALL.feature_dim:] = 0
    g_uni, g_bi, _ = encode(x[None], p, SMALL)

    def cell(prefix):
        return {k[len(prefix) + 1:]: v for k, v in p.items() if k.startswith(prefix + ".")}

    def unroll(seq, c, reverse=False):
        h = np.zeros(3)
        out = [None] * len(seq)
        for t in (reversed(range(len(seq))) if reverse else range(len(seq))):
            h = scalar_gru(seq[t], h, c)
            out[t] = h
        return np.array(out)

    l0 = unroll(x, cell("uni.l0"))
    l1 = unroll(l0, cell("uni.l1"))
    assert np.allclose(g_uni[0], l1[-1], rtol=1e-12, atol=1e-12)
    f0, b0 = unroll(x, cell("bi.l0.fw")), unroll(x, cell("bi.l0.bw"), True)
    mid = np.concatenate([f0, b0], axis=1)
    f1, b1 = unroll(mid, cell("bi.l1.fw")), unroll(mid, cell("bi.l1.bw"), True)
    assert np.allclose(g_bi[0], 0.5 * (f1[-1] + b1[-1]), rtol=1e-12, atol=1e-12)


def test_full_sequence_length():
    from tepose.config import RunConfig
    assert RunConfig().T + 1 == 6


def test_standardization_keeps_zero_slots(rng):
    p = init_encoder(rng, SMALL)
    fit_input_normalization(p, rng.normal(size=(50, 4)) + 3, rng.normal(size=(50, NUM_PARAMS)) + 1)
    x = build_input_features(rng.normal(size=(6, 4)), rng.normal(size=(5, NUM_PARAMS)))
    _, _, cache = encode(x[None], p, SMALL)
    first = cache["uni"][0][-1][0]      # input to the last step
    assert not first[0, SMALL.feature_dim:].any()
    nofb = EncoderConfig(**{**SMALL.__dict__, "feedback": False})
    _, _, cache = encode(x[None], p, nofb)
    assert all(not c[0][:, nofb.feature_dim:].any() for c in cache["uni"][0])


def test_constant_dimensions_keep_unit_scale(rng):
    p = init_encoder(rng, SMALL)
    fit_input_normalization(p, np.ones((10, 4)), rng.normal(size=(10, NUM_PARAMS)))
    assert np.array_equal(p["in.scale"][:4], np.ones(4))
    with pytest.raises(ValueError):
        fit_input_normalization(p, np.ones((10, 3)), np.ones((10, NUM_PARAMS)))


# ------------------------------------------------------------------ regressor / prediction

def test_zero_decoder_returns_mean(rng):
    p = init_encoder(rng, SMALL)
    p["reg.dec.W"][:] = 0
    p["reg.dec.b"][:] = 0
    for n in (1, 3, 5):
        th, _ = regress(rng.normal(size=(2, 3)), p, n)
        assert np.array_equal(th, np.broadcast_to(p["reg.mean"], (2, NUM_PARAMS)))


def test_regress_unrolled_oracle(rng):
    p = init_encoder(rng, SMALL)
    p["reg.dec.W"] = rng.normal(size=p["reg.dec.W"].shape) * 0.1
    g = rng.normal(size=3)
    th = p["reg.mean"].copy()
    for _ in range(3):
        a = np.concatenate([g, th]) @ p["reg.fc1.W"] + p["reg.fc1.b"]
        a = a @ p["reg.fc2.W"] + p["reg.fc2.b"]
        th = th + a @ p["reg.dec.W"] + p["reg.dec.b"]
    out, _ = regress(g, p, 3)
    assert out.shape == (1, 85)
    assert np.allclose(out[0], th, rtol=1e-12, atol=1e-12)


def test_eval_averages_branch_states(rng):
    p = init_encoder(rng, SMALL)
    x = rng.normal(size=(3, 6, SMALL.input_dim))
    th, _ = predict_frame(x, p, SMALL, "eval")
    g_uni, g_bi, _ = encode(x, p, SMALL)
    assert np.array_equal(th, regress(0.5 * (g_uni + g_bi), p, 3)[0])
    th2, _ = predict_frame(x, p, SMALL, "eval")
    assert np.array_equal(th, th2)


def test_equal_branch_states_give_equal_outputs(rng):
    p = init_encoder(rng, SMALL)
    g = rng.normal(size=(2, 3))
    assert np.array_equal(regress(0.5 * (g + g), p, 3)[0], regress(g, p, 3)[0])


def test_single_stack_eval_equals_train(rng):
    single = EncoderConfig(**{**SMALL.__dict__, "two_gru": False})
    p = init_encoder(rng, single)
    x = rng.normal(size=(2, 6, single.input_dim))
    th_eval, _ = predict_frame(x, p, single, "eval")
    (th_train,), _ = predict_frame(x, p, single, "train")
    assert np.array_equal(th_eval, th_train)


def test_train_mode_two_predictions(rng):
    p = init_encoder(rng, SMALL)
    preds, _ = predict_frame(rng.normal(size=(2, 6, SMALL.input_dim)), p, SMALL, "train")
    assert len(preds) == 2 and preds[0].shape == (2, NUM_PARAMS)
    with pytest.raises(ValueError):
        predict_frame(rng.normal(size=(2, 6, SMALL.input_dim)), p, SMALL, "other")


def test_zero_upstream_zero_encoder_gradients(rng):
    p = init_encoder(rng, SMALL)
    preds, cache = predict_frame(rng.normal(size=(2, 6, SMALL.input_dim)), p, SMALL, "train")
    grads = predict_backward(cache, [np.zeros_like(q) for q in preds], p, SMALL)
    assert all(not np.any(g) for g in grads.values())


def test_run_gru_reverse_reads_last_frame_first(rng):
    c = random_cell(rng, 2, 3)
    xs = rng.normal(size=(1, 4, 2))
    H, _ = run_gru(xs, c, reverse=True)
    h0, _ = gru_step(xs[:, 3], np.zeros((1, 3)), c)
    assert np.array_equal(H[:, 3], h0)
