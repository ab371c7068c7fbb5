import numpy as np
import pytest

from tepose.config import desk_config
from tepose.kinematics import NUM_PARAMS
from tepose.model import StreamingPredictor, TePose, evaluate_videos, warm_params_for
from tepose.synth import dataset_config, make_dataset, real_windows
from tepose.train import Trainer
from tepose import storage

TINY = dict(feature_dim=8, hidden=12, reg_hidden=12, batch_size=4, H=20, n_3d=3, n_2d=3, n_val=0,
            n_test=2, n_real=2, min_length=20, max_length=26, test_length=22, disc_channels=(3, 4, 4, 4),
            gcn_scales=3, g3d_scales=2, iterations=30)


def tiny(**kw):
    return desk_config(**{**TINY, **kw})


@pytest.fixture(scope="module")
def setup():
    cfg = tiny()
    model = TePose(cfg)
    data = make_dataset(dataset_config(cfg), model.kin)
    return cfg, model, data


def test_rollout_keeps_warm_start_and_is_causal(setup):
    cfg, model, data = setup
    v = data["test"][0]
    warm = warm_params_for(model, v)[None]
    out = model.rollout(v.static_feats[None], warm)
    assert np.array_equal(out[0, :cfg.T], warm[0])
    cut = 12
    short = model.rollout(v.static_feats[None, :cut], warm)
    assert np.array_equal(short[0], out[0, :cut])


def test_streaming_matches_rollout_bitwise(setup):
    cfg, model, data = setup
    v = data["test"][1]
    warm = warm_params_for(model, v)
    ref = model.rollout(v.static_feats[None], warm[None])[0]
    s = StreamingPredictor(model, warm)
    outs = [s.push(f) for f in v.static_feats]
    assert all(o is None for o in outs[:cfg.T])
    assert np.array_equal(np.stack(outs[cfg.T:]), ref[cfg.T:])
    assert len(s.feats) == cfg.T + 1 and len(s.history) == cfg.T


def test_streaming_rejects_bad_frames(setup):
    cfg, model, _ = setup
    s = StreamingPredictor(model, np.zeros((cfg.T, NUM_PARAMS)))
    with pytest.raises(ValueError):
        s.push(np.zeros(cfg.feature_dim + 1))
    with pytest.raises(ValueError):
        StreamingPredictor(model, np.zeros((cfg.T + 1, NUM_PARAMS)))


def test_evaluate_batched_close_to_sequential(setup):
    _, model, data = setup
    a, _ = evaluate_videos(model, data["test"])
    b, _ = evaluate_videos(model, data["test"], batched=True)
    for k in ("mpjpe", "pa_mpjpe", "accel"):
        assert a[k] == pytest.approx(b[k], rel=1e-9)


def run_trainer(cfg, steps):
    model = TePose(cfg)
    data = make_dataset(dataset_config(cfg), model.kin)
    tr = Trainer(model, data, real_windows(data["real"], cfg.T))
    rows = [tr.step() for _ in range(steps)]
    return tr, rows


def test_training_is_deterministic():
    cfg = tiny()
    _, a = run_trainer(cfg, 12)
    _, b = run_trainer(cfg, 12)
    assert [r["loss"] for r in a if r] == [r["loss"] for r in b if r]


@pytest.mark.parametrize("kw", [{}, {"selection": "epoch", "prefill": False}, {"refresh_cache": True},
                                {"refresh_every": 7}, {"normalize_inputs": True}, {"two_gru": False},
                                {"feedback": False}, {"adversarial": False}])
def test_training_variants_run(kw):
    tr, rows = run_trainer(tiny(**kw), 25)
    assert all(np.isfinite(r["loss"]) for r in rows if r)


def test_checkpoint_resume_is_bitwise(tmp_path):
    cfg = tiny()
    full, rows_full = run_trainer(cfg, 30)
    part, _ = run_trainer(cfg, 17)
    storage.save_checkpoint(tmp_path / "c.npz", part, cfg.to_dict())
    model = TePose(cfg)
    data = make_dataset(dataset_config(cfg), model.kin)
    resumed = Trainer(model, data, real_windows(data["real"], cfg.T))
    meta, arrays = storage.load_checkpoint(tmp_path / "c.npz")
    storage.restore_trainer(resumed, meta, arrays)
    rows = [resumed.step() for _ in range(13)]
    assert [r["loss"] for r in rows if r] == [r["loss"] for r in rows_full[17:] if r]
    for k, v in full.model.enc_params.items():
        assert np.array_equal(v, resumed.model.enc_params[k])


def test_checkpoint_eval_bitwise(tmp_path):
    cfg = tiny()
    tr, _ = run_trainer(cfg, 10)
    before, preds_before = evaluate_videos(tr.model, tr.data["test"])
    storage.save_checkpoint(tmp_path / "c.npz", tr, cfg.to_dict())
    fresh = TePose(cfg)
    storage.restore_params(fresh, storage.load_checkpoint(tmp_path / "c.npz")[1])
    after, preds_after = evaluate_videos(fresh, tr.data["test"])
    assert before == after
    assert all(np.array_equal(preds_before[k], preds_after[k]) for k in preds_before)


def test_checkpoint_mismatch(tmp_path):
    cfg = tiny()
    tr, _ = run_trainer(cfg, 2)
    storage.save_checkpoint(tmp_path / "c.npz", tr)
    other = TePose(tiny(hidden=10))
    with pytest.raises(storage.FormatError):
        storage.restore_params(other, storage.load_checkpoint(tmp_path / "c.npz")[1])
