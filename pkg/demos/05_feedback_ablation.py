"""
Ablating parameter feedback and the second GRU stack
====================================================
Trains three desk models on the same data and seed and compares held-out
frame-by-frame errors:

  full         two GRU stacks, previous predictions fed back as inputs
  no_feedback  the parameter slots of every input frame forced to zero
  single_gru   only the uni-directional stack

Features carry a per-video constant bias, which a predictor without feedback
cannot undo from image features alone. Whether feedback pays off in a
free-running rollout depends on how reliable the fed-back predictions are;
the demo also prints the teacher-forced error (true past parameters fed in)
to separate the two effects.

Run:  python demos/05_feedback_ablation.py [iterations] [seed]   (default 2000, 0; ~15 min)
"""
import sys

import numpy as np

from tepose.config import desk_config
from tepose.model import TePose, evaluate_videos
from tepose.synth import dataset_config, make_dataset, real_windows
from tepose.train import Trainer

iterations = int(sys.argv[1]) if len(sys.argv) > 1 else 2000
seed = int(sys.argv[2]) if len(sys.argv) > 2 else 0
VARIANTS = {"full": {}, "no_feedback": {"feedback": False}, "single_gru": {"two_gru": False}}


def teacher_forced_mpjpe(model, videos):
    """Every frame predicted from the true previous parameters."""
    T, errs = model.T, []
    for v in videos:
        idx = np.arange(T, v.length)
        static = np.stack([v.static_feats[t - T:t + 1] for t in idx])
        hist = np.stack([v.gt_params[t - T:t] for t in idx])
        pred = model.predict_window(static, hist)
        errs.append(np.linalg.norm(model.joints(pred) - v.gt_joints3d[idx], axis=-1).mean(-1))
    return float(np.concatenate(errs).mean() * 1000)


# ============================================================
# TRAIN EACH VARIANT
# ============================================================
rows = {}
for name, kw in VARIANTS.items():
    cfg = desk_config(seed=seed, iterations=iterations, **kw)
    model = TePose(cfg)
    data = make_dataset(dataset_config(cfg), model.kin)
    Trainer(model, data, real_windows(data["real"], cfg.T)).run()
    res, _ = evaluate_videos(model, data["test"])
    rows[name] = (res["mpjpe"], res["accel"], teacher_forced_mpjpe(model, data["test"]))
    print(f"{name:12s} done")

# ============================================================
# SUMMARY
# ============================================================
print(f"\n{'variant':12s} {'MPJPE':>8s} {'ACCEL':>7s} {'teacher-forced MPJPE':>22s}")
for name, (m, a, tf) in rows.items():
    print(f"{name:12s} {m:8.1f} {a:7.2f} {tf:22.1f}")
