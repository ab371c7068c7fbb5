"""
Training the desk-scale predictor
=================================
Builds the synthetic dataset (labelled 3D videos, 2D-only videos, held-out
test videos), trains predictor and discriminator together with the
sequential loader, and compares held-out errors before and after.

Run:  python demos/03_train_desk_model.py [iterations]     (default 2000, ~5 min)
"""
import sys
import time

from tepose.config import desk_config
from tepose.model import TePose, evaluate_videos
from tepose.synth import dataset_config, make_dataset, real_windows
from tepose.train import Trainer

iterations = int(sys.argv[1]) if len(sys.argv) > 1 else 2000

# ============================================================
# 1. MODEL AND DATA
# ============================================================
cfg = desk_config(iterations=iterations)
model = TePose(cfg)
data = make_dataset(dataset_config(cfg), model.kin)
for split, videos in data.items():
    print(f"{split:9s} {len(videos):3d} videos, lengths {min(v.length for v in videos)}-"
          f"{max(v.length for v in videos)}")
before, _ = evaluate_videos(model, data["test"])
print("untrained:", {k: round(v, 1) for k, v in before.items() if isinstance(v, float)})

# ============================================================
# 2. TRAINING
# ============================================================
trainer = Trainer(model, data, real_windows(data["real"], cfg.T))
t0 = time.perf_counter()


def progress(row):
    if row["iteration"] % 250 == 0:
        print(f"  it {row['iteration']:5d}  loss {row['loss']:.4f}  l3d {row['l3d']:.5f}  "
              f"l_theta {row['l_theta']:.5f}  d_loss {row['d_loss']:.3f}  ({time.perf_counter() - t0:.0f}s)")


trainer.run(callback=progress)

# ============================================================
# 3. HELD-OUT EVALUATION (frame-by-frame rollout)
# ============================================================
after, _ = evaluate_videos(model, data["test"])
print("trained:  ", {k: round(v, 1) for k, v in after.items() if isinstance(v, float)})
print(f"MPJPE ratio trained / untrained: {after['mpjpe'] / before['mpjpe']:.3f}")
