"""
Telling smooth motion from jerky motion
=======================================
Trains the desk-sized motion discriminator (14 joints, channels 3->16->32->64)
on two pools of short skeleton windows:

  * "smooth" clips: joint angles driven by low-frequency sinusoids
  * "jerky" clips:  the same generator with a high-frequency band added

Only the sum of a single-frame (MS-GCN) branch and a multi-frame (MS-G3D)
branch sees time, so the network has to learn the difference between them.
Expect accuracy to hover near chance for a few hundred steps before it rises.

Run:  python demos/02_discriminator_separability.py
"""
import time

import numpy as np

from tepose.discriminator import DiscriminatorConfig, MotionDiscriminator, accuracy, fit_discriminator
from tepose.kinematics import default_model
from tepose.synth import class_windows

T = 5            # windows hold T + 1 = 6 frames
ITERATIONS = 1500

# ============================================================
# 1. WINDOW POOLS (disjoint seed ranges for train and held-out)
# ============================================================
kin = default_model()
smooth = class_windows("smooth", 500, kin, T, seed=0)
jerky = class_windows("jerky", 500, kin, T, seed=10_000)
smooth_te = class_windows("smooth", 200, kin, T, seed=50_000)
jerky_te = class_windows("jerky", 200, kin, T, seed=60_000)
print("train windows:", smooth.shape, jerky.shape)


def mean_abs_accel(w):
    return np.abs(np.diff(w, 2, axis=1)).mean() * 1000


print(f"mean |acceleration|: smooth {mean_abs_accel(smooth):.2f} mm/frame^2, "
      f"jerky {mean_abs_accel(jerky):.2f} mm/frame^2")

# ============================================================
# 2. TRAINING
# ============================================================
disc = MotionDiscriminator(kin.graph(), DiscriminatorConfig(channels=(3, 16, 32, 64)))
rng = np.random.default_rng(0)
params = disc.init_params(rng)
t0 = time.perf_counter()


def progress(it, loss):
    if (it + 1) % 250 == 0:
        print(f"  step {it + 1:5d}  loss {loss:.4f}  held-out accuracy "
              f"{accuracy(disc, params, smooth_te, jerky_te):.3f}  ({time.perf_counter() - t0:.0f}s)")


fit_discriminator(disc, params, smooth, jerky, iterations=ITERATIONS, batch_size=32, lr=3e-3,
                  rng=rng, callback=progress)

# ============================================================
# 3. RESULT
# ============================================================
print(f"final held-out accuracy: {accuracy(disc, params, smooth_te, jerky_te):.4f}")
s_real, s_fake = disc.score(smooth_te, params), disc.score(jerky_te, params)
print(f"mean score: smooth {s_real.mean():.2f}, jerky {s_fake.mean():.2f}  (targets 1 and 0)")
