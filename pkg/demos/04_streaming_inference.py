"""
Streaming inference, frame by frame
===================================
The predictor only ever looks at the last T+1 feature vectors and its own
last T predictions, so it can run on a live stream. This script:

  1. builds a small desk model and a synthetic test video
  2. feeds the video one frame at a time through StreamingPredictor
  3. checks the stream reproduces the offline rollout bit for bit
  4. shows that appending future frames never changes earlier outputs

Run:  python demos/04_streaming_inference.py
"""
import time

import numpy as np

from tepose import StreamingPredictor, TePose, desk_config
from tepose.model import warm_params_for
from tepose.synth import dataset_config, make_dataset

cfg = desk_config(n_3d=1, n_2d=1, n_test=1, n_real=1)
model = TePose(cfg)
video = make_dataset(dataset_config(cfg), model.kin)["test"][0]
warm = warm_params_for(model, video)          # first T frames come from labels
print(f"video {video.id}: {video.length} frames, feature dim {video.static_feats.shape[1]}")

# ============================================================
# 1. LIVE LOOP
# ============================================================
stream = StreamingPredictor(model, warm)
t0 = time.perf_counter()
live = []
for t, feat in enumerate(video.static_feats):
    pred = stream.push(feat)
    if pred is not None:
        live.append(pred)
dt = (time.perf_counter() - t0) / len(live)
print(f"{len(live)} predictions, {1000 * dt:.2f} ms per frame; buffered frames: {len(stream.feats)}")

# ============================================================
# 2. OFFLINE ROLLOUT
# ============================================================
offline = model.rollout(video.static_feats[None], warm[None])[0, cfg.T:]
print("stream == offline rollout (bitwise):", np.array_equal(np.stack(live), offline))

# ============================================================
# 3. CAUSALITY
# ============================================================
short = model.rollout(video.static_feats[None, :40], warm[None])[0, cfg.T:]
print("first 35 predictions unchanged by later frames:", np.array_equal(short, offline[:35]))
