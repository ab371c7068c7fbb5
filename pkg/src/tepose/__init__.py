"""Temporally embedded 3D pose-and-shape estimation on streaming frames,
in plain numpy.

The predictor feeds its previous parameter predictions back into a pair of
GRU encoders; a multi-scale spatio-temporal graph-convolution discriminator
supplies adversarial supervision; training walks videos frame by frame with
a prediction cache. See the README for a tour.
"""
from .config import RunConfig, desk_config, load_config
from .model import StreamingPredictor, TePose, evaluate_videos

__all__ = ["RunConfig", "desk_config", "load_config", "TePose", "StreamingPredictor", "evaluate_videos"]
__version__ = "0.1.0"
