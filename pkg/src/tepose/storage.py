"""On-disk formats: binary array records, dataset directories, checkpoints and
run outputs.

Record layout (all little-endian)::

    offset  size      field
    0       4         magic  b"TPR1"
    4       2         version (uint16, currently 1)
    6       2         ndim    (uint16)
    8       8*ndim    dims    (uint64 each)
    ...     8*prod    payload (float64, C order)

A dataset directory holds ``dataset.json`` (split -> video ids) and, per
video, ``<id>.json`` (id, length, flags, files) next to ``<id>.<field>.tpr``
record files.
"""
from __future__ import annotations

import csv
import json
import os
import struct
from pathlib import Path

import numpy as np

from .losses import SupervisionFlags
from .synth import VideoRecord

MAGIC = b"TPR1"
RECORD_VERSION = 1
CHECKPOINT_VERSION = 1
_HEADER = struct.Struct("<4sHH")

_FIELDS = ("static_feats", "gt_params", "gt_joints3d", "gt_joints2d", "hidden_params")


class FormatError(ValueError):
    pass


# --------------------------------------------------------------------------- records

def encode_record(arr) -> bytes:
    arr = np.asarray(arr, dtype="<f8", order="C")
    head = _HEADER.pack(MAGIC, RECORD_VERSION, arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape)
    return head + arr.tobytes(order="C")


def decode_record(buf: bytes) -> np.ndarray:
    if len(buf) < _HEADER.size:
        raise FormatError("record shorter than its header")
    magic, version, ndim = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != RECORD_VERSION:
        raise FormatError(f"unsupported record version {version}")
    off = _HEADER.size
    if len(buf) < off + 8 * ndim:
        raise FormatError("truncated record dimensions")
    dims = struct.unpack_from(f"<{ndim}Q", buf, off)
    off += 8 * ndim
    n = int(np.prod(dims, dtype=np.int64)) if ndim else 1
    if len(buf) != off + 8 * n:
        raise FormatError(f"payload holds {(len(buf) - off) / 8:g} values, header says {n}")
    return np.frombuffer(buf, dtype="<f8", count=n, offset=off).astype(np.float64).reshape(dims)


def write_record(path, arr):
    Path(path).write_bytes(encode_record(arr))


def read_record(path) -> np.ndarray:
    return decode_record(Path(path).read_bytes())


# --------------------------------------------------------------------------- datasets

def write_video(directory, rec: VideoRecord):
    directory = Path(directory)
    files = {}
    for name in _FIELDS:
        arr = getattr(rec, name)
        if arr is None:
            continue
        fname = f"{rec.id}.{name}.tpr"
        write_record(directory / fname, arr)
        files[name] = fname
    manifest = {"id": rec.id, "length": rec.length,
                "flags": {"has_3d": rec.flags.has_3d, "has_smpl": rec.flags.has_smpl}, "files": files}
    (directory / f"{rec.id}.json").write_text(json.dumps(manifest, indent=1))


def read_video(directory, vid: str) -> VideoRecord:
    directory = Path(directory)
    try:
        manifest = json.loads((directory / f"{vid}.json").read_text())
    except FileNotFoundError as exc:
        raise FormatError(f"no manifest for video {vid!r} in {directory}") from exc
    arrays = {name: read_record(directory / fname) for name, fname in manifest["files"].items()}
    if "gt_joints2d" not in arrays:
        raise FormatError(f"video {vid!r} has no 2D keypoints")
    rec = VideoRecord(manifest["id"], arrays.get("static_feats"), arrays.get("gt_params"),
                      arrays.get("gt_joints3d"), arrays["gt_joints2d"],
                      SupervisionFlags(**manifest["flags"]), hidden_params=arrays.get("hidden_params"))
    if rec.length != manifest["length"]:
        raise FormatError(f"video {vid!r}: manifest length {manifest['length']} != {rec.length}")
    return rec


def write_dataset(directory, splits: dict, meta: dict | None = None):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    index = {"splits": {}, "meta": meta or {}}
    for split, videos in splits.items():
        index["splits"][split] = [v.id for v in videos]
        for v in videos:
            write_video(directory, v)
    (directory / "dataset.json").write_text(json.dumps(index, indent=1))
    return directory


def read_dataset(directory) -> dict:
    directory = Path(directory)
    try:
        index = json.loads((directory / "dataset.json").read_text())
    except FileNotFoundError as exc:
        raise FormatError(f"{directory} is not a dataset directory (no dataset.json)") from exc
    return {split: [read_video(directory, vid) for vid in ids] for split, ids in index["splits"].items()}


# --------------------------------------------------------------------------- checkpoints

def _rng_state(rng: np.random.Generator) -> dict:
    return rng.bit_generator.state


def _set_rng_state(rng: np.random.Generator, state: dict):
    rng.bit_generator.state = state


def save_checkpoint(path, trainer, config: dict | None = None):
    """Everything needed to resume ``trainer`` bit for bit."""
    arrays = {}
    for k, v in trainer.model.enc_params.items():
        arrays[f"enc/{k}"] = v
    for k, v in trainer.model.disc_params.items():
        arrays[f"disc/{k}"] = v
    for k, v in trainer.opt_gen.state_dict().items():
        arrays[f"opt_gen/{k}"] = v
    for k, v in trainer.opt_disc.state_dict().items():
        arrays[f"opt_disc/{k}"] = v
    for vid, (vals, stamps) in trainer.cache.state_dict().items():
        arrays[f"cache/{vid}/values"] = vals
        arrays[f"cache/{vid}/stamps"] = stamps
    meta = {
        "version": CHECKPOINT_VERSION,
        "j": trainer.state.j,
        "opt_gen": {"t": trainer.opt_gen.t, "lr": trainer.opt_gen.lr},
        "opt_disc": {"t": trainer.opt_disc.t, "lr": trainer.opt_disc.lr},
        "plateau": {"best": trainer.plateau.best, "bad_epochs": trainer.plateau.bad_epochs},
        "rng": {"loader": _rng_state(trainer.state.rng), "disc": _rng_state(trainer.disc_rng),
                "epoch": _rng_state(trainer.epoch_rng)},
        "pool_3d": [v.id for v in trainer.pool_3d],
        "config": config or {},
    }
    arrays["meta"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
    return path


def load_checkpoint(path) -> tuple[dict, dict]:
    """Returns ``(meta, arrays)``; raises :class:`FormatError` on a version mismatch."""
    with np.load(path, allow_pickle=False) as z:
        arrays = {k: z[k] for k in z.files}
    if "meta" not in arrays:
        raise FormatError(f"{path} is not a checkpoint")
    meta = json.loads(arrays.pop("meta").tobytes().decode())
    if meta.get("version") != CHECKPOINT_VERSION:
        raise FormatError(f"checkpoint version {meta.get('version')} != {CHECKPOINT_VERSION}")
    return meta, arrays


def _section(arrays, prefix):
    n = len(prefix) + 1
    return {k[n:]: v for k, v in arrays.items() if k.startswith(prefix + "/")}


def restore_params(model, arrays):
    enc = _section(arrays, "enc")
    disc = _section(arrays, "disc")
    if set(enc) != set(model.enc_params) or set(disc) != set(model.disc_params):
        raise FormatError("checkpoint parameters do not match the configured model")
    for k, v in enc.items():
        if v.shape != model.enc_params[k].shape:
            raise FormatError(f"parameter {k}: checkpoint shape {v.shape} != model {model.enc_params[k].shape}")
        model.enc_params[k] = np.array(v)
    for k, v in disc.items():
        if v.shape != model.disc_params[k].shape:
            raise FormatError(f"parameter {k}: checkpoint shape {v.shape} != model {model.disc_params[k].shape}")
        model.disc_params[k] = np.array(v)


def restore_trainer(trainer, meta, arrays):
    restore_params(trainer.model, arrays)
    trainer.opt_gen.load_state_dict(_section(arrays, "opt_gen"), meta["opt_gen"]["t"], meta["opt_gen"]["lr"])
    trainer.opt_disc.load_state_dict(_section(arrays, "opt_disc"), meta["opt_disc"]["t"], meta["opt_disc"]["lr"])
    trainer.plateau.best = meta["plateau"]["best"]
    trainer.plateau.bad_epochs = meta["plateau"]["bad_epochs"]
    _set_rng_state(trainer.state.rng, meta["rng"]["loader"])
    _set_rng_state(trainer.disc_rng, meta["rng"]["disc"])
    _set_rng_state(trainer.epoch_rng, meta["rng"]["epoch"])
    trainer.state.j = meta["j"]
    cache = _section(arrays, "cache")
    for key in [k for k in cache if k.endswith("/values")]:
        vid = key[:-len("/values")]
        vals, stamps = cache[key], cache[vid + "/stamps"]
        trainer.cache.register(vid, len(vals))
        for t in np.flatnonzero(stamps >= 0):
            trainer.cache.update(vid, int(t), vals[t], int(stamps[t]))
    by_id = {v.id: v for v in trainer.data["train_3d"]}
    trainer.pool_3d = [by_id[i] for i in meta["pool_3d"]]


# --------------------------------------------------------------------------- run outputs

METRIC_COLUMNS = ("run", "dataset", "mpjpe", "pa_mpjpe", "accel", "mpvpe")


def append_metrics(path, run: str, dataset: str, metrics: dict):
    """Append one row to ``metrics.csv`` (header written on creation)."""
    path = Path(path)
    new = not path.exists() or path.stat().st_size == 0
    with open(path, "a", newline="") as fh:
        w = csv.writer(fh)
        if new:
            w.writerow(METRIC_COLUMNS)
        w.writerow([run, dataset] + [_fmt(metrics.get(c, "n/a")) for c in METRIC_COLUMNS[2:]])


def _fmt(x):
    return repr(float(x)) if isinstance(x, (float, int, np.floating)) else str(x)


def read_metrics(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_run_summary(path, summary: dict):
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        json.dump(summary, fh, indent=1, default=_json_default)
    os.replace(tmp, path)


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")
