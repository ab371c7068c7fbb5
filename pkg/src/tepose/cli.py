"""Command-line entry point: ``tepose {train,eval,infer,gradcheck,synth}``.

Exit codes: 0 success, 1 invalid configuration or input, 2 numerical failure
(non-finite loss, failed gradient check).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import storage
from .config import ConfigError, RunConfig, desk_config, load_config
from .gradcheck import TOLERANCE, run_all
from .graph import SkeletonGraph
from .kinematics import NUM_PARAMS
from .model import StreamingPredictor, TePose, evaluate_videos, warm_params_for
from .synth import dataset_config, make_dataset, real_windows
from .train import NumericalError, Trainer

log = logging.getLogger("tepose")

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2
PRESETS = {"full": RunConfig, "desk": desk_config}


# --------------------------------------------------------------------------- helpers

def build_config(args) -> RunConfig:
    base = PRESETS[args.preset]()
    overrides = list(args.set or [])
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    return load_config(args.config, overrides, base=base)


def build_model(cfg: RunConfig) -> TePose:
    graph = SkeletonGraph.load(cfg.skeleton) if cfg.skeleton else None
    model = TePose(cfg, graph=graph)
    return model


def load_data(cfg: RunConfig, model: TePose) -> dict:
    if cfg.data_dir:
        data = storage.read_dataset(cfg.data_dir)
        missing = {"train_3d", "train_2d", "test"} - set(data)
        if missing:
            raise storage.FormatError(f"dataset {cfg.data_dir} lacks splits {sorted(missing)}")
        for split, videos in data.items():
            for v in videos:
                if split != "real" and (v.static_feats is None or v.static_feats.shape[1] != cfg.feature_dim):
                    raise storage.FormatError(f"video {v.id}: features do not match feature_dim={cfg.feature_dim}")
        return data
    return make_dataset(dataset_config(cfg), model.kin)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_params(model, path):
    meta, arrays = storage.load_checkpoint(path)
    storage.restore_params(model, arrays)
    return meta


# --------------------------------------------------------------------------- commands

def cmd_synth(cfg: RunConfig, out: Path):
    model = build_model(cfg)
    data = make_dataset(dataset_config(cfg), model.kin)
    storage.write_dataset(out, data, meta={"seed": cfg.seed, "feature_dim": cfg.feature_dim})
    return {split: len(v) for split, v in data.items()}


def cmd_train(cfg: RunConfig, out: Path, checkpoint=None, run_name="train"):
    model = build_model(cfg)
    data = load_data(cfg, model)
    trainer = Trainer(model, data, real_windows(data.get("real") or data["train_3d"], cfg.T))
    if checkpoint:
        meta, arrays = storage.load_checkpoint(checkpoint)
        storage.restore_trainer(trainer, meta, arrays)
    t0 = time.perf_counter()
    initial = None
    if trainer.j == 0:
        initial, _ = evaluate_videos(model, data["test"], source=cfg.warm_start)
        storage.append_metrics(out / "metrics.csv", f"{run_name}:untrained", "test", initial)
    with open(out / "losses.csv", "a") as fh:
        if fh.tell() == 0:
            fh.write("iteration,loss,l2d,l3d,l_theta,l_adv,d_loss,lr_gen\n")

        def log_row(row):
            fh.write(",".join(repr(float(row[k])) if k != "iteration" else str(row[k]) for k in
                              ("iteration", "loss", "l2d", "l3d", "l_theta", "l_adv", "d_loss", "lr_gen")) + "\n")
            if row["iteration"] % 100 == 0:
                log.info("iteration %d loss %.5f", row["iteration"], row["loss"])

        trainer.run(max(cfg.iterations - trainer.j, 0), callback=log_row)
    ckpt = storage.save_checkpoint(out / "checkpoint.npz", trainer, cfg.to_dict())
    final, _ = evaluate_videos(model, data["test"], source=cfg.warm_start)
    storage.append_metrics(out / "metrics.csv", run_name, "test", final)
    summary = {"command": "train", "config": cfg.to_dict(), "iterations": trainer.j,
               "seconds": time.perf_counter() - t0, "checkpoint": str(ckpt),
               "untrained": initial, "final": final, "epochs": trainer.epoch_log}
    storage.write_run_summary(out / "run.json", summary)
    return summary


def cmd_eval(cfg: RunConfig, checkpoint, out: Path, split="test", run_name="eval"):
    model = build_model(cfg)
    if checkpoint:
        _load_params(model, checkpoint)
    data = load_data(cfg, model)
    if split not in data:
        raise storage.FormatError(f"dataset has no split {split!r}")
    metrics, preds = evaluate_videos(model, data[split], source=cfg.warm_start)
    storage.append_metrics(out / "metrics.csv", run_name, split, metrics)
    pred_dir = out / "predictions"
    pred_dir.mkdir(exist_ok=True)
    for vid, p in preds.items():
        storage.write_record(pred_dir / f"{vid}.tpr", p)
    storage.write_run_summary(out / "run.json", {"command": "eval", "config": cfg.to_dict(),
                                                  "checkpoint": str(checkpoint), "split": split,
                                                  "metrics": metrics})
    return metrics, preds


def _frames_from(source, feature_dim):
    """Yield per-frame feature vectors from a record file or JSON lines ("-" = stdin)."""
    if source == "-" or str(source).endswith((".jsonl", ".json")):
        fh = sys.stdin if source == "-" else open(source)
        try:
            for n, line in enumerate(fh):
                line = line.strip()
                if not line:
                    continue
                try:
                    vec = np.asarray(json.loads(line), dtype=np.float64)
                except (json.JSONDecodeError, TypeError, ValueError) as exc:
                    raise storage.FormatError(f"line {n + 1}: not a JSON number array") from exc
                yield vec
        finally:
            if fh is not sys.stdin:
                fh.close()
        return
    arr = storage.read_record(source)
    if arr.ndim != 2 or arr.shape[1] != feature_dim:
        raise storage.FormatError(f"feature record must be (frames, {feature_dim}), got {arr.shape}")
    yield from arr


def cmd_infer(cfg: RunConfig, checkpoint, source, warm=None, sink=None):
    """Stream predictions: one JSON line per frame after the warm start."""
    model = build_model(cfg)
    if checkpoint:
        _load_params(model, checkpoint)
    if warm is None:
        warm_params = np.broadcast_to(model.enc_params["reg.mean"], (cfg.T, NUM_PARAMS)).copy()
    else:
        warm_params = storage.read_record(warm)
        if warm_params.shape != (cfg.T, NUM_PARAMS):
            raise storage.FormatError(f"warm start must be ({cfg.T}, {NUM_PARAMS}), got {warm_params.shape}")
    stream = StreamingPredictor(model, warm_params)
    sink = sink or sys.stdout
    count = 0
    for t, feat in enumerate(_frames_from(source, cfg.feature_dim)):
        try:
            pred = stream.push(feat)
        except ValueError as exc:
            raise storage.FormatError(str(exc)) from exc
        if pred is None:
            continue
        if not np.all(np.isfinite(pred)):
            raise NumericalError(f"non-finite prediction at frame {t}")
        sink.write(json.dumps({"frame": t, "params": [float(x).hex() for x in pred]}) + "\n")
        sink.flush()
        count += 1
    return count


def decode_params(line: str) -> tuple[int, np.ndarray]:
    """Parse one ``infer`` output line back into ``(frame, params)`` exactly."""
    rec = json.loads(line)
    return rec["frame"], np.array([float.fromhex(x) for x in rec["params"]])


def cmd_gradcheck(instances=20, seed=0, sink=None):
    sink = sink or sys.stdout
    results = run_all(instances, seed)
    for r in results:
        sink.write(f"{'PASS' if r.passed else 'FAIL'} {r.name:15s} instances={r.instances} "
                   f"max_rel_error={r.max_error:.2e} (tol {TOLERANCE:g}) {r.seconds:.1f}s\n")
    return results


# --------------------------------------------------------------------------- argparse

def _parser():
    p = argparse.ArgumentParser(prog="tepose", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out=True):
        sp.add_argument("--config", help="TOML config file")
        sp.add_argument("--preset", choices=sorted(PRESETS), default="desk",
                        help="base settings the config file and overrides apply to (default: desk)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
        if out:
            sp.add_argument("--out", default="runs/latest", help="output directory")
        sp.add_argument("-v", "--verbose", action="store_true")

    sp = sub.add_parser("train", help="train predictor and discriminator")
    common(sp)
    sp.add_argument("--checkpoint", help="resume from this checkpoint")
    sp = sub.add_parser("eval", help="frame-by-frame evaluation on a dataset split")
    common(sp)
    sp.add_argument("--checkpoint")
    sp.add_argument("--split", default="test")
    sp = sub.add_parser("infer", help="stream per-frame predictions as JSON lines")
    common(sp, out=False)
    sp.add_argument("--checkpoint")
    sp.add_argument("--input", required=True, help="feature record (.tpr), JSON-lines file, or - for stdin")
    sp.add_argument("--warm", help="record with the first T parameter vectors (default: mean parameters)")
    sp.add_argument("--out", help="write JSON lines here instead of stdout")
    sp = sub.add_parser("gradcheck", help="finite-difference checks of all backward passes")
    common(sp, out=False)
    sp.add_argument("--instances", type=int, default=20)
    sp = sub.add_parser("synth", help="write a synthetic dataset directory")
    common(sp)
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = build_config(args)
        if args.command == "synth":
            counts = cmd_synth(cfg, _out_dir(args))
            print(json.dumps(counts))
        elif args.command == "train":
            summary = cmd_train(cfg, _out_dir(args), args.checkpoint)
            print(json.dumps({"final": summary["final"], "untrained": summary["untrained"]}))
        elif args.command == "eval":
            metrics, _ = cmd_eval(cfg, args.checkpoint, _out_dir(args), args.split)
            print(json.dumps(metrics))
        elif args.command == "infer":
            if args.out:
                with open(args.out, "w") as fh:
                    cmd_infer(cfg, args.checkpoint, args.input, args.warm, fh)
            else:
                cmd_infer(cfg, args.checkpoint, args.input, args.warm)
        elif args.command == "gradcheck":
            results = cmd_gradcheck(args.instances, cfg.seed)
            if not all(r.passed for r in results):
                return EXIT_NUMERICAL
    except (ConfigError, storage.FormatError, FileNotFoundError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (NumericalError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
