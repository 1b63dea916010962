"""Command-line driver: ``stta {gen,pretrain,adapt,eval,ablate,sweep}``.

Exit codes: 0 success, 1 user error (bad config, missing or malformed
files), 2 internal invariant violation.
"""
from __future__ import annotations

import argparse
import io
import logging
import math
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from . import adapt as ad
from . import config as cf
from . import experiments as ex
from . import neuralnet as nn
from . import synthworld as sw
from .embedding import EmbeddingSpace
from .errors import (ConfigError, CoverageError, FormatError, STTAError, UnknownLabelError,
                     UsageError)
from .eval import aggregate, evaluate_video
from .fileio import atomic_write_bytes, write_csv, write_json, write_jsonl
from .seeding import derive_seed, rng_for

log = logging.getLogger("stta")

USER_ERRORS = (ConfigError, FormatError, UsageError, UnknownLabelError, CoverageError, OSError)


# --------------------------------------------------------------------------- helpers

def _save_array(path: Path, arr: np.ndarray) -> None:
    buf = io.BytesIO()
    np.save(buf, np.ascontiguousarray(arr), allow_pickle=False)
    atomic_write_bytes(path, buf.getvalue())


def _load_array(path: Path) -> np.ndarray:
    try:
        return np.load(path, allow_pickle=False)
    except ValueError as exc:
        raise FormatError(f"{path}: not a numpy array file ({exc})") from None


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        raise ConfigError(f"{what} not found at {path}; run the producing command first or set the path")
    return path


def _dataset(path: Path, what: str) -> list:
    _require(path, what)
    try:
        return sw.load_dataset(path)
    except STTAError as exc:
        raise ConfigError(f"{what}: {exc}") from None


def _benchmark(cfg: dict) -> ex.Benchmark:
    p = cf.paths(cfg)
    videos = _dataset(p["target"], "target benchmark")
    ckp = nn.load_checkpoint(_require(p["checkpoint"], "checkpoint"))
    space = EmbeddingSpace.load(_require(p["embedding"], "embedding space"))
    return ex.Benchmark(videos, ckp, space)


def _seeds(cfg: dict) -> list:
    return list(range(cfg["seed"], cfg["seed"] + cfg["seeds"]))


def _write_rows(path: Path, rows: list) -> None:
    ex.write_table(path, rows)
    log.info("wrote %s", path)
    for r in rows:
        print(", ".join(f"{k}={_short(v)}" for k, v in r.items()))


def _short(v):
    return f"{v:.4f}" if isinstance(v, float) else v


def _json_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    return obj


# --------------------------------------------------------------------------- commands

def cmd_gen(cfg: dict) -> int:
    p = cf.paths(cfg)
    det = cf.detector(cfg)
    src, tgt = cf.domain_spec(cfg, "source"), cf.domain_spec(cfg, "target")
    sw.generate_dataset(src, cfg["n_source"], cfg["source_frames"], derive_seed(cfg["seed"], "source"),
                        p["source"], detector=det)
    sw.generate_dataset(tgt, cfg["n_target"], cfg["target_frames"], derive_seed(cfg["seed"], "target"),
                        p["target"], patterns=sw.benchmark_patterns(cfg["n_target"]), detector=det)
    space = ex.default_space(cfg["seed"])
    p["embedding"].parent.mkdir(parents=True, exist_ok=True)
    space.save(p["embedding"])
    log.info("wrote %d source and %d target videos to %s", cfg["n_source"], cfg["n_target"], cfg["data_dir"])
    return 0


def cmd_pretrain(cfg: dict) -> int:
    p = cf.paths(cfg)
    videos = _dataset(p["source"], "source dataset")
    res = nn.pretrain(None, videos, cf.pretrain_config(cfg))
    p["checkpoint"].parent.mkdir(parents=True, exist_ok=True)
    nn.save_checkpoint(p["checkpoint"], res.params)
    write_csv(p["out"] / "pretrain_curve.csv", ["epoch", "loss"], res.curve)
    log.info("final pretraining loss %.12g", res.curve[-1][1])
    print(f"final_loss={res.curve[-1][1]!r}")
    return 0


def _adapt_task(args):
    video, ckp, space, acfg, seed, rate = args
    labels = None
    if rate > 0:
        labels = sw.corrupt_labels(video.labels, rate, rng_for(seed, "labels", video.video_id), acfg.T)
    return ad.adapt_video(ckp, video, space, acfg, derive_seed(seed, "adapt", video.video_id), labels)


def cmd_adapt(cfg: dict) -> int:
    bench = _benchmark(cfg)
    p = cf.paths(cfg)
    acfg = cf.adapt_config(cfg)
    tasks = [(v, bench.checkpoint, bench.space, acfg, cfg["seed"], cfg["label_noise"]) for v in bench.videos]
    workers = ex.worker_count()
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_adapt_task, tasks))
    else:
        results = [_adapt_task(t) for t in tasks]
    pred_dir, log_dir = p["predictions"], p["out"] / "logs"
    pred_dir.mkdir(parents=True, exist_ok=True)
    log_dir.mkdir(parents=True, exist_ok=True)
    for v, res in zip(bench.videos, results):
        stem = f"video_{v.video_id:03d}"
        _save_array(pred_dir / f"{stem}.j3d.npy", res.prediction.j3d)
        _save_array(pred_dir / f"{stem}.bank_j2d.npy", res.bank.j2d)
        _save_array(pred_dir / f"{stem}.filled.npy", res.bank.filled)
        write_jsonl(log_dir / f"{stem}.jsonl", [
            {**rec, "degraded": bool(rec["degraded"]),
             "segment_similarities": [float(s) for s in res.similarities] if rec["epoch"] == len(res.log) else None}
            for rec in res.log])
        log.info("%s: %d epochs, %d joints filled", stem, len(res.log), res.bank.filled_count)
    return 0


def cmd_eval(cfg: dict) -> int:
    p = cf.paths(cfg)
    videos = _dataset(p["target"], "target benchmark")
    pred_dir = _require(p["predictions"], "prediction directory")
    metrics = []
    for v in videos:
        stem = f"video_{v.video_id:03d}"
        j3d = _load_array(_require(pred_dir / f"{stem}.j3d.npy", f"predictions for {stem}"))
        if j3d.shape != v.gt_j3d.shape:
            raise CoverageError(f"{stem}: predictions {j3d.shape} do not match video {v.gt_j3d.shape}")
        bank = None
        if (pred_dir / f"{stem}.filled.npy").exists():
            filled = _load_array(pred_dir / f"{stem}.filled.npy").astype(bool)
            bank = ad.PoseBank(_load_array(pred_dir / f"{stem}.bank_j2d.npy"), filled | v.visibility, filled)
        metrics.append(evaluate_video(v, j3d, bank))
    report = {"aggregate": aggregate(metrics), "videos": ex.video_rows(metrics)}
    write_json(p["out"] / "metrics.json", _json_safe(report))
    keys = ["video_id", "pattern", "frames", "mpjpe", "pa_mpjpe", "occluded_mpjpe", "pck_filled"]
    write_csv(p["out"] / "metrics.csv", keys, [[m.to_dict()[k] for k in keys] for m in metrics])
    agg = report["aggregate"]
    print(f"mpjpe={agg['mpjpe']:.4f} pa_mpjpe={agg['pa_mpjpe']:.4f} videos={agg['videos']}")
    return 0


def cmd_ablate(cfg: dict) -> int:
    h = ex.Harness(_benchmark(cfg))
    rows = ex.run_ablation(h, _seeds(cfg), cf.adapt_config(cfg))
    _write_rows(cf.paths(cfg)["out"] / "ablation.csv", rows)
    return 0


def cmd_sweep(cfg: dict, kind: str) -> int:
    h = ex.Harness(_benchmark(cfg))
    base, seeds, out = cf.adapt_config(cfg), _seeds(cfg), cf.paths(cfg)["out"]
    if kind == "threshold":
        rows = ex.run_threshold_sweep(h, seeds, cfg["sigmas"], base)
    elif kind == "ema":
        rows = ex.run_ema_sweep(h, seeds, cfg["alphas"], base)
    else:
        rows = ex.run_label_noise(h, seeds, cfg["corruption_rates"], base)
    _write_rows(out / f"sweep_{kind}.csv", rows)
    return 0


# --------------------------------------------------------------------------- parsing

COMMANDS = {
    "gen": "generate source/target datasets and the embedding space",
    "pretrain": "pretrain the regressor on the source dataset",
    "adapt": "adapt the checkpoint on every benchmark video and save predictions",
    "eval": "score saved predictions against the benchmark",
    "ablate": "ablation table over seeds",
    "sweep": "threshold, EMA or label-noise sweep over seeds",
}


def _flag_type(key: cf.Key):
    def parse(text):
        try:
            return key.kind(text)
        except (TypeError, ValueError):
            raise argparse.ArgumentTypeError(f"invalid {key.kind.__name__} value: {text!r}") from None
    return parse


def _fmt_default(v):
    if isinstance(v, tuple):
        return ",".join(repr(x) for x in v)
    return repr(v) if isinstance(v, str) else str(v)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("run configuration (flags override --config)")
    g.add_argument("--config", metavar="FILE", default=argparse.SUPPRESS, help="key = value configuration file")
    g.add_argument("-v", "--verbose", action="count", default=argparse.SUPPRESS, help="more logging")
    for key in cf.KEYS:
        names = [f"--{key.name}"]
        if "_" in key.name:
            names.append(f"--{key.name.replace('_', '-')}")
        g.add_argument(*names, dest=f"key_{key.name}", type=_flag_type(key), default=argparse.SUPPRESS,
                       metavar="V", help=f"{key.help} (default: {_fmt_default(key.default)})")
    parser = argparse.ArgumentParser(
        prog="stta", parents=[common],
        description="Semantics-aware test-time adaptation of a 3D pose regressor on synthetic videos.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    for name, help_text in COMMANDS.items():
        sp = sub.add_parser(name, parents=[common], help=help_text, description=help_text)
        if name == "sweep":
            sp.add_argument("kind", choices=["threshold", "ema", "labels"], help="which sweep to run")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    if args.command is None:
        parser.print_help()
        return 1
    verbose = getattr(args, "verbose", 0)
    logging.basicConfig(level=logging.DEBUG if verbose > 1 else logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config_file = getattr(args, "config", None)
        file_values = cf.load_file(config_file) if config_file else {}
        overrides = {k.name: getattr(args, f"key_{k.name}") for k in cf.KEYS if hasattr(args, f"key_{k.name}")}
        cfg = cf.resolve(file_values, overrides)
        handlers = {"gen": cmd_gen, "pretrain": cmd_pretrain, "adapt": cmd_adapt, "eval": cmd_eval,
                    "ablate": cmd_ablate}
        if args.command == "sweep":
            return cmd_sweep(cfg, args.kind)
        return handlers[args.command](cfg)
    except USER_ERRORS as exc:
        print(f"stta: error: {exc}", file=sys.stderr)
        return 1
    except STTAError as exc:
        if type(exc) is STTAError:
            print(f"stta: error: {exc}", file=sys.stderr)
            return 1
        print(f"stta: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        traceback.print_exc()
        return 2
    except Exception as exc:  # invariant violations and bugs
        print(f"stta: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
