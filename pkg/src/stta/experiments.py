"""Experiment harness: ablations, fill-in threshold and EMA sweeps, label noise.

Every run is a pure function of (benchmark, config, seed). Runs are memoized
inside a :class:`Harness` so tables that share a configuration (the full
method appears in the ablation, at sigma = 0.75 and at corruption rate 0)
adapt each video once.
"""
from __future__ import annotations

import hashlib
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import adapt as ad
from . import embedding as em
from . import neuralnet as nn
from . import synthworld as sw
from .eval import VideoMetrics, aggregate, evaluate_video
from .fileio import write_csv
from .seeding import derive_seed, rng_for

log = logging.getLogger(__name__)

SIGMAS = (0.55, 0.60, 0.65, 0.70, 0.75, 0.80)
ALPHAS = (0.75, 0.80, 0.85, 0.90, 0.95)
CORRUPTION_RATES = (0.0, 0.1, 0.25)
ABLATION_ORDER = ("baseline", "align", "align_ema", "full")


@dataclass
class Benchmark:
    videos: list
    checkpoint: nn.RegressorParams
    space: em.EmbeddingSpace

    def fingerprint(self) -> str:
        h = hashlib.sha256(nn.checkpoint_bytes(self.checkpoint))
        h.update(self.space.to_bytes())
        for v in self.videos:
            h.update(v.to_bytes())
        return h.hexdigest()[:16]


@dataclass
class World:
    source: list
    held_out: list
    benchmark: Benchmark
    pretrain_curve: list = field(default_factory=list)


def default_space(seed: int = 0) -> em.EmbeddingSpace:
    anchors = em.build_anchors(em.NUM_CLASSES, em.EMBED_DIM, seed)
    return em.EmbeddingSpace(anchors, em.calibrate(sw.prototype_segments(seed=seed), anchors))


def benchmark_videos(seed: int, n_videos: int = 12, frames: int = sw.BENCHMARK_FRAMES,
                     spec: sw.DomainSpec = sw.TARGET_DOMAIN) -> list:
    pats = sw.benchmark_patterns(n_videos)
    return [sw.generate_video(spec, i, frames, seed, pats[i]) for i in range(n_videos)]


def build_world(seed: int = 0, n_source: int = 20, n_held_out: int = 4, source_frames: int = 600,
                n_target: int = 12, target_frames: int = sw.BENCHMARK_FRAMES,
                pretrain: nn.PretrainConfig | None = None) -> World:
    """Source set, held-out source videos, pretrained checkpoint and target benchmark."""
    src_seed, tgt_seed = derive_seed(seed, "source"), derive_seed(seed, "target")
    videos = [sw.generate_video(sw.SOURCE_DOMAIN, i, source_frames, src_seed)
              for i in range(n_source + n_held_out)]
    res = nn.pretrain(None, videos[:n_source], pretrain or nn.PretrainConfig(seed=seed))
    bench = Benchmark(benchmark_videos(tgt_seed, n_target, target_frames), res.params, default_space(seed))
    return World(videos[:n_source], videos[n_source:], bench, res.curve)


# --------------------------------------------------------------------------- single runs

@dataclass
class RunResult:
    """Metrics of one (config, seed) pass over the benchmark."""
    name: str
    seed: int
    metrics: list             # VideoMetrics per video
    logs: list                # per-video adaptation logs

    @property
    def summary(self) -> dict:
        return aggregate(self.metrics)


def _adapt_one(args):
    video, checkpoint, space, cfg, seed, rate = args
    labels = None
    if rate > 0:
        labels = sw.corrupt_labels(video.labels, rate, rng_for(seed, "labels", video.video_id), cfg.T)
    res = ad.adapt_video(checkpoint, video, space, cfg, derive_seed(seed, "adapt", video.video_id), labels)
    return evaluate_video(video, res.prediction.j3d, res.bank), res.log


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("STTA_THREADS", "1")))
    except ValueError:
        return 1


class Harness:
    def __init__(self, bench: Benchmark, workers: int | None = None):
        self.bench = bench
        self.workers = worker_count() if workers is None else workers
        self._cache: dict = {}
        self._no_adapt: list | None = None

    def no_adapt(self) -> list:
        if self._no_adapt is None:
            self._no_adapt = [evaluate_video(v, nn.predict_arrays(self.bench.checkpoint, v.obs).j3d)
                              for v in self.bench.videos]
        return self._no_adapt

    def run(self, cfg: ad.AdaptConfig, seed: int, name: str = "", rate: float = 0.0) -> RunResult:
        key = (cfg, int(seed), float(rate))
        if key not in self._cache:
            tasks = [(v, self.bench.checkpoint, self.bench.space, cfg, int(seed), rate)
                     for v in self.bench.videos]
            if self.workers > 1:
                with ProcessPoolExecutor(self.workers) as pool:
                    out = list(pool.map(_adapt_one, tasks))
            else:
                out = [_adapt_one(t) for t in tasks]
            self._cache[key] = RunResult(name, int(seed), [m for m, _ in out], [lg for _, lg in out])
            log.info("run %s seed %d rate %.2f: mpjpe %.2f", name, seed, rate,
                     self._cache[key].summary["mpjpe"])
        return self._cache[key]

    def runs(self, cfg, seeds, name="", rate=0.0) -> list:
        return [self.run(cfg, s, name, rate) for s in seeds]


def _median(values) -> float:
    return float(np.median(np.asarray(values, dtype=np.float64)))


def _stat(runs, key) -> float:
    return _median([r.summary[key] for r in runs])


# --------------------------------------------------------------------------- tables

def run_ablation(h: Harness, seeds, base: ad.AdaptConfig = ad.AdaptConfig()) -> list:
    rows = []
    for name in ABLATION_ORDER:
        cfg = ad.ablation_config(name, base)
        runs = h.runs(cfg, seeds, name)
        rows.append({
            "variant": name,
            "align": cfg.use_align, "ema": cfg.use_ema, "fill": cfg.use_fill,
            "mpjpe_median": _stat(runs, "mpjpe"),
            "mpjpe_mean": float(np.mean([r.summary["mpjpe"] for r in runs])),
            "pa_mpjpe_median": _stat(runs, "pa_mpjpe"),
            "occluded_mpjpe_median": _stat(runs, "occluded_mpjpe"),
            "filled_count_median": _stat(runs, "filled_count"),
            "seeds": len(runs),
        })
    return rows


def run_threshold_sweep(h: Harness, seeds, sigmas=SIGMAS, base: ad.AdaptConfig = ad.AdaptConfig()) -> list:
    rows = []
    for sigma in sigmas:
        runs = h.runs(replace(base, sigma=float(sigma)), seeds, f"sigma={sigma}")
        pooled = aggregate([m for r in runs for m in r.metrics])
        rows.append({
            "sigma": float(sigma),
            "mpjpe_median": _stat(runs, "mpjpe"),
            "filled_count": pooled["filled_count"],
            "pck_filled": pooled["pck_filled"],
            "occluded_mpjpe_median": _stat(runs, "occluded_mpjpe"),
            "seeds": len(runs),
        })
    return rows


def run_ema_sweep(h: Harness, seeds, alphas=ALPHAS, base: ad.AdaptConfig = ad.AdaptConfig(),
                  controls: bool = True) -> list:
    rows = []
    grid = [(float(a), "sweep") for a in alphas]
    if controls:
        grid += [(1.0, "control"), (0.0, "control")]
    for alpha, kind in grid:
        runs = h.runs(replace(base, alpha=alpha), seeds, f"alpha={alpha}")
        rows.append({"alpha": alpha, "kind": kind, "mpjpe_median": _stat(runs, "mpjpe"),
                     "pa_mpjpe_median": _stat(runs, "pa_mpjpe"), "seeds": len(runs)})
    return rows


def run_label_noise(h: Harness, seeds, rates=CORRUPTION_RATES, base: ad.AdaptConfig = ad.AdaptConfig()) -> list:
    correct = _stat(h.runs(base, seeds, "full"), "mpjpe")
    no_adapt = aggregate(h.no_adapt())["mpjpe"]
    rows = []
    for rate in rates:
        runs = h.runs(base, seeds, f"labels@{rate}", float(rate))
        rows.append({"rate": float(rate), "mpjpe_corrupted_median": _stat(runs, "mpjpe"),
                     "mpjpe_correct_median": correct, "mpjpe_no_adapt": no_adapt,
                     "seeds": len(runs)})
    return rows


def write_table(path, rows: list) -> None:
    write_csv(path, list(rows[0].keys()), [[r[k] for k in rows[0]] for r in rows])


def video_rows(metrics) -> list:
    """Flat per-video records for JSON reports."""
    return [m.to_dict() for m in metrics]


__all__ = [
    "Benchmark", "World", "Harness", "RunResult", "build_world", "benchmark_videos", "default_space",
    "run_ablation", "run_threshold_sweep", "run_ema_sweep", "run_label_noise", "write_table",
    "video_rows", "SIGMAS", "ALPHAS", "CORRUPTION_RATES", "ABLATION_ORDER", "VideoMetrics",
]
