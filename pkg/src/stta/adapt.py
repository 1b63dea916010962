"""Test-time adaptation of the regressor on one unlabeled video.

Each epoch has two phases. First the regressor is fine-tuned on sampled
label-uniform segments against a frozen 2D pose bank with

    loss = lambda1 * L_2d + lambda2 * L_align + L_smooth

Then the whole video is re-predicted and the bank is updated: visible
keypoints are EMA-blended toward the new projections, and missing keypoints
inside segments whose motion matches their label (similarity above sigma)
are filled with the projections.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.ndimage import uniform_filter1d

from . import geometry as geo
from . import neuralnet as nn
from . import tape as tp
from .embedding import EmbeddingSpace
from .errors import CoverageError, SegmentTooShortError, ShapeMismatchError
from .synthworld import SEGMENT_LEN, SyntheticVideo, exemplar_lookup

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AdaptConfig:
    lambda1: float = 0.1
    lambda2: float = 0.2
    sigma: float = 0.75
    alpha: float = 0.9
    T: int = SEGMENT_LEN
    batch: int = 4
    epochs: int = 6
    steps_per_epoch: int | None = None  # None: ceil(2 * kept segments / batch)
    base_lr: float = nn.BASE_LR
    min_lr: float = nn.MIN_LR
    denoise_window: int = 9
    shape_window: int = 31
    weight_floor: float = 0.01
    use_ema: bool = True
    use_fill: bool = True

    def __post_init__(self):
        if not -1.0 < self.sigma < 1.0:
            raise ValueError("sigma must lie in (-1, 1)")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.denoise_window % 2 == 0 or self.shape_window % 2 == 0:
            raise ValueError("smoothing windows must be odd")

    @property
    def use_align(self) -> bool:
        return self.lambda2 > 0


ABLATIONS = {
    "baseline": dict(lambda2=0.0, use_ema=False, use_fill=False),
    "align": dict(use_ema=False, use_fill=False),
    "align_ema": dict(use_fill=False),
    "full": dict(),
}


def ablation_config(name: str, base: AdaptConfig = AdaptConfig()) -> AdaptConfig:
    return replace(base, **ABLATIONS[name])


@dataclass
class Segment:
    video_id: int
    start: int
    label: int
    weight: float = 1.0
    length: int = SEGMENT_LEN

    @property
    def frames(self) -> range:
        return range(self.start, self.start + self.length)


def segment_video(labels, t: int = SEGMENT_LEN, video_id: int = 0) -> list[Segment]:
    """Non-overlapping stride-``t`` windows from frame 0 whose labels all agree."""
    labels = np.asarray(labels)
    out = []
    for start in range(0, len(labels) - t + 1, t):
        win = labels[start:start + t]
        if np.all(win == win[0]):
            out.append(Segment(video_id, start, int(win[0]), 1.0, t))
    return out


def segment_weights(similarities, floor: float = 0.01) -> np.ndarray:
    """Sampling weight ``max(1 - sim, floor)`` per segment."""
    return np.maximum(1.0 - np.asarray(similarities, dtype=np.float64), floor)


def sample_batch(weights, b: int, rng: np.random.Generator) -> np.ndarray:
    w = np.asarray(weights, dtype=np.float64)
    return rng.choice(len(w), size=b, replace=True, p=w / w.sum())


def replace_global_rotation(pred6d, exemplar):
    """Root (joint 0) rotation from ``exemplar``, joints 1-23 from ``pred6d``.

    Both are ``(..., T, 24, 6)``; ``exemplar`` broadcasts over leading dims.
    """
    pv, ev = tp.value(pred6d), np.asarray(exemplar, dtype=np.float64)
    if pv.shape[-3] != ev.shape[-3]:
        raise ShapeMismatchError(f"prediction has {pv.shape[-3]} frames, exemplar {ev.shape[-3]}")
    root = np.broadcast_to(ev[..., :, 0:1, :], pv.shape[:-2] + (1, 6))
    return tp.concat([root, pred6d[..., :, 1:, :]], axis=-2)


def segment_exemplars(labels, t: int = SEGMENT_LEN) -> np.ndarray:
    """Exemplar 6D sequences ``(B, t, 24, 6)``, cycled in time when ``t`` differs from theirs."""
    out = []
    for c in np.atleast_1d(labels):
        ex = exemplar_lookup(int(c))
        out.append(ex[np.arange(t) % len(ex)])
    return np.stack(out)


def loss_align(pred6d_prime, label, space: EmbeddingSpace):
    """``1 - sim(label, motion)``; batched over leading dims of the motion."""
    return 1.0 - space.similarity(label, pred6d_prime)


def loss_2d(pred_j2d, bank_j2d, visible, width: float = geo.DEFAULT_CAMERA.width):
    """Visibility-masked L1 reprojection error, ``(..., T, 24, 2)`` -> ``(...)``.

    Summed over joints and both coordinates, averaged over frames and scaled
    by the image width. Empty bank entries never enter the arithmetic.
    """
    vis = np.asarray(visible, dtype=bool)
    target = np.where(vis[..., None], bank_j2d, 0.0)
    mask = vis[..., None].astype(np.float64)
    err = tp.sum(tp.abs(pred_j2d - target) * mask, axis=(-1, -2))
    return tp.mean(err, axis=-1) / width


def _moving_average(x: np.ndarray, window: int, axis: int) -> np.ndarray:
    if x.shape[axis] < 2:
        raise SegmentTooShortError("smoothing needs at least 2 frames")
    return uniform_filter1d(np.asarray(x, dtype=np.float64), size=window, axis=axis, mode="nearest")


def denoise_motion(theta6d_seq: np.ndarray, window: int = 9, axis: int = 0) -> np.ndarray:
    """Centered, edge-clamped moving average of 6D channels, re-orthonormalized."""
    avg = _moving_average(theta6d_seq, window, axis)
    return geo.orthonormalize_6d(avg)


def average_shape(beta_seq: np.ndarray, window: int = 31, axis: int = 0) -> np.ndarray:
    return _moving_average(beta_seq, window, axis)


def loss_smooth(theta6d, beta, theta_bar, beta_bar):
    """Mean absolute deviation over all 6D and shape elements of a segment.

    Inputs are ``(..., T, 24, 6)`` and ``(..., T, 10)``; returns ``(...)``.
    """
    tv, bv = tp.value(theta6d), tp.value(beta)
    if tv.shape != np.shape(theta_bar) or bv.shape != np.shape(beta_bar):
        raise ShapeMismatchError("smoothing targets do not match the predictions")
    n = tv.shape[-3] * tv.shape[-2] * tv.shape[-1] + bv.shape[-2] * bv.shape[-1]
    d_theta = tp.sum(tp.abs(theta6d - theta_bar), axis=(-1, -2, -3))
    d_beta = tp.sum(tp.abs(beta - beta_bar), axis=(-1, -2))
    return (d_theta + d_beta) / n


def loss_overall(l2d, lalign, lsmooth, cfg: AdaptConfig = AdaptConfig()):
    return cfg.lambda1 * l2d + cfg.lambda2 * lalign + lsmooth


# --------------------------------------------------------------------------- pose bank

@dataclass
class PoseBank:
    j2d: np.ndarray      # (N, 24, 2), NaN where not visible
    visible: np.ndarray  # (N, 24) bool
    filled: np.ndarray   # (N, 24) bool

    @classmethod
    def from_detections(cls, det_j2d, visibility) -> PoseBank:
        vis = np.asarray(visibility, dtype=bool).copy()
        j2d = np.where(vis[..., None], det_j2d, np.nan)
        return cls(j2d, vis, np.zeros_like(vis))

    def copy(self) -> PoseBank:
        return PoseBank(self.j2d.copy(), self.visible.copy(), self.filled.copy())

    def __len__(self):
        return len(self.visible)

    def to_bytes(self) -> bytes:
        return self.j2d.tobytes() + self.visible.tobytes() + self.filled.tobytes()

    @property
    def filled_count(self) -> int:
        return int(self.filled.sum())


def fill_gate(n_frames: int, segments, similarities, sigma: float) -> np.ndarray:
    """Frames belonging to a kept segment whose similarity exceeds ``sigma``."""
    gate = np.zeros(n_frames, dtype=bool)
    for seg, sim in zip(segments, similarities):
        if sim > sigma:
            gate[seg.start:seg.start + seg.length] = True
    return gate


def update_pose_bank(bank: PoseBank, pred_j2d: np.ndarray, segments, similarities,
                     cfg: AdaptConfig = AdaptConfig()) -> PoseBank:
    """One end-of-epoch bank update.

    Visible entries move to ``alpha * old + (1 - alpha) * pred``; missing
    entries in frames gated by :func:`fill_gate` take ``pred`` and become
    visible (flagged as filled); every other missing entry stays empty.
    Entries filled here are EMA-refined only from the next update on.
    """
    pred_j2d = np.asarray(pred_j2d, dtype=np.float64)
    if pred_j2d.shape[:2] != bank.visible.shape:
        raise CoverageError(f"predictions cover {pred_j2d.shape[:2]}, bank is {bank.visible.shape}")
    if len(segments) != len(similarities):
        raise CoverageError("need one similarity per kept segment")
    out = bank.copy()
    vis = bank.visible
    if cfg.use_ema:
        out.j2d[vis] = cfg.alpha * bank.j2d[vis] + (1.0 - cfg.alpha) * pred_j2d[vis]
    if cfg.use_fill:
        gate = fill_gate(len(bank), segments, similarities, cfg.sigma)
        fill = ~vis & gate[:, None]
        out.j2d[fill] = pred_j2d[fill]
        out.visible[fill] = True
        out.filled[fill] = True
    return out


# --------------------------------------------------------------------------- orchestration

@dataclass
class AdaptResult:
    params: nn.RegressorParams
    prediction: nn.Prediction
    log: list
    bank: PoseBank
    segments: list
    similarities: np.ndarray
    degraded: bool = False
    initial_prediction: nn.Prediction | None = field(default=None, repr=False)


def segment_similarities(theta6d: np.ndarray, segments, space: EmbeddingSpace) -> np.ndarray:
    """Similarity of each segment's root-replaced predicted motion to its label."""
    if not segments:
        return np.zeros(0)
    seqs = np.stack([theta6d[s.start:s.start + s.length] for s in segments])
    labels = np.array([s.label for s in segments])
    primed = replace_global_rotation(seqs, segment_exemplars(labels, seqs.shape[1]))
    return np.asarray(space.similarity(labels, primed), dtype=np.float64)


def steps_for(n_segments: int, cfg: AdaptConfig) -> int:
    if cfg.steps_per_epoch is not None:
        return cfg.steps_per_epoch
    return math.ceil(n_segments * 2 / cfg.batch)


def segment_objective(weights, biases, obs, bank_j2d, visible, labels, theta_bar, beta_bar,
                      cfg: AdaptConfig, space: EmbeddingSpace, use_align: bool = True):
    """Batch-mean objective over ``B`` segments, plus its three per-segment parts.

    ``obs`` is ``(B, T, 64)``; bank arrays are ``(B, T, 24, ...)``; the smoothing
    targets are constants.
    """
    b, t = obs.shape[:2]
    pred = nn.predict(weights, biases, obs.reshape(b * t, -1))
    j2d = tp.reshape(pred.j2d, (b, t, geo.NUM_JOINTS, 2))
    l2d = loss_2d(j2d, bank_j2d, visible)
    six = tp.reshape(pred.theta6d, (b, t, geo.NUM_JOINTS, 6))
    beta = tp.reshape(pred.beta, (b, t, geo.NUM_BETAS))
    lsm = loss_smooth(six, beta, theta_bar, beta_bar)
    if use_align:
        la = loss_align(replace_global_rotation(six, segment_exemplars(labels, t)), labels, space)
    else:
        la = np.zeros(b)
    return tp.mean(loss_overall(l2d, la, lsm, cfg)), l2d, la, lsm


def smoothing_targets(weights, biases, obs, cfg: AdaptConfig):
    """Detached ``theta_bar``, ``beta_bar`` of the current predictions on ``(B, T, 64)``."""
    b, t = obs.shape[:2]
    pred = nn.predict(tp.value_list(weights), tp.value_list(biases), obs.reshape(b * t, -1))
    six = pred.theta6d.reshape(b, t, geo.NUM_JOINTS, 6)
    beta = pred.beta.reshape(b, t, geo.NUM_BETAS)
    return denoise_motion(six, cfg.denoise_window, axis=1), average_shape(beta, cfg.shape_window, axis=1)


def batch_loss(weights, biases, video: SyntheticVideo, bank: PoseBank, segs, cfg: AdaptConfig,
               space: EmbeddingSpace, use_align: bool):
    b, t = len(segs), segs[0].length
    frames = np.concatenate([np.arange(s.start, s.start + t) for s in segs])
    obs = video.obs[frames].reshape(b, t, -1)
    theta_bar, beta_bar = smoothing_targets(weights, biases, obs, cfg)
    labels = np.array([s.label for s in segs])
    return segment_objective(weights, biases, obs, bank.j2d[frames].reshape(b, t, -1, 2),
                             bank.visible[frames].reshape(b, t, -1), labels, theta_bar, beta_bar,
                             cfg, space, use_align)


def adapt_video(checkpoint: nn.RegressorParams, video: SyntheticVideo, space: EmbeddingSpace,
                cfg: AdaptConfig = AdaptConfig(), seed: int = 0, labels=None) -> AdaptResult:
    """Fine-tune a copy of ``checkpoint`` on ``video`` and return its final predictions.

    ``labels`` overrides the video's per-frame labels, e.g. with corrupted ones.
    """
    labels = video.labels if labels is None else np.asarray(labels)
    rng = np.random.default_rng(seed)
    params = checkpoint.copy()
    arrays = params.arrays()
    bank = PoseBank.from_detections(video.det_j2d, video.visibility)
    segments = segment_video(labels, cfg.T, video.video_id)
    degraded = not segments
    if degraded:
        log.warning("video %d has no label-uniform segment; adapting without alignment or fill-in",
                    video.video_id)
        segments = [Segment(video.video_id, s, int(labels[s]), 1.0, cfg.T)
                    for s in range(0, len(labels) - cfg.T + 1, cfg.T)]
    use_align = cfg.use_align and not degraded
    run_cfg = cfg if not degraded else replace(cfg, use_fill=False)

    pred = nn.predict_arrays(params, video.obs)
    initial = pred
    sims = segment_similarities(pred.theta6d, segments, space) if not degraded else np.zeros(len(segments))
    steps = steps_for(len(segments), cfg)
    sched = nn.LRSchedule(cfg.epochs * steps, cfg.base_lr, cfg.min_lr)
    state = nn.AdamState.zeros_like(arrays)
    records = []
    step = 0
    for epoch in range(1, cfg.epochs + 1):
        weights = segment_weights(sims, cfg.weight_floor) if use_align else np.ones(len(segments))
        for seg, w in zip(segments, weights):
            seg.weight = float(w)
        sums = np.zeros(4)
        lr = cfg.base_lr
        for _ in range(steps):
            idx = sample_batch(weights, cfg.batch, rng)
            t = tp.GradientTape()
            wv, bv = nn.watch(t, nn.RegressorParams.from_arrays(arrays))
            total, l2d, la, lsm = batch_loss(wv, bv, video, bank, [segments[i] for i in idx],
                                             cfg, space, use_align)
            grads = nn.backward(t, total, wv, bv)
            lr = nn.cosine_lr(step, sched)
            arrays = nn.adam_step(arrays, grads, state, lr)
            step += 1
            sums += [float(tp.value(total)), float(np.mean(tp.value(l2d))),
                     float(np.mean(tp.value(la))), float(np.mean(tp.value(lsm)))]
        params = nn.RegressorParams.from_arrays(arrays)
        pred = nn.predict_arrays(params, video.obs)
        if not degraded:
            sims = segment_similarities(pred.theta6d, segments, space)
        bank = update_pose_bank(bank, pred.j2d, segments if not degraded else [],
                                sims if not degraded else [], run_cfg)
        means = sums / max(steps, 1)
        records.append({
            "epoch": epoch,
            "mean_loss": means[0],
            "mean_l2d": means[1],
            "mean_align": means[2],
            "mean_smooth": means[3],
            "lr": lr,
            "filled_count": bank.filled_count,
            "mean_similarity": float(np.mean(sims)) if len(sims) else 0.0,
            "degraded": degraded,
        })
        log.debug("video %d epoch %d %s", video.video_id, epoch, records[-1])
    return AdaptResult(params, pred, records, bank, segments, np.asarray(sims), degraded, initial)
