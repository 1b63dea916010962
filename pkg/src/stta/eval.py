"""Pose metrics and per-video evaluation reports."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import geometry as geo
from .errors import AlignmentDegenerateError, CoverageError, ShapeMismatchError
from .synthworld import CLASS_NAMES

PCK_THRESHOLD = 0.05 * geo.DEFAULT_CAMERA.width  # 11.2 px


def _check_pair(pred, gt):
    pred, gt = np.asarray(pred, dtype=np.float64), np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape or pred.shape[-1] != 3:
        raise ShapeMismatchError(f"prediction {pred.shape} vs ground truth {gt.shape}")
    return pred, gt


def joint_errors(pred_j3d, gt_j3d) -> np.ndarray:
    """Root-aligned per-joint distances in mm, shape ``(..., J)``."""
    pred, gt = _check_pair(pred_j3d, gt_j3d)
    d = (pred - pred[..., :1, :]) - (gt - gt[..., :1, :])
    return 1000.0 * np.linalg.norm(d, axis=-1)


def mpjpe(pred_j3d, gt_j3d) -> float:
    return float(np.mean(joint_errors(pred_j3d, gt_j3d)))


def procrustes_batch(pred, gt):
    """Frame-wise Umeyama alignment of ``(..., J, 3)`` point sets; returns aligned ``pred``."""
    pred, gt = _check_pair(pred, gt)
    mu_p, mu_g = pred.mean(axis=-2, keepdims=True), gt.mean(axis=-2, keepdims=True)
    x, y = pred - mu_p, gt - mu_g
    for pts in (x, y):
        sv = np.linalg.svd(pts, compute_uv=False)
        if np.any(sv[..., 1] <= 1e-9 * np.maximum(sv[..., 0], 1e-300)):
            raise AlignmentDegenerateError("need at least 3 non-collinear joints")
    u, s, vt = np.linalg.svd(np.swapaxes(y, -1, -2) @ x)
    d = np.ones(s.shape)
    d[..., -1] = np.sign(np.linalg.det(u) * np.linalg.det(vt))
    rot = (u * d[..., None, :]) @ vt
    scale = np.sum(s * d, axis=-1) / np.sum(x**2, axis=(-1, -2))
    return scale[..., None, None] * x @ np.swapaxes(rot, -1, -2) + mu_g


def pa_joint_errors(pred_j3d, gt_j3d) -> np.ndarray:
    pred, gt = _check_pair(pred_j3d, gt_j3d)
    return 1000.0 * np.linalg.norm(procrustes_batch(pred, gt) - gt, axis=-1)


def pa_mpjpe(pred_j3d, gt_j3d) -> float:
    return float(np.mean(pa_joint_errors(pred_j3d, gt_j3d)))


def pck(pred_j2d, gt_j2d, mask=None, threshold_px: float = PCK_THRESHOLD) -> float:
    """Fraction of masked joints whose pixel error is below ``threshold_px``."""
    pred, gt = np.asarray(pred_j2d, dtype=np.float64), np.asarray(gt_j2d, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ShapeMismatchError(f"prediction {pred.shape} vs ground truth {gt.shape}")
    mask = np.ones(pred.shape[:-1], dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if not mask.any():
        raise CoverageError("PCK mask selects no joints")
    err = np.linalg.norm(pred[mask] - gt[mask], axis=-1)
    return float(np.mean(err < threshold_px))


@dataclass
class VideoMetrics:
    """Sufficient statistics of one evaluated video.

    Sums and counts are kept next to the means so videos, seeds and classes can
    be pooled exactly.
    """
    video_id: int
    pattern: str
    frames: int
    mpjpe: float
    pa_mpjpe: float
    occluded_sum: float
    occluded_count: int
    visible_sum: float
    visible_count: int
    class_sum: dict = field(default_factory=dict)    # class name -> summed per-frame MPJPE
    class_frames: dict = field(default_factory=dict)
    filled_count: int = 0
    filled_hits: int = 0

    @property
    def occluded_mpjpe(self) -> float:
        return self.occluded_sum / self.occluded_count if self.occluded_count else float("nan")

    @property
    def pck_filled(self) -> float:
        return self.filled_hits / self.filled_count if self.filled_count else float("nan")

    def class_mpjpe(self) -> dict:
        return {c: self.class_sum[c] / self.class_frames[c] for c in self.class_sum}

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(occluded_mpjpe=self.occluded_mpjpe, pck_filled=self.pck_filled,
                 class_mpjpe=self.class_mpjpe())
        return d


def evaluate_video(video, pred_j3d, bank=None) -> VideoMetrics:
    """Metrics of ``pred_j3d`` on ``video``; ``bank`` adds PCK of its filled joints."""
    err = joint_errors(pred_j3d, video.gt_j3d)
    occ = ~np.asarray(video.visibility, dtype=bool)
    per_frame = err.mean(axis=1)
    class_sum, class_frames = {}, {}
    for c in np.unique(video.labels):
        sel = video.labels == c
        class_sum[CLASS_NAMES[c]] = float(per_frame[sel].sum())
        class_frames[CLASS_NAMES[c]] = int(sel.sum())
    filled_count = filled_hits = 0
    if bank is not None and bank.filled.any():
        e2 = np.linalg.norm(bank.j2d[bank.filled] - video.gt_j2d[bank.filled], axis=-1)
        filled_count, filled_hits = int(e2.size), int(np.sum(e2 < PCK_THRESHOLD))
    return VideoMetrics(
        video_id=int(video.video_id),
        pattern=str(video.meta.get("pattern", "none")),
        frames=len(video),
        mpjpe=float(err.mean()),
        pa_mpjpe=pa_mpjpe(pred_j3d, video.gt_j3d),
        occluded_sum=float(err[occ].sum()),
        occluded_count=int(occ.sum()),
        visible_sum=float(err[~occ].sum()),
        visible_count=int((~occ).sum()),
        class_sum=class_sum,
        class_frames=class_frames,
        filled_count=filled_count,
        filled_hits=filled_hits,
    )


def aggregate(metrics) -> dict:
    """Frame-weighted pooled metrics over a list of :class:`VideoMetrics`."""
    metrics = list(metrics)
    frames = sum(m.frames for m in metrics)
    occ_n = sum(m.occluded_count for m in metrics)
    fill_n = sum(m.filled_count for m in metrics)
    return {
        "videos": len(metrics),
        "mpjpe": sum(m.mpjpe * m.frames for m in metrics) / frames,
        "pa_mpjpe": sum(m.pa_mpjpe * m.frames for m in metrics) / frames,
        "occluded_mpjpe": sum(m.occluded_sum for m in metrics) / occ_n if occ_n else float("nan"),
        "filled_count": fill_n,
        "pck_filled": sum(m.filled_hits for m in metrics) / fill_n if fill_n else float("nan"),
    }


def per_class_breakdown(pairs) -> dict:
    """Mean MPJPE improvement per class from ``(pre, post)`` :class:`VideoMetrics` pairs.

    Classes absent from every video are omitted; entries are ordered by
    improvement, largest first.
    """
    pre_s, post_s, n = {}, {}, {}
    for pre, post in pairs:
        for c, f in pre.class_frames.items():
            pre_s[c] = pre_s.get(c, 0.0) + pre.class_sum[c]
            post_s[c] = post_s.get(c, 0.0) + post.class_sum[c]
            n[c] = n.get(c, 0) + f
    gain = {c: (pre_s[c] - post_s[c]) / n[c] for c in n}
    return dict(sorted(gain.items(), key=lambda kv: (-kv[1], kv[0])))
