"""Synthetic source and target universes.

Motions come from per-class sinusoid templates over local Euler angles. A
video is one or two class blocks (cross-faded at the label change), rendered
into

* an observation feature per frame, a fixed random tanh map of the true pose
  plus nuisance dimensions whose distribution differs between domains,
* ground-truth 3D joints and their projection,
* simulated 2D detections with pixel noise, dropout and occlusion patterns.
"""
from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import geometry as geo
from .embedding import CLASS_NAMES, NUM_CLASSES, class_id
from .errors import FormatError, STTAError
from .fileio import atomic_write_bytes, write_json
from .seeding import derive_seed

FPS = 30.0
SEGMENT_LEN = 60
OBS_DIM = 64
OBS_FEATURE_DIM = 48
NUISANCE_DIM = 16
OBS_SEED = 20240611
REF_DEPTH = 9.0
YAW_RANGE = (0.5, 1.6)
BENCHMARK_FRAMES = 1800
# translation enters the feature map in standardized units so image position is a salient cue
OBS_TRANS_SCALE = np.array([5.0, 5.0, 1.0])

J = {name: i for i, name in enumerate(geo.JOINT_NAMES)}

# hips, knees, ankles, feet plus the pelvis and lowest spine joint
LOWER_BODY = (0, 1, 2, 3, 4, 5, 7, 8, 10, 11)

BLOCK_GROUPS = (
    (J["left_hip"], J["left_knee"], J["left_ankle"], J["left_foot"]),
    (J["right_hip"], J["right_knee"], J["right_ankle"], J["right_foot"]),
    (J["left_knee"], J["right_knee"], J["left_ankle"], J["right_ankle"], J["left_foot"], J["right_foot"]),
    (J["left_shoulder"], J["left_elbow"], J["left_wrist"], J["left_hand"]),
    (J["right_shoulder"], J["right_elbow"], J["right_wrist"], J["right_hand"]),
)

PATTERNS = ("none", "lower_body_truncation", "random_block")

_X, _Y, _Z = 0, 1, 2

# class -> (frequency Hz, [(joint, axis, offset rad, amplitude rad, phase rad), ...])
TEMPLATES = {
    "idle": (0.25, [
        ("spine1", _X, 0.02, 0.02, 0.0),
        ("spine3", _Z, 0.0, 0.02, 0.5),
        ("neck", _X, 0.0, 0.03, 1.0),
        ("left_shoulder", _X, 0.0, 0.03, 0.0),
        ("right_shoulder", _X, 0.0, 0.03, np.pi),
        ("left_shoulder", _Z, -0.1, 0.0, 0.0),
        ("right_shoulder", _Z, 0.1, 0.0, 0.0),
    ]),
    "walking": (1.0, [
        ("left_hip", _X, -0.1, 0.45, 0.0),
        ("right_hip", _X, -0.1, 0.45, np.pi),
        ("left_knee", _X, 0.55, 0.45, -np.pi / 2),
        ("right_knee", _X, 0.55, 0.45, np.pi / 2),
        ("left_ankle", _X, 0.0, 0.15, 0.0),
        ("right_ankle", _X, 0.0, 0.15, np.pi),
        ("left_shoulder", _X, 0.0, 0.35, np.pi),
        ("right_shoulder", _X, 0.0, 0.35, 0.0),
        ("left_elbow", _X, -0.3, 0.15, np.pi),
        ("right_elbow", _X, -0.3, 0.15, 0.0),
        ("spine2", _Y, 0.0, 0.08, 0.0),
    ]),
    "squatting": (0.4, [
        ("left_hip", _X, -0.85, -0.85, 0.0),
        ("right_hip", _X, -0.85, -0.85, 0.0),
        ("left_knee", _X, 1.05, 1.05, 0.0),
        ("right_knee", _X, 1.05, 1.05, 0.0),
        ("left_ankle", _X, -0.3, -0.3, 0.0),
        ("right_ankle", _X, -0.3, -0.3, 0.0),
        ("spine1", _X, 0.2, 0.2, 0.0),
        ("left_shoulder", _X, -0.6, -0.6, 0.0),
        ("right_shoulder", _X, -0.6, -0.6, 0.0),
    ]),
    "sitting": (0.3, [
        ("left_hip", _X, -1.45, 0.03, 0.0),
        ("right_hip", _X, -1.45, 0.03, 0.5),
        ("left_knee", _X, 1.45, 0.03, 0.0),
        ("right_knee", _X, 1.45, 0.03, 0.5),
        ("spine1", _X, 0.1, 0.02, 0.0),
        ("left_shoulder", _X, -0.2, 0.05, 0.0),
        ("right_shoulder", _X, -0.2, 0.05, 1.0),
        ("left_elbow", _X, -0.9, 0.05, 0.0),
        ("right_elbow", _X, -0.9, 0.05, 1.0),
    ]),
    "raise-arms": (0.5, [
        ("left_shoulder", _Z, -1.2, -1.2, 0.0),
        ("right_shoulder", _Z, 1.2, 1.2, 0.0),
        ("left_elbow", _Z, -0.15, -0.15, 0.0),
        ("right_elbow", _Z, 0.15, 0.15, 0.0),
        ("spine3", _X, 0.0, -0.05, 0.0),
        ("neck", _X, 0.0, -0.1, 0.0),
    ]),
    "bend-down": (0.35, [
        ("spine1", _X, 0.35, 0.35, 0.0),
        ("spine2", _X, 0.30, 0.30, 0.0),
        ("spine3", _X, 0.25, 0.25, 0.0),
        ("neck", _X, 0.10, 0.10, 0.0),
        ("left_hip", _X, -0.15, -0.15, 0.0),
        ("right_hip", _X, -0.15, -0.15, 0.0),
        ("left_shoulder", _X, -0.3, -0.3, 0.0),
        ("right_shoulder", _X, -0.3, -0.3, 0.0),
    ]),
}


@dataclass(frozen=True)
class DomainSpec:
    name: str
    class_mixture: tuple[float, ...]
    amplitude_damping: float = 1.0
    nuisance_mean: float = 0.0
    nuisance_scale: float = 1.0
    obs_noise_sigma: float = 0.02

    def __post_init__(self):
        mix = np.asarray(self.class_mixture, dtype=np.float64)
        if mix.shape != (NUM_CLASSES,) or np.any(mix < 0) or abs(mix.sum() - 1.0) > 1e-9:
            raise ValueError("class_mixture must be 6 nonnegative probabilities summing to 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["class_mixture"] = list(self.class_mixture)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> DomainSpec:
        d = dict(d)
        d["class_mixture"] = tuple(d["class_mixture"])
        return cls(**d)


def _mixture(*names) -> tuple[float, ...]:
    mix = np.zeros(NUM_CLASSES)
    for n in names:
        mix[class_id(n)] = 1.0 / len(names)
    return tuple(mix.tolist())


SOURCE_DOMAIN = DomainSpec("source", _mixture("idle", "sitting", "bend-down"),
                           amplitude_damping=0.6, nuisance_mean=0.0, nuisance_scale=0.1)
TARGET_DOMAIN = DomainSpec("target", _mixture(*CLASS_NAMES),
                           amplitude_damping=1.0, nuisance_mean=0.75, nuisance_scale=0.1)


@dataclass(frozen=True)
class DetectorModel:
    pixel_noise_sigma: float = 3.0
    drop_prob: float = 0.05

    def __post_init__(self):
        if not 0.0 <= self.drop_prob <= 1.0 or self.pixel_noise_sigma < 0:
            raise ValueError("detector needs drop_prob in [0, 1] and sigma >= 0")


@dataclass
class MotionSequence:
    label: int
    theta: np.ndarray  # (T, 24, 3) axis-angle
    beta: np.ndarray   # (10,)
    trans: np.ndarray  # (T, 3)

    def __len__(self):
        return len(self.theta)

    def poses(self):
        return [geo.Pose(th, self.beta, tr) for th, tr in zip(self.theta, self.trans)]

    def sixd(self) -> np.ndarray:
        return geo.aa_to_6d(self.theta)


@dataclass
class _Jitter:
    amp_scale: float = 1.0
    freq_scale: float = 1.0
    phase: float = 0.0
    yaw0: float = 0.0
    drift_amp: float = 0.0
    drift_phase: float = 0.0
    center: tuple = (0.0, 0.0, REF_DEPTH)

    @classmethod
    def sample(cls, rng: np.random.Generator) -> _Jitter:
        return cls(
            amp_scale=rng.uniform(0.85, 1.15),
            freq_scale=rng.uniform(0.9, 1.1),
            phase=rng.uniform(0.0, 2 * np.pi),
            # oblique to profile views, either side
            yaw0=rng.choice([-1.0, 1.0]) * rng.uniform(*YAW_RANGE),
            drift_amp=0.25,
            drift_phase=rng.uniform(0.0, 2 * np.pi),
            center=(rng.uniform(-0.3, 0.3), rng.uniform(-0.1, 0.1), rng.uniform(8.0, 10.0)),
        )


def _channels(label: int, t: np.ndarray, jit: _Jitter, damping: float):
    """Local Euler angles ``(T, 24, 3)``, root yaw ``(T,)`` and root position ``(T, 3)``."""
    name = CLASS_NAMES[label]
    freq, terms = TEMPLATES[name]
    omega = 2 * np.pi * freq * jit.freq_scale
    euler = np.zeros((len(t), geo.NUM_JOINTS, 3))
    for joint, axis, offset, amp, phase in terms:
        wave = np.sin(omega * t + phase + jit.phase)
        euler[:, J[joint], axis] += damping * (offset + jit.amp_scale * amp * wave)
    yaw = jit.yaw0 + jit.drift_amp * np.sin(2 * np.pi * t / 20.0 + jit.drift_phase)
    pos = np.tile(np.asarray(jit.center, dtype=np.float64), (len(t), 1))
    if name == "walking":
        # lateral sweep at up to 1.2 m/s, body turned toward the travel direction
        w = 1.5 * jit.freq_scale
        pos[:, 0] += damping * 0.8 * np.sin(w * t + jit.phase)
        yaw = yaw + damping * 0.6 * np.cos(w * t + jit.phase)
        pos[:, 1] += 0.02 * np.abs(np.sin(omega * t + jit.phase))
    elif name == "squatting":
        pos[:, 1] += damping * 0.2 * (1.0 + np.sin(omega * t + jit.phase))
    elif name == "sitting":
        pos[:, 1] += damping * 0.35
    elif name == "idle":
        pos[:, 0] += 0.02 * np.sin(omega * t + jit.phase)
    return euler, yaw, pos


def _to_theta(euler: np.ndarray, yaw: np.ndarray) -> np.ndarray:
    rot = geo.rot_x(euler[..., 0]) @ geo.rot_y(euler[..., 1]) @ geo.rot_z(euler[..., 2])
    rot[:, 0] = geo.rot_y(yaw) @ rot[:, 0]
    return geo.matrix_to_aa(rot)


def _sample_beta(rng: np.random.Generator) -> np.ndarray:
    return np.clip(rng.normal(0.0, 0.5, size=geo.NUM_BETAS), -1.5, 1.5)


def generate_motion(label, t_frames: int, seed: int, damping: float = 1.0) -> MotionSequence:
    """Single-class motion of ``t_frames`` frames, deterministic in ``seed``."""
    label = class_id(label)
    if t_frames < SEGMENT_LEN:
        raise STTAError(f"motions need at least {SEGMENT_LEN} frames")
    rng = np.random.default_rng(seed)
    jit = _Jitter.sample(rng)
    beta = _sample_beta(rng)
    t = np.arange(t_frames) / FPS
    euler, yaw, pos = _channels(label, t, jit, damping)
    return MotionSequence(label, _to_theta(euler, yaw), beta, pos)


@lru_cache(maxsize=None)
def _exemplar(label: int) -> np.ndarray:
    t = np.arange(SEGMENT_LEN) / FPS
    euler, yaw, _ = _channels(label, t, _Jitter(center=(0.0, 0.0, 0.0)), 1.0)
    out = geo.aa_to_6d(_to_theta(euler, yaw))
    out.setflags(write=False)
    return out


def exemplar_lookup(label) -> np.ndarray:
    """Canonical 60-frame 6D sequence ``(60, 24, 6)`` of a class."""
    return _exemplar(class_id(label))


def with_exemplar_root(seq6d: np.ndarray, label) -> np.ndarray:
    out = np.array(seq6d, dtype=np.float64, copy=True)
    out[:, 0] = exemplar_lookup(label)[:, 0]
    return out


def prototype_segments(per_class: int = 8, seed: int = 0):
    """Calibration segments ``(label, (60, 24, 6))``: each class's exemplar plus
    ``per_class - 1`` jittered instances from random windows."""
    out = []
    for c in range(NUM_CLASSES):
        out.append((c, exemplar_lookup(c).copy()))
        for k in range(per_class - 1):
            s = derive_seed(seed, f"prototype-{c}", k)
            motion = generate_motion(c, 4 * SEGMENT_LEN, s)
            start = np.random.default_rng(s).integers(0, 3 * SEGMENT_LEN)
            seg = motion.sixd()[start:start + SEGMENT_LEN]
            out.append((c, with_exemplar_root(seg, c)))
    return out


@lru_cache(maxsize=1)
def _observation_weights():
    rng = np.random.default_rng(OBS_SEED)
    in_dim = geo.NUM_JOINTS * 6 + geo.NUM_BETAS + 3
    w = rng.normal(0.0, 3.0 / np.sqrt(in_dim), size=(OBS_FEATURE_DIM, in_dim))
    b = rng.normal(0.0, 0.3, size=OBS_FEATURE_DIM)
    return w, b


_IDENTITY_6D = np.array([1.0, 0.0, 0.0, 0.0, 1.0, 0.0])


def pose_features(theta6d: np.ndarray, beta: np.ndarray, trans: np.ndarray) -> np.ndarray:
    """First 48 observation dimensions for ``(T, 24, 6)``, ``(T, 10)``, ``(T, 3)`` inputs."""
    w, b = _observation_weights()
    x = np.concatenate([
        (theta6d - _IDENTITY_6D).reshape(len(theta6d), -1),
        beta,
        (trans - np.array([0.0, 0.0, REF_DEPTH])) * OBS_TRANS_SCALE,
    ], axis=1)
    return np.tanh(x @ w.T + b)


def observe(theta6d, beta, trans, spec: DomainSpec, rng: np.random.Generator) -> np.ndarray:
    feats = pose_features(theta6d, beta, trans)
    nuisance = spec.nuisance_mean + spec.nuisance_scale * rng.normal(size=(len(feats), NUISANCE_DIM))
    obs = np.concatenate([feats, nuisance], axis=1)
    return obs + spec.obs_noise_sigma * rng.normal(size=obs.shape)


def synth_observation(pose: geo.Pose, spec: DomainSpec, seed: int) -> np.ndarray:
    """64-dim observation of a single pose."""
    rng = np.random.default_rng(seed)
    six = geo.aa_to_6d(pose.theta)[None]
    return observe(six, pose.beta[None], pose.trans[None], spec, rng)[0]


def occlusion_mask(n_frames: int, n_joints: int, pattern: str, rng: np.random.Generator) -> np.ndarray:
    """Pattern-level invisibility ``(T, J)``: truncation or one contiguous random block."""
    if pattern not in PATTERNS:
        raise ValueError(f"unknown occlusion pattern {pattern!r}")
    hidden = np.zeros((n_frames, n_joints), dtype=bool)
    if pattern == "lower_body_truncation":
        hidden[:, list(LOWER_BODY)] = True
    elif pattern == "random_block":
        group = BLOCK_GROUPS[rng.integers(len(BLOCK_GROUPS))]
        span = int(rng.integers(n_frames // 3, 2 * n_frames // 3 + 1))
        start = int(rng.integers(0, n_frames - span + 1))
        hidden[start:start + span, list(group)] = True
    return hidden


def simulate_detector(gt_j2d: np.ndarray, pattern: str, det: DetectorModel,
                      rng: np.random.Generator, hidden: np.ndarray | None = None):
    """Noisy 2D detections ``(T, 24, 2)`` with NaN where the visibility mask is false.

    ``hidden`` overrides the pattern mask (it is drawn from ``rng`` otherwise);
    independent per-joint dropout is applied on top.
    """
    gt_j2d = np.asarray(gt_j2d, dtype=np.float64)
    n_frames, n_joints = gt_j2d.shape[:2]
    if hidden is None:
        hidden = occlusion_mask(n_frames, n_joints, pattern, rng)
    elif pattern not in PATTERNS:
        raise ValueError(f"unknown occlusion pattern {pattern!r}")
    noisy = gt_j2d + det.pixel_noise_sigma * rng.normal(size=gt_j2d.shape)
    vis = (rng.random((n_frames, n_joints)) >= det.drop_prob) & ~hidden
    out = np.where(vis[..., None], noisy, np.nan)
    return out, vis


# --------------------------------------------------------------------------- videos

_VID_MAGIC = b"STTA-VID"
_VID_VERSION = 1
FRAME_DTYPE = np.dtype([
    ("obs", "<f8", (OBS_DIM,)),
    ("theta", "<f8", (72,)),
    ("beta", "<f8", (10,)),
    ("trans", "<f8", (3,)),
    ("gt_j3d", "<f8", (72,)),
    ("gt_j2d", "<f8", (48,)),
    ("det_j2d", "<f8", (48,)),
    ("visibility", "u1", (24,)),
    ("label", "<u2"),
])


@dataclass
class SyntheticVideo:
    obs: np.ndarray        # (T, 64)
    theta: np.ndarray      # (T, 24, 3)
    beta: np.ndarray       # (T, 10)
    trans: np.ndarray      # (T, 3)
    gt_j3d: np.ndarray     # (T, 24, 3)
    gt_j2d: np.ndarray     # (T, 24, 2)
    det_j2d: np.ndarray    # (T, 24, 2), NaN where not visible
    visibility: np.ndarray  # (T, 24) bool
    labels: np.ndarray     # (T,) class ids
    video_id: int = 0
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.obs)

    @property
    def theta6d(self) -> np.ndarray:
        return geo.aa_to_6d(self.theta)

    def to_bytes(self) -> bytes:
        n = len(self)
        rec = np.zeros(n, dtype=FRAME_DTYPE)
        rec["obs"] = self.obs
        rec["theta"] = self.theta.reshape(n, -1)
        rec["beta"] = self.beta
        rec["trans"] = self.trans
        rec["gt_j3d"] = self.gt_j3d.reshape(n, -1)
        rec["gt_j2d"] = self.gt_j2d.reshape(n, -1)
        rec["det_j2d"] = np.where(self.visibility[..., None], self.det_j2d, np.nan).reshape(n, -1)
        rec["visibility"] = self.visibility
        rec["label"] = self.labels
        return _VID_MAGIC + struct.pack("<II", _VID_VERSION, n) + rec.tobytes()

    @classmethod
    def from_bytes(cls, data: bytes, video_id: int = 0, meta: dict | None = None) -> SyntheticVideo:
        if data[:8] != _VID_MAGIC:
            raise FormatError("not a video file (bad magic)")
        version, n = struct.unpack_from("<II", data, 8)
        if version != _VID_VERSION:
            raise FormatError(f"unsupported video version {version}")
        if len(data) != 16 + n * FRAME_DTYPE.itemsize:
            raise FormatError("video file truncated or padded")
        rec = np.frombuffer(data, dtype=FRAME_DTYPE, count=n, offset=16)
        vis = rec["visibility"].astype(bool)
        return cls(
            obs=rec["obs"].astype(np.float64),
            theta=rec["theta"].reshape(n, 24, 3).astype(np.float64),
            beta=rec["beta"].astype(np.float64),
            trans=rec["trans"].astype(np.float64),
            gt_j3d=rec["gt_j3d"].reshape(n, 24, 3).astype(np.float64),
            gt_j2d=rec["gt_j2d"].reshape(n, 24, 2).astype(np.float64),
            det_j2d=rec["det_j2d"].reshape(n, 24, 2).astype(np.float64),
            visibility=vis,
            labels=rec["label"].astype(np.int64),
            video_id=video_id,
            meta=dict(meta or {}),
        )

    def save(self, path) -> None:
        path = Path(path)
        atomic_write_bytes(path, self.to_bytes())
        write_json(path.with_suffix(".json"), {"video_id": self.video_id, **self.meta})

    @classmethod
    def load(cls, path) -> SyntheticVideo:
        path = Path(path)
        side = path.with_suffix(".json")
        meta = json.loads(side.read_text()) if side.exists() else {}
        vid = int(meta.pop("video_id", 0))
        return cls.from_bytes(path.read_bytes(), vid, meta)


def generate_video(spec: DomainSpec, video_id: int, n_frames: int, seed: int,
                   pattern: str = "none", detector: DetectorModel | None = None,
                   skel: geo.Skeleton = geo.DEFAULT_SKELETON,
                   cam: geo.Camera = geo.DEFAULT_CAMERA) -> SyntheticVideo:
    if n_frames % SEGMENT_LEN or n_frames <= 0:
        raise STTAError(f"frame count must be a positive multiple of {SEGMENT_LEN}")
    detector = detector or DetectorModel()
    vseed = derive_seed(seed, "video", video_id)
    rng = np.random.default_rng(vseed)
    mix = np.asarray(spec.class_mixture)
    first = int(rng.choice(NUM_CLASSES, p=mix))
    labels = np.full(n_frames, first, dtype=np.int64)
    t = np.arange(n_frames) / FPS
    jit_a = _Jitter.sample(rng)
    beta = _sample_beta(rng)
    euler, yaw, pos = _channels(first, t, jit_a, spec.amplitude_damping)

    n_win = n_frames // SEGMENT_LEN
    others = [c for c in range(NUM_CLASSES) if c != first and mix[c] > 0]
    if n_win >= 5 and others and rng.random() < 0.5:
        second = int(rng.choice(others, p=mix[others] / mix[others].sum()))
        k = int(rng.integers(2, n_win - 2))
        split = k * SEGMENT_LEN + int(rng.integers(15, 46))
        jit_b = _Jitter.sample(rng)
        jit_b.center, jit_b.yaw0, jit_b.drift_phase = jit_a.center, jit_a.yaw0, jit_a.drift_phase
        e2, y2, p2 = _channels(second, t, jit_b, spec.amplitude_damping)
        ramp = np.clip((np.arange(n_frames) - (split - 6)) / 12.0, 0.0, 1.0)
        euler = (1 - ramp)[:, None, None] * euler + ramp[:, None, None] * e2
        yaw = (1 - ramp) * yaw + ramp * y2
        pos = (1 - ramp)[:, None] * pos + ramp[:, None] * p2
        labels[split:] = second

    theta = _to_theta(euler, yaw)
    betas = np.tile(beta, (n_frames, 1))
    rot = geo.aa_to_matrix(theta)
    j3d = geo.fk_from_matrices(rot, skel.bone_scales(betas), pos, skel)
    j2d = geo.project(j3d, cam)
    det_rng = np.random.default_rng(derive_seed(seed, "detector", video_id))
    hidden = occlusion_mask(n_frames, geo.NUM_JOINTS, pattern, det_rng)
    det_j2d, vis = simulate_detector(j2d, pattern, detector, det_rng, hidden)
    obs = observe(geo.matrix_to_6d(rot), betas, pos, spec, rng)
    meta = {
        "seed": int(seed),
        "fps": FPS,
        "domain": spec.to_dict(),
        "detector": asdict(detector),
        "pattern": pattern,
        "classes": list(CLASS_NAMES),
    }
    return SyntheticVideo(obs, theta, betas, pos, j3d, j2d, det_j2d, vis, labels, video_id, meta)


def video_path(out_dir, video_id: int) -> Path:
    return Path(out_dir) / f"video_{video_id:03d}.vid"


def generate_dataset(spec: DomainSpec, n_videos: int, frames_per_video: int, seed: int,
                     out_dir, patterns=None, detector: DetectorModel | None = None) -> list[Path]:
    """Write ``n_videos`` videos (binary record file plus JSON sidecar each)."""
    if frames_per_video % SEGMENT_LEN:
        raise STTAError(f"frames_per_video must be a multiple of {SEGMENT_LEN}")
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise STTAError(f"cannot create dataset directory {out_dir}: {exc}") from None
    paths = []
    for vid in range(n_videos):
        pattern = patterns[vid] if patterns is not None else "none"
        video = generate_video(spec, vid, frames_per_video, seed, pattern, detector)
        path = video_path(out_dir, vid)
        video.save(path)
        paths.append(path)
    return paths


def benchmark_patterns(n_videos: int = 12) -> list[str]:
    """Equal thirds: truncated, random-block occluded, clean."""
    third = n_videos // 3
    return (["lower_body_truncation"] * third + ["random_block"] * third
            + ["none"] * (n_videos - 2 * third))


def load_dataset(directory) -> list[SyntheticVideo]:
    paths = sorted(Path(directory).glob("video_*.vid"))
    if not paths:
        raise STTAError(f"no video files in {directory}")
    return [SyntheticVideo.load(p) for p in paths]


def corrupt_labels(labels: np.ndarray, rate: float, rng: np.random.Generator,
                   t: int = SEGMENT_LEN) -> np.ndarray:
    """Relabel a ``rate`` fraction of the uniform-label stride-``t`` windows,
    each to one random wrong class."""
    out = np.array(labels, copy=True)
    uniform = [w for w in range(len(out) // t) if np.all(out[w * t:(w + 1) * t] == out[w * t])]
    k = int(round(rate * len(uniform)))
    if k == 0:
        return out
    for w in sorted(rng.choice(uniform, size=k, replace=False)):
        sl = slice(w * t, (w + 1) * t)
        wrong = [c for c in range(NUM_CLASSES) if c != out[w * t]]
        out[sl] = wrong[int(rng.integers(len(wrong)))]
    return out
