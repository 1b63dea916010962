"""Frozen motion-text embedding space.

Class labels map to fixed unit anchor vectors; a motion segment maps through
a phase-invariant feature summary and a frozen linear encoder onto the same
unit sphere. Their cosine is the motion-text similarity used by the
alignment loss, the segment sampler and the fill-in gate.

The feature and similarity functions are written against :mod:`stta.tape`
operations, so they evaluate on plain arrays and record gradients when handed
a :class:`~stta.tape.Var`.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import tape as tp
from .errors import (CalibrationError, DegenerateEmbeddingError, DimensionError,
                     FormatError, SegmentTooShortError, UnknownLabelError)

CLASS_NAMES = ("idle", "walking", "squatting", "sitting", "raise-arms", "bend-down")
NUM_CLASSES = len(CLASS_NAMES)
EMBED_DIM = 32
FEATURE_DIM = 288
FEATURE_EPS = 1e-8
RIDGE = 1e-4

_MAGIC = b"STTA-EMB"
_VERSION = 1


def class_id(label) -> int:
    """Resolve a class name or integer id, raising :class:`UnknownLabelError`."""
    if isinstance(label, str):
        try:
            return CLASS_NAMES.index(label)
        except ValueError:
            raise UnknownLabelError(f"unknown class name {label!r}") from None
    idx = int(label)
    if not 0 <= idx < NUM_CLASSES:
        raise UnknownLabelError(f"unknown class id {idx}")
    return idx


def build_anchors(c: int, d: int, seed: int) -> np.ndarray:
    """``c`` mutually orthogonal unit rows in ``R^d`` (Gram-Schmidt on Gaussians)."""
    if d < c:
        raise DimensionError(f"cannot fit {c} orthogonal anchors in {d} dimensions")
    rng = np.random.default_rng(seed)
    raw = rng.normal(size=(c, d))
    rows = []
    for v in raw:
        for _ in range(2):  # re-orthogonalize once for accuracy
            for u in rows:
                v = v - (v @ u) * u
        rows.append(v / np.linalg.norm(v))
    return np.array(rows)


def motion_features(seq):
    """Temporal mean and standard deviation of a ``(..., T, 24, 6)`` sequence.

    Returns ``(..., 288)``: the 144 means followed by the 144 deviations
    ``sqrt(var + 1e-8)``.
    """
    shape = tp.value(seq).shape
    if len(shape) < 3 or shape[-3] < 2:
        raise SegmentTooShortError("motion features need at least 2 frames")
    flat = tp.reshape(seq, shape[:-2] + (shape[-2] * shape[-1],))
    mu = tp.mean(flat, axis=-2, keepdims=True)
    dev = flat - mu
    var = tp.mean(dev * dev, axis=-2)
    std = tp.sqrt(var + FEATURE_EPS)
    mu = tp.reshape(mu, shape[:-3] + (shape[-2] * shape[-1],))
    return tp.concat([mu, std], axis=-1)


def encode_motion(phi, w: np.ndarray):
    """Unit-normalized linear embedding of ``(..., F)`` features."""
    phi_v = tp.value(phi)
    lead = phi_v.shape[:-1]
    col = tp.reshape(phi, lead + (phi_v.shape[-1], 1))
    z = tp.reshape(w @ col, lead + (w.shape[0],))
    sq = tp.sum(z * z, axis=-1, keepdims=True)
    if np.any(tp.value(sq) <= 1e-24):
        raise DegenerateEmbeddingError("motion embedding has zero norm before normalization")
    return z / tp.sqrt(sq)


@dataclass
class EmbeddingSpace:
    anchors: np.ndarray  # (C, D) unit rows
    weights: np.ndarray  # (D, F) frozen encoder

    def __post_init__(self):
        self.anchors.setflags(write=False)
        self.weights.setflags(write=False)

    @property
    def num_classes(self) -> int:
        return self.anchors.shape[0]

    def anchor(self, label):
        idx = np.asarray(label)
        if idx.ndim == 0:
            return self.anchors[self._check(label)]
        return self.anchors[[self._check(i) for i in idx.ravel()]].reshape(idx.shape + (-1,))

    def _check(self, label) -> int:
        idx = class_id(label)
        if idx >= self.num_classes:
            raise UnknownLabelError(f"unknown class id {idx}")
        return idx

    def embed(self, seq):
        return encode_motion(motion_features(seq), self.weights)

    def similarity(self, label, seq):
        """Cosine between the label anchor and the embedded ``(..., T, 24, 6)`` motion.

        ``label`` may be an array matching the sequence batch shape.
        """
        a = self.anchor(label)
        return tp.sum(self.embed(seq) * a, axis=-1)

    def to_bytes(self) -> bytes:
        c, d = self.anchors.shape
        f = self.weights.shape[1]
        head = _MAGIC + struct.pack("<IIII", _VERSION, c, d, f)
        return (head + self.anchors.astype("<f8").tobytes(order="C")
                + self.weights.astype("<f8").tobytes(order="C"))

    @classmethod
    def from_bytes(cls, data: bytes) -> EmbeddingSpace:
        if data[:8] != _MAGIC:
            raise FormatError("not an embedding-space file (bad magic)")
        version, c, d, f = struct.unpack_from("<IIII", data, 8)
        if version != _VERSION:
            raise FormatError(f"unsupported embedding-space version {version}")
        off = 8 + 16
        need = off + 8 * (c * d + d * f)
        if len(data) != need:
            raise FormatError(f"embedding-space file has {len(data)} bytes, expected {need}")
        anchors = np.frombuffer(data, "<f8", c * d, off).reshape(c, d).astype(np.float64)
        weights = np.frombuffer(data, "<f8", d * f, off + 8 * c * d).reshape(d, f).astype(np.float64)
        return cls(anchors, weights)

    def save(self, path) -> None:
        from .fileio import atomic_write_bytes

        atomic_write_bytes(path, self.to_bytes())

    @classmethod
    def load(cls, path) -> EmbeddingSpace:
        return cls.from_bytes(Path(path).read_bytes())


def calibrate(prototypes, anchors: np.ndarray, ridge: float = RIDGE) -> np.ndarray:
    """Ridge-regress prototype features onto their class anchors.

    ``prototypes`` is an iterable of ``(label, seq)`` with ``seq`` shaped
    ``(T, 24, 6)``. Returns the ``(D, F)`` encoder.
    """
    labels, feats = [], []
    for label, seq in prototypes:
        labels.append(class_id(label))
        feats.append(motion_features(np.asarray(seq, dtype=np.float64)))
    if len(set(labels)) < 2:
        raise CalibrationError("calibration needs prototypes from at least two classes")
    counts = np.bincount(labels, minlength=anchors.shape[0])
    if np.any(counts[np.unique(labels)] < 4):
        raise CalibrationError("calibration needs at least 4 prototypes per class")
    phi = np.stack(feats)              # (N, F)
    targets = anchors[labels]          # (N, D)
    gram = phi @ phi.T + ridge * np.eye(len(phi))
    try:
        coef = np.linalg.solve(gram, targets)
    except np.linalg.LinAlgError as exc:
        raise CalibrationError(f"ridge system is singular: {exc}") from None
    w = coef.T @ phi                   # (D, F)
    if not np.all(np.isfinite(w)):
        raise CalibrationError("calibrated encoder is not finite")
    return w
