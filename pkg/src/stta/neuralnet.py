"""Pose regressor, Adam, cosine schedule, pretraining and checkpoints.

The regressor is a 64-256-256-157 perceptron with tanh hidden units. Its 157
outputs split into 24 raw 6D rotations, 10 shape coefficients and a root
translation; the heads bound shape to ``|beta| < 5`` and keep the root at
least 0.5 m in front of the camera.
"""
from __future__ import annotations

import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import geometry as geo
from . import posepipe
from . import tape as tp
from .errors import (FormatError, PoisonedParametersError, ShapeMismatchError, STTAError,
                     UsageError)
from .fileio import atomic_write_bytes

log = logging.getLogger(__name__)

LAYER_DIMS = (64, 256, 256, 157)
THETA_DIM = geo.NUM_JOINTS * 6
BETA_BOUND = 5.0
XY_BOUND = 3.0
MIN_DEPTH = 0.5

ADAM_BETA1 = 0.5
ADAM_BETA2 = 0.9
ADAM_EPS = 1e-8
BASE_LR = 5e-5
MIN_LR = 1e-6


@dataclass
class RegressorParams:
    weights: list  # (in, out) per layer
    biases: list   # (out,) per layer

    def arrays(self) -> list[np.ndarray]:
        return [a for pair in zip(self.weights, self.biases) for a in pair]

    @classmethod
    def from_arrays(cls, arrays) -> RegressorParams:
        arrays = list(arrays)
        return cls(arrays[0::2], arrays[1::2])

    def copy(self) -> RegressorParams:
        return RegressorParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.weights[0].shape[0],) + tuple(w.shape[1] for w in self.weights)

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())


def init_params(seed: int, dims=LAYER_DIMS) -> RegressorParams:
    rng = np.random.default_rng(seed)
    ws, bs = [], []
    for n_in, n_out in zip(dims[:-1], dims[1:]):
        ws.append(rng.normal(0.0, 1.0 / math.sqrt(n_in), size=(n_in, n_out)))
        bs.append(np.zeros(n_out))
    return RegressorParams(ws, bs)


def zero_params(dims=LAYER_DIMS) -> RegressorParams:
    return RegressorParams([np.zeros((a, b)) for a, b in zip(dims[:-1], dims[1:])],
                           [np.zeros(b) for b in dims[1:]])


def mlp(weights, biases, obs):
    """Raw 157-dim output; ``weights``/``biases`` may be arrays or tape vars."""
    h = obs
    last = len(weights) - 1
    for i, (w, b) in enumerate(zip(weights, biases)):
        h = h @ w + b
        if i < last:
            h = tp.tanh(h)
    return h


def heads(raw):
    """Split raw outputs into ``(theta6d (N, 24, 6), beta (N, 10), trans (N, 3))``."""
    n = tp.value(raw).shape[0]
    theta6d = tp.reshape(raw[:, :THETA_DIM], (n, geo.NUM_JOINTS, 6))
    beta = BETA_BOUND * tp.tanh(raw[:, THETA_DIM:THETA_DIM + 10] / BETA_BOUND)
    xy = XY_BOUND * tp.tanh(raw[:, THETA_DIM + 10:THETA_DIM + 12] / XY_BOUND)
    z = tp.softplus(raw[:, THETA_DIM + 12:THETA_DIM + 13]) + MIN_DEPTH
    return theta6d, beta, tp.concat([xy, z], axis=-1)


def _check_params(params: RegressorParams) -> None:
    if not params.is_finite():
        raise PoisonedParametersError("regressor parameters contain NaN or inf")


def forward(params: RegressorParams, obs: np.ndarray):
    """Head outputs for ``(N, 64)`` (or a single ``(64,)``) observations."""
    _check_params(params)
    obs = np.asarray(obs, dtype=np.float64)
    single = obs.ndim == 1
    out = heads(mlp(params.weights, params.biases, np.atleast_2d(obs)))
    if single:
        return tuple(o[0] for o in out)
    return out


@dataclass
class Prediction:
    """Regressor outputs pushed through kinematics and projection.

    Fields hold tape vars when produced under a tape, arrays otherwise.
    """
    theta6d_raw: object
    theta6d: object   # orthonormalized
    rot: object
    beta: object
    trans: object
    j3d: object
    j2d: object

    def values(self) -> Prediction:
        return Prediction(*(tp.value(getattr(self, f)) for f in self.__dataclass_fields__))


def predict(weights, biases, obs, skel: geo.Skeleton = geo.DEFAULT_SKELETON,
            cam: geo.Camera = geo.DEFAULT_CAMERA) -> Prediction:
    raw6, beta, trans = heads(mlp(weights, biases, obs))
    rot, six = posepipe.sixd_to_matrix(raw6)
    j3d = posepipe.forward_kinematics(rot, posepipe.bone_scales(beta, skel), trans, skel)
    return Prediction(raw6, six, rot, beta, trans, j3d, posepipe.project(j3d, cam))


def predict_arrays(params: RegressorParams, obs, chunk: int = 4096, **kw) -> Prediction:
    """Gradient-free prediction for all rows of ``obs``."""
    _check_params(params)
    parts = [predict(params.weights, params.biases, obs[i:i + chunk], **kw)
             for i in range(0, len(obs), chunk)]
    return Prediction(*(np.concatenate([getattr(p, f) for p in parts])
                        for f in Prediction.__dataclass_fields__))


def watch(t: tp.GradientTape, params: RegressorParams):
    return [t.watch(w) for w in params.weights], [t.watch(b) for b in params.biases]


def backward(t: tp.GradientTape, loss, weight_vars, bias_vars) -> list[np.ndarray]:
    """Gradients of a scalar ``loss`` w.r.t. every parameter, in ``arrays()`` order.

    Parameters the loss does not depend on get exact zeros.
    """
    if not isinstance(loss, tp.Var):
        raise UsageError("loss was not recorded on a tape")
    t.backward(loss)
    out = []
    for w, b in zip(weight_vars, bias_vars):
        out.append(np.zeros_like(w.value) if w.grad is None else w.grad)
        out.append(np.zeros_like(b.value) if b.grad is None else b.grad)
    return out


@dataclass
class AdamState:
    m: list
    v: list
    step: int = 0
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS

    @classmethod
    def zeros_like(cls, arrays, **kw) -> AdamState:
        return cls([np.zeros_like(a) for a in arrays], [np.zeros_like(a) for a in arrays], **kw)


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState,
              lr: float) -> list[np.ndarray]:
    """Bias-corrected Adam; updates ``state`` in place and returns new params."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeMismatchError("params, grads and Adam moments differ in length")
    for p, g, m in zip(params, grads, state.m):
        if p.shape != g.shape or p.shape != m.shape:
            raise ShapeMismatchError(f"shape mismatch {p.shape} / {g.shape} / {m.shape}")
    state.step += 1
    c1 = 1.0 - state.beta1**state.step
    c2 = 1.0 - state.beta2**state.step
    out = []
    for i, (p, g) in enumerate(zip(params, grads)):
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g
        out.append(p - lr * (state.m[i] / c1) / (np.sqrt(state.v[i] / c2) + state.eps))
    return out


@dataclass(frozen=True)
class LRSchedule:
    total_steps: int
    base_lr: float = BASE_LR
    min_lr: float = MIN_LR


def cosine_lr(step: int, sched: LRSchedule) -> float:
    if not 0 <= step <= sched.total_steps:
        raise STTAError(f"step {step} outside [0, {sched.total_steps}]")
    if sched.total_steps == 0:
        return sched.base_lr
    frac = step / sched.total_steps
    return sched.min_lr + 0.5 * (sched.base_lr - sched.min_lr) * (1.0 + math.cos(math.pi * frac))


# --------------------------------------------------------------------------- pretraining

@dataclass
class PretrainConfig:
    epochs: int = 40
    batch: int = 64
    lr: float = 1e-3
    min_lr: float = 1e-5
    seed: int = 0


@dataclass
class PretrainResult:
    params: RegressorParams
    curve: list = field(default_factory=list)  # (epoch, full-data loss) incl. epoch 0


def supervised_targets(videos) -> tuple[np.ndarray, np.ndarray]:
    """Stack observations and the ``(theta6d, beta, trans)`` regression targets."""
    obs = np.concatenate([v.obs for v in videos])
    tgt = np.concatenate([
        np.concatenate([v.theta6d.reshape(len(v), -1), v.beta, v.trans], axis=1) for v in videos
    ])
    return obs, tgt


def _supervised_loss(weights, biases, obs, tgt):
    raw6, beta, trans = heads(mlp(weights, biases, obs))
    n = tp.value(raw6).shape[0]
    out = tp.concat([tp.reshape(raw6, (n, THETA_DIM)), beta, trans], axis=-1)
    return tp.mean(tp.abs(out - tgt))


def supervised_loss(params: RegressorParams, obs, tgt) -> float:
    return float(_supervised_loss(params.weights, params.biases, obs, tgt))


def _inverse_heads(tgt: np.ndarray) -> np.ndarray:
    mu = tgt.mean(axis=0)
    out = mu.copy()
    out[THETA_DIM:THETA_DIM + 10] = BETA_BOUND * np.arctanh(np.clip(mu[THETA_DIM:THETA_DIM + 10] / BETA_BOUND, -0.99, 0.99))
    out[THETA_DIM + 10:THETA_DIM + 12] = XY_BOUND * np.arctanh(np.clip(mu[THETA_DIM + 10:THETA_DIM + 12] / XY_BOUND, -0.99, 0.99))
    z = max(mu[THETA_DIM + 12] - MIN_DEPTH, 1e-3)
    out[THETA_DIM + 12] = z + math.log(-math.expm1(-z))  # softplus inverse
    return out


def pretrain(params: RegressorParams | None, source_videos, cfg: PretrainConfig = PretrainConfig()) -> PretrainResult:
    """L1 regression of head outputs onto ground-truth pose parameters.

    When ``params`` is None the network is initialized from ``cfg.seed`` with
    output biases set to the inverse-head of the target mean.
    """
    if not source_videos:
        raise STTAError("pretraining needs a non-empty source dataset")
    obs, tgt = supervised_targets(source_videos)
    if params is None:
        params = init_params(cfg.seed)
        params.biases[-1] = _inverse_heads(tgt)
    params = params.copy()
    rng = np.random.default_rng(cfg.seed)
    n = len(obs)
    steps_per_epoch = math.ceil(n / cfg.batch)
    sched = LRSchedule(cfg.epochs * steps_per_epoch, cfg.lr, cfg.min_lr)
    state = AdamState.zeros_like(params.arrays(), beta1=0.9, beta2=0.999)
    arrays = params.arrays()
    curve = [(0, supervised_loss(params, obs, tgt))]
    step = 0
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        for s in range(steps_per_epoch):
            idx = order[s * cfg.batch:(s + 1) * cfg.batch]
            t = tp.GradientTape()
            wv, bv = watch(t, RegressorParams.from_arrays(arrays))
            loss = _supervised_loss(wv, bv, obs[idx], tgt[idx])
            grads = backward(t, loss, wv, bv)
            arrays = adam_step(arrays, grads, state, cosine_lr(step, sched))
            step += 1
        params = RegressorParams.from_arrays(arrays)
        curve.append((epoch, supervised_loss(params, obs, tgt)))
        log.info("pretrain epoch %d loss %.6f", epoch, curve[-1][1])
    return PretrainResult(params, curve)


# --------------------------------------------------------------------------- checkpoints

_CKP_MAGIC = b"STTA-CKP"
_CKP_VERSION = 1


def checkpoint_bytes(params: RegressorParams) -> bytes:
    dims = params.dims
    out = [_CKP_MAGIC, struct.pack("<II", _CKP_VERSION, len(dims)), struct.pack(f"<{len(dims)}I", *dims)]
    for w, b in zip(params.weights, params.biases):
        out.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
        out.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    return b"".join(out)


def params_from_bytes(data: bytes) -> RegressorParams:
    if data[:8] != _CKP_MAGIC:
        raise FormatError("not a checkpoint file (bad magic)")
    if len(data) < 16:
        raise FormatError("checkpoint header truncated")
    version, n_dims = struct.unpack_from("<II", data, 8)
    if version != _CKP_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    if n_dims < 2 or len(data) < 16 + 4 * n_dims:
        raise FormatError("checkpoint layer table truncated")
    dims = struct.unpack_from(f"<{n_dims}I", data, 16)
    off = 16 + 4 * n_dims
    expected = off + 8 * sum(a * b + b for a, b in zip(dims[:-1], dims[1:]))
    if expected != len(data):
        raise FormatError(f"checkpoint has {len(data)} bytes, its layer dims need {expected}")
    ws, bs = [], []
    for a, b in zip(dims[:-1], dims[1:]):
        ws.append(np.frombuffer(data, "<f8", a * b, off).reshape(a, b).astype(np.float64))
        off += 8 * a * b
        bs.append(np.frombuffer(data, "<f8", b, off).astype(np.float64))
        off += 8 * b
    return RegressorParams(ws, bs)


def save_checkpoint(path, params: RegressorParams) -> None:
    atomic_write_bytes(path, checkpoint_bytes(params))


def load_checkpoint(path) -> RegressorParams:
    return params_from_bytes(Path(path).read_bytes())
