"""Differentiable path from regressor outputs to joints and pixels.

These mirror :func:`stta.geometry.sixd_to_matrix`, :func:`~stta.geometry.fk_from_matrices`
and :func:`~stta.geometry.project` using tape operations. They stay total
during optimization: degenerate 6D columns get a 1e-9 jitter instead of an
error, and depth is floored at 1 cm before the perspective divide.
"""
from __future__ import annotations

import numpy as np

from . import geometry as geo
from . import tape as tp

JITTER = 1e-9
MIN_DEPTH = 1e-2


def sixd_to_matrix(r):
    """``(..., 6)`` -> rotation matrices ``(..., 3, 3)`` and orthonormal 6D ``(..., 6)``."""
    rv = tp.value(r)
    a1, a2 = r[..., 0:3], r[..., 3:6]
    tiny1 = np.sum(rv[..., 0:3] ** 2, axis=-1, keepdims=True) < JITTER**2
    if np.any(tiny1):
        a1 = a1 + tiny1 * np.array([JITTER, 0.0, 0.0])
    b1 = a1 / tp.sqrt(tp.sum(a1 * a1, axis=-1, keepdims=True))
    u2 = a2 - tp.sum(b1 * a2, axis=-1, keepdims=True) * b1
    u2v = tp.value(u2)
    tiny2 = np.sum(u2v**2, axis=-1, keepdims=True) < JITTER**2
    if np.any(tiny2):
        b1v = tp.value(b1)
        helper = np.eye(3)[np.argmin(np.abs(b1v), axis=-1)]
        perp = helper - np.sum(helper * b1v, axis=-1, keepdims=True) * b1v
        perp /= np.linalg.norm(perp, axis=-1, keepdims=True)
        u2 = u2 + tiny2 * JITTER * perp
    b2 = u2 / tp.sqrt(tp.sum(u2 * u2, axis=-1, keepdims=True))
    b3 = tp.cross(b1, b2)
    rot = tp.stack([b1, b2, b3], axis=-1)
    return rot, tp.concat([b1, b2], axis=-1)


def bone_scales(beta, skel: geo.Skeleton = geo.DEFAULT_SKELETON):
    """Per-joint bone scale ``(N, 24)`` from ``(N, 10)`` shape coefficients."""
    group = tp.clip(tp.exp(beta @ skel.shape_basis), geo.SCALE_MIN, geo.SCALE_MAX)
    n = tp.value(beta).shape[0]
    padded = tp.concat([np.ones((n, 1)), group], axis=-1)
    return padded[:, skel.bone_group + 1]


def forward_kinematics(rot, scales, trans, skel: geo.Skeleton = geo.DEFAULT_SKELETON):
    """Joints ``(N, 24, 3)`` from local rotations ``(N, 24, 3, 3)``."""
    n_joints = skel.joint_count
    glob = [None] * n_joints
    pos = [None] * n_joints
    for j in range(n_joints):
        p = skel.parent[j]
        local = rot[:, j]
        if p < 0:
            glob[j], pos[j] = local, trans
            continue
        bone = tp.reshape(scales[:, j:j + 1] * skel.rest_offset[j], (-1, 3, 1))
        pos[j] = pos[p] + tp.reshape(glob[p] @ bone, (-1, 3))
        if j in _HAS_CHILDREN:
            glob[j] = glob[p] @ local
    return tp.stack(pos, axis=1)


_HAS_CHILDREN = frozenset(int(p) for p in geo.PARENTS if p >= 0)


def project(j3d, cam: geo.Camera = geo.DEFAULT_CAMERA):
    z = tp.clip(j3d[..., 2:3], MIN_DEPTH, np.inf)
    return cam.focal * j3d[..., 0:2] / z + cam.center
