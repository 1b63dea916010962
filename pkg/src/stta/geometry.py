"""Rotations, skeletal forward kinematics, pinhole projection and Procrustes.

Everything here is plain numpy on value types. Arrays carry arbitrary leading
batch dimensions wherever that is cheap to support: an axis-angle batch is
``(..., 3)``, a 6D batch ``(..., 6)``, a rotation-matrix batch ``(..., 3, 3)``.

Coordinates are camera-frame meters with ``x`` right, ``y`` down and ``z``
along the optical axis, so a subject standing in front of the camera has its
head at smaller ``y`` than its feet.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import AlignmentDegenerateError, DegenerateRotationError, ProjectionDomainError

NUM_JOINTS = 24
NUM_BETAS = 10

JOINT_NAMES = (
    "pelvis", "left_hip", "right_hip", "spine1", "left_knee", "right_knee",
    "spine2", "left_ankle", "right_ankle", "spine3", "left_foot", "right_foot",
    "neck", "left_collar", "right_collar", "head", "left_shoulder",
    "right_shoulder", "left_elbow", "right_elbow", "left_wrist", "right_wrist",
    "left_hand", "right_hand",
)

PARENTS = np.array(
    [-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21],
    dtype=np.int64,
)

# bone vector from the parent joint at rest, 1.7 m figure, arms hanging
REST_OFFSETS = np.array([
    [0.000, 0.000, 0.000],    # pelvis
    [0.090, 0.080, 0.000],    # left_hip
    [-0.090, 0.080, 0.000],   # right_hip
    [0.000, -0.110, 0.000],   # spine1
    [0.000, 0.400, 0.000],    # left_knee
    [0.000, 0.400, 0.000],    # right_knee
    [0.000, -0.130, 0.000],   # spine2
    [0.000, 0.400, 0.000],    # left_ankle
    [0.000, 0.400, 0.000],    # right_ankle
    [0.000, -0.060, 0.000],   # spine3
    [0.000, 0.060, -0.120],   # left_foot
    [0.000, 0.060, -0.120],   # right_foot
    [0.000, -0.210, 0.000],   # neck
    [0.070, -0.120, 0.000],   # left_collar
    [-0.070, -0.120, 0.000],  # right_collar
    [0.000, -0.120, 0.000],   # head
    [0.110, 0.030, 0.000],    # left_shoulder
    [-0.110, 0.030, 0.000],   # right_shoulder
    [0.020, 0.260, 0.000],    # left_elbow
    [-0.020, 0.260, 0.000],   # right_elbow
    [0.000, 0.250, 0.000],    # left_wrist
    [0.000, 0.250, 0.000],    # right_wrist
    [0.000, 0.080, 0.000],    # left_hand
    [0.000, 0.080, 0.000],    # right_hand
])

# bone group of the bone ending at each joint (-1 for the root)
BONE_GROUPS = np.array(
    [-1, 0, 0, 1, 6, 6, 1, 7, 7, 1, 7, 7, 2, 3, 3, 2, 3, 3, 4, 4, 5, 5, 5, 5],
    dtype=np.int64,
)
NUM_BONE_GROUPS = 8

SCALE_MIN, SCALE_MAX = 0.5, 2.0
_SMALL_ANGLE = 1e-8


def _default_shape_basis() -> np.ndarray:
    # column l1 norm 0.22 keeps exp(basis @ beta) inside [0.5, 2] for beta in [-3, 3]^10
    rng = np.random.default_rng(7)
    basis = rng.normal(size=(NUM_BETAS, NUM_BONE_GROUPS))
    basis[0] = np.abs(basis[0]) * 2.0  # first coefficient acts as overall size
    return basis * (0.22 / np.abs(basis).sum(axis=0, keepdims=True))


@dataclass(frozen=True)
class Skeleton:
    parent: np.ndarray = field(default_factory=lambda: PARENTS.copy())
    rest_offset: np.ndarray = field(default_factory=lambda: REST_OFFSETS.copy())
    shape_basis: np.ndarray = field(default_factory=_default_shape_basis)
    bone_group: np.ndarray = field(default_factory=lambda: BONE_GROUPS.copy())

    @property
    def joint_count(self) -> int:
        return len(self.parent)

    def bone_scales(self, beta: np.ndarray) -> np.ndarray:
        """Per-joint length scale of the bone ending at each joint, ``(..., 24)``."""
        group_scale = np.clip(np.exp(np.asarray(beta) @ self.shape_basis), SCALE_MIN, SCALE_MAX)
        ones = np.ones(group_scale.shape[:-1] + (1,))
        padded = np.concatenate([ones, group_scale], axis=-1)
        return padded[..., self.bone_group + 1]


DEFAULT_SKELETON = Skeleton()


@dataclass
class Pose:
    theta: np.ndarray  # (24, 3) axis-angle per joint
    beta: np.ndarray   # (10,)
    trans: np.ndarray  # (3,) root position, camera frame

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=np.float64).reshape(NUM_JOINTS, 3)
        self.beta = np.asarray(self.beta, dtype=np.float64).reshape(NUM_BETAS)
        self.trans = np.asarray(self.trans, dtype=np.float64).reshape(3)


@dataclass(frozen=True)
class Camera:
    focal: float = 1000.0
    width: int = 224
    height: int = 224
    principal: tuple[float, float] | None = None

    @property
    def center(self) -> np.ndarray:
        if self.principal is None:
            return np.array([self.width / 2.0, self.height / 2.0])
        return np.asarray(self.principal, dtype=np.float64)


DEFAULT_CAMERA = Camera()


def skew(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1], out[..., 0, 2] = -v[..., 2], v[..., 1]
    out[..., 1, 0], out[..., 1, 2] = v[..., 2], -v[..., 0]
    out[..., 2, 0], out[..., 2, 1] = -v[..., 1], v[..., 0]
    return out


def aa_to_matrix(r: np.ndarray) -> np.ndarray:
    """Rodrigues' formula, with a second-order Taylor expansion near zero."""
    r = np.asarray(r, dtype=np.float64)
    angle = np.linalg.norm(r, axis=-1)[..., None, None]
    k = skew(r)
    k2 = k @ k
    eye = np.broadcast_to(np.eye(3), k.shape)
    small = angle < _SMALL_ANGLE
    safe = np.where(small, 1.0, angle)
    a = np.where(small, 1.0, np.sin(safe) / safe)
    b = np.where(small, 0.5, (1.0 - np.cos(safe)) / safe**2)
    return eye + a * k + b * k2


def matrix_to_aa(m: np.ndarray) -> np.ndarray:
    """Inverse of :func:`aa_to_matrix`; returned angles lie in ``[0, pi]``."""
    from scipy.spatial.transform import Rotation

    m = np.asarray(m, dtype=np.float64)
    flat = Rotation.from_matrix(m.reshape(-1, 3, 3)).as_rotvec()
    return flat.reshape(m.shape[:-2] + (3,))


def canonicalize_aa(r: np.ndarray) -> np.ndarray:
    """Same rotation with angle reduced into ``[0, pi]``."""
    return matrix_to_aa(aa_to_matrix(r))


def matrix_to_6d(m: np.ndarray) -> np.ndarray:
    """First two columns, flattened column-major: ``(c0, c1)``."""
    m = np.asarray(m, dtype=np.float64)
    return np.concatenate([m[..., :, 0], m[..., :, 1]], axis=-1)


def sixd_to_matrix(r: np.ndarray) -> np.ndarray:
    """Gram-Schmidt a 6D vector into a rotation matrix.

    Raises :class:`DegenerateRotationError` when either column is zero or the
    two columns are parallel.
    """
    r = np.asarray(r, dtype=np.float64)
    a1, a2 = r[..., :3], r[..., 3:6]
    n1 = np.linalg.norm(a1, axis=-1, keepdims=True)
    if np.any(n1 < 1e-12) or not np.all(np.isfinite(r)):
        raise DegenerateRotationError("6D rotation has a zero or non-finite first column")
    b1 = a1 / n1
    u2 = a2 - np.sum(b1 * a2, axis=-1, keepdims=True) * b1
    n2 = np.linalg.norm(u2, axis=-1, keepdims=True)
    if np.any(n2 <= 1e-10 * np.maximum(np.linalg.norm(a2, axis=-1, keepdims=True), 1e-2)):
        raise DegenerateRotationError("6D rotation columns are parallel or zero")
    b2 = u2 / n2
    b3 = np.cross(b1, b2)
    return np.stack([b1, b2, b3], axis=-1)


def orthonormalize_6d(r: np.ndarray) -> np.ndarray:
    return matrix_to_6d(sixd_to_matrix(r))


def aa_to_6d(r: np.ndarray) -> np.ndarray:
    return matrix_to_6d(aa_to_matrix(r))


def fk_from_matrices(rot: np.ndarray, scales: np.ndarray, trans: np.ndarray,
                     skel: Skeleton = DEFAULT_SKELETON) -> np.ndarray:
    """Joint positions from local rotations ``(..., 24, 3, 3)``.

    ``scales`` is the per-joint bone scale ``(..., 24)``; ``trans`` the root
    position ``(..., 3)``.
    """
    rot = np.asarray(rot, dtype=np.float64)
    n = skel.joint_count
    glob = [None] * n
    pos = [None] * n
    for j in range(n):
        p = skel.parent[j]
        if p < 0:
            glob[j] = rot[..., j, :, :]
            pos[j] = np.asarray(trans, dtype=np.float64)
            continue
        bone = scales[..., j, None] * skel.rest_offset[j]
        pos[j] = pos[p] + np.einsum("...ij,...j->...i", glob[p], bone)
        glob[j] = glob[p] @ rot[..., j, :, :]
    return np.stack(pos, axis=-2)


def forward_kinematics(pose: Pose, skel: Skeleton = DEFAULT_SKELETON) -> np.ndarray:
    """24x3 joint positions in the camera frame for a single pose."""
    rot = aa_to_matrix(pose.theta)
    return fk_from_matrices(rot, skel.bone_scales(pose.beta), pose.trans, skel)


def project(j3d: np.ndarray, cam: Camera = DEFAULT_CAMERA) -> np.ndarray:
    """Pinhole projection to pixels. Every joint must sit in front of the camera."""
    j3d = np.asarray(j3d, dtype=np.float64)
    z = j3d[..., 2:3]
    if np.any(~(z > 1e-3)):
        raise ProjectionDomainError("joint at or behind the camera plane (z <= 1e-3 m)")
    return cam.focal * j3d[..., :2] / z + cam.center


def procrustes_align(pred: np.ndarray, gt: np.ndarray):
    """Similarity transform ``(s, R, t)`` minimizing ``sum |s R pred_i + t - gt_i|^2``.

    Umeyama's closed form: centroids, cross-covariance SVD with a reflection
    fix, then the optimal scale.
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    mu_p, mu_g = pred.mean(axis=0), gt.mean(axis=0)
    x, y = pred - mu_p, gt - mu_g
    for pts in (x, y):
        sv = np.linalg.svd(pts, compute_uv=False)
        if len(sv) < 2 or sv[1] <= 1e-9 * max(sv[0], 1e-300):
            raise AlignmentDegenerateError("need at least 3 non-collinear joints")
    var_p = np.sum(x**2)
    u, s, vt = np.linalg.svd(y.T @ x)
    d = np.ones(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        d[-1] = -1.0
    rot = u @ np.diag(d) @ vt
    scale = np.sum(s * d) / var_p
    trans = mu_g - scale * rot @ mu_p
    return scale, rot, trans


def apply_similarity(points: np.ndarray, scale: float, rot: np.ndarray, trans: np.ndarray) -> np.ndarray:
    return scale * points @ rot.T + trans


def rot_x(a):
    a = np.asarray(a, dtype=np.float64)
    c, s = np.cos(a), np.sin(a)
    out = np.zeros(a.shape + (3, 3))
    out[..., 0, 0] = 1.0
    out[..., 1, 1], out[..., 1, 2] = c, -s
    out[..., 2, 1], out[..., 2, 2] = s, c
    return out


def rot_y(a):
    a = np.asarray(a, dtype=np.float64)
    c, s = np.cos(a), np.sin(a)
    out = np.zeros(a.shape + (3, 3))
    out[..., 1, 1] = 1.0
    out[..., 0, 0], out[..., 0, 2] = c, s
    out[..., 2, 0], out[..., 2, 2] = -s, c
    return out


def rot_z(a):
    a = np.asarray(a, dtype=np.float64)
    c, s = np.cos(a), np.sin(a)
    out = np.zeros(a.shape + (3, 3))
    out[..., 2, 2] = 1.0
    out[..., 0, 0], out[..., 0, 1] = c, -s
    out[..., 1, 0], out[..., 1, 1] = s, c
    return out
