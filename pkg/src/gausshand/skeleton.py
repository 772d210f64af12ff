"""Kinematic hand skeleton: topology, bone-length PCA space, forward kinematics.

Keypoint order is fixed: wrist = 0, then thumb, index, middle, ring, pinky,
each listed proximal to distal (thumb: CMC, MCP, IP, TIP; fingers: MCP,
PIP, DIP, TIP). Bone ``k`` ends at joint ``k + 1``.

Pose vector layout (26 entries)::

    0..19   articulation angles (rad), four per finger in finger order
    20..22  global rotation, intrinsic Z-Y-X Euler angles (rad)
    23..25  global translation of the wrist (mm, camera frame)

Every joint carries a local frame. A joint's world frame is its parent's
world frame, times its fixed rest rotation, times the rotations of its own
DOFs in listed order. A bone's rest direction is expressed in the frame of
its parent joint.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NonPositiveBoneLength, ValidationError

N_JOINTS = 21
N_BONES = 20
N_ARTIC = 20
N_POSE = 26
N_SHAPE = 20
N_PARAMS = N_POSE + N_SHAPE

GLOBAL_ROT = slice(20, 23)
GLOBAL_TRANS = slice(23, 26)

FINGERS = ("thumb", "index", "middle", "ring", "pinky")

# wrist + 5 fingertips: the keypoints that are cheap to annotate
LABELED_6 = (0, 4, 8, 12, 16, 20)
UNLABELED_15 = tuple(j for j in range(N_JOINTS) if j not in LABELED_6)


def finger_joints(f: int) -> tuple[int, int, int, int]:
    """Joint indices of finger ``f`` from base to tip."""
    return tuple(range(4 * f + 1, 4 * f + 5))


def rotation(axis, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix about a unit ``axis``."""
    x, y, z = axis
    c, s = np.cos(angle), np.sin(angle)
    C = 1.0 - c
    return np.array([
        [c + x * x * C, x * y * C - z * s, x * z * C + y * s],
        [y * x * C + z * s, c + y * y * C, y * z * C - x * s],
        [z * x * C - y * s, z * y * C + x * s, c + z * z * C],
    ])


def rot_x(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def euler_zyx(angles) -> np.ndarray:
    """Intrinsic Z-Y-X Euler angles to a rotation matrix (``Rz @ Ry @ Rx``)."""
    a, b, c = angles
    return rot_z(a) @ rot_y(b) @ rot_x(c)


def euler_zyx_from_matrix(R: np.ndarray) -> np.ndarray:
    """Inverse of :func:`euler_zyx` (principal branch, |pitch| <= pi/2)."""
    b = -np.arcsin(np.clip(R[2, 0], -1.0, 1.0))
    a = np.arctan2(R[1, 0], R[0, 0])
    c = np.arctan2(R[2, 1], R[2, 2])
    return np.array([a, b, c])


@dataclass(frozen=True, eq=False)
class SkeletonTopology:
    """Joint tree, bone rest directions and articulation DOF assignment.

    Attributes
    ----------
    joint_names : tuple of str
        21 names, index order as described in the module docstring.
    parents : ndarray, shape (21,)
        Parent joint index, -1 for the wrist.
    bone_dirs : ndarray, shape (20, 3)
        Unit rest direction of bone ``k`` (ending at joint ``k + 1``) in the
        frame of its parent joint.
    joint_rest : ndarray, shape (21, 3, 3)
        Fixed rest rotation of each joint frame relative to its parent.
    dof_joint : ndarray, shape (20,)
        Joint rotated by each articulation DOF.
    dof_axis : ndarray, shape (20, 3)
        Unit rotation axis of each DOF in the joint's local frame.
    """

    joint_names: tuple
    parents: np.ndarray
    bone_dirs: np.ndarray
    joint_rest: np.ndarray
    dof_joint: np.ndarray
    dof_axis: np.ndarray
    dof_names: tuple = ()
    # derived
    subtree: np.ndarray = field(init=False, repr=False)
    joint_dofs: tuple = field(init=False, repr=False)

    def __post_init__(self):
        parents = np.asarray(self.parents, dtype=int)
        if len(self.joint_names) != N_JOINTS or parents.shape != (N_JOINTS,):
            raise ValidationError("joints", f"expected {N_JOINTS} joints")
        roots = np.flatnonzero(parents < 0)
        if roots.tolist() != [0]:
            raise ValidationError("joints", "the wrist (index 0) must be the only root")
        # a parent must precede its child; this also rules out cycles
        for j in range(1, N_JOINTS):
            if not 0 <= parents[j] < j:
                raise ValidationError("joints", f"joint {j} has parent {parents[j]}, must be in [0, {j})")
        bone_dirs = np.asarray(self.bone_dirs, dtype=float)
        if bone_dirs.shape != (N_BONES, 3):
            raise ValidationError("bones", f"expected {N_BONES} bone directions")
        norms = np.linalg.norm(bone_dirs, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-6):
            raise ValidationError("bones", "rest directions must be unit vectors")
        rest = np.asarray(self.joint_rest, dtype=float)
        if rest.shape != (N_JOINTS, 3, 3):
            raise ValidationError("joint_rest", "expected one 3x3 rest rotation per joint")
        if np.abs(rest @ rest.transpose(0, 2, 1) - np.eye(3)).max() > 1e-6:
            raise ValidationError("joint_rest", "rest frames must be rotations")
        dof_joint = np.asarray(self.dof_joint, dtype=int)
        dof_axis = np.asarray(self.dof_axis, dtype=float)
        if dof_joint.shape != (N_ARTIC,) or dof_axis.shape != (N_ARTIC, 3):
            raise ValidationError("dofs", f"expected exactly {N_ARTIC} articulation DOFs")
        if np.any(dof_joint < 1) or np.any(dof_joint >= N_JOINTS):
            raise ValidationError("dofs", "a DOF references an invalid joint")
        if np.any(np.abs(np.linalg.norm(dof_axis, axis=1) - 1.0) > 1e-6):
            raise ValidationError("dofs", "DOF axes must be unit vectors")

        subtree = np.zeros((N_JOINTS, N_JOINTS), dtype=bool)
        for j in range(N_JOINTS - 1, -1, -1):
            subtree[j, j] = True
            for c in np.flatnonzero(parents == j):
                subtree[j] |= subtree[c]
        joint_dofs = tuple(tuple(np.flatnonzero(dof_joint == j)) for j in range(N_JOINTS))

        for name, value in [("parents", parents), ("bone_dirs", bone_dirs),
                            ("joint_rest", rest), ("dof_joint", dof_joint),
                            ("dof_axis", dof_axis), ("subtree", subtree)]:
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        object.__setattr__(self, "joint_names", tuple(self.joint_names))
        object.__setattr__(self, "joint_dofs", joint_dofs)

    @property
    def n_dof(self) -> int:
        return N_ARTIC + 6

    def bone_parent(self, k: int) -> int:
        return int(self.parents[k + 1])

    def bones(self) -> list[tuple[int, int]]:
        """(child, parent) joint pairs, one per bone."""
        return [(k + 1, int(self.parents[k + 1])) for k in range(N_BONES)]

    def finger_of_dof(self, i: int) -> int:
        return (int(self.dof_joint[i]) - 1) // 4


@dataclass(frozen=True, eq=False)
class BoneLengthModel:
    """Affine bone-length model ``b = b_avg + m_pca @ beta`` (lengths in mm)."""

    b_avg: np.ndarray
    m_pca: np.ndarray

    def __post_init__(self):
        b_avg = np.array(self.b_avg, dtype=float)
        m_pca = np.array(self.m_pca, dtype=float)
        if b_avg.shape != (N_BONES,):
            raise ValidationError("b_avg", f"expected {N_BONES} entries")
        if m_pca.shape != (N_BONES, N_SHAPE):
            raise ValidationError("m_pca", f"expected a {N_BONES}x{N_SHAPE} matrix")
        if not np.all(np.isfinite(b_avg)) or np.any(b_avg <= 0):
            raise ValidationError("b_avg", "average bone lengths must be finite and positive")
        if not np.all(np.isfinite(m_pca)):
            raise ValidationError("m_pca", "entries must be finite")
        b_avg.setflags(write=False)
        m_pca.setflags(write=False)
        object.__setattr__(self, "b_avg", b_avg)
        object.__setattr__(self, "m_pca", m_pca)


@dataclass(frozen=True, eq=False)
class JointLimitTable:
    """Per-DOF articulation bounds in radians. Global DOFs are unbounded."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.array(self.lo, dtype=float)
        hi = np.array(self.hi, dtype=float)
        if lo.shape != (N_ARTIC,) or hi.shape != (N_ARTIC,):
            raise ValidationError("joint_limits", f"expected {N_ARTIC} lower and upper bounds")
        if not np.all(lo < hi):
            bad = int(np.flatnonzero(~(lo < hi))[0])
            raise ValidationError("joint_limits", f"lo >= hi for DOF {bad}")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def contains(self, theta) -> bool:
        a = np.asarray(theta, dtype=float)[:N_ARTIC]
        return bool(np.all((a >= self.lo) & (a <= self.hi)))


def check_pose(theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (N_POSE,):
        raise ValueError(f"pose vector must have {N_POSE} entries, got shape {theta.shape}")
    if not np.all(np.isfinite(theta)):
        raise ValueError("pose vector contains non-finite values")
    return theta


def check_shape(beta) -> np.ndarray:
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (N_SHAPE,):
        raise ValueError(f"bone coefficient vector must have {N_SHAPE} entries, got shape {beta.shape}")
    if not np.all(np.isfinite(beta)):
        raise ValueError("bone coefficient vector contains non-finite values")
    return beta


def decode_bones(model: BoneLengthModel, beta) -> np.ndarray:
    """Bone lengths in mm for PCA coefficients ``beta``.

    Raises NonPositiveBoneLength when any decoded length is <= 0.
    """
    beta = check_shape(beta)
    b = model.b_avg + model.m_pca @ beta
    if np.any(b <= 0):
        bad = np.flatnonzero(b <= 0).tolist()
        raise NonPositiveBoneLength(f"bones {bad} decode to non-positive lengths")
    return b


@dataclass
class Kinematics:
    """Intermediate FK quantities shared by positions and the Jacobian."""

    positions: np.ndarray      # (21, 3)
    frames: np.ndarray         # (21, 3, 3) world frame of each joint
    dof_axes: np.ndarray       # (20, 3) world axis of each articulation DOF
    global_axes: np.ndarray    # (3, 3) world axes of the three Euler DOFs, rows
    bone_world: np.ndarray     # (20, 3) world unit direction of each bone


def kinematics(topo: SkeletonTopology, theta, bones) -> Kinematics:
    theta = check_pose(theta)
    bones = np.asarray(bones, dtype=float)
    if bones.shape != (N_BONES,):
        raise ValueError(f"expected {N_BONES} bone lengths")

    a, b, c = theta[GLOBAL_ROT]
    Rz, Ry, Rx = rot_z(a), rot_y(b), rot_x(c)
    Rzy = Rz @ Ry
    R_root = Rzy @ Rx
    global_axes = np.array([Rz[:, 2], Rzy[:, 1], R_root[:, 0]])

    positions = np.empty((N_JOINTS, 3))
    frames = np.empty((N_JOINTS, 3, 3))
    dof_axes = np.empty((N_ARTIC, 3))
    bone_world = np.empty((N_BONES, 3))

    positions[0] = theta[GLOBAL_TRANS]
    frames[0] = R_root @ topo.joint_rest[0]
    for j in range(1, N_JOINTS):
        p = topo.parents[j]
        Rp = frames[p]
        k = j - 1
        d = Rp @ topo.bone_dirs[k]
        bone_world[k] = d
        positions[j] = positions[p] + bones[k] * d
        R = Rp @ topo.joint_rest[j]
        for i in topo.joint_dofs[j]:
            axis_local = topo.dof_axis[i]
            dof_axes[i] = R @ axis_local
            R = R @ rotation(axis_local, theta[i])
        frames[j] = R
    return Kinematics(positions, frames, dof_axes, global_axes, bone_world)


def forward_kinematics(topo: SkeletonTopology, theta, bones) -> np.ndarray:
    """World positions (21, 3) in mm of all keypoints."""
    return kinematics(topo, theta, bones).positions


def fk_jacobian(topo: SkeletonTopology, theta, model: BoneLengthModel, beta,
                kin: Kinematics | None = None) -> np.ndarray:
    """Analytic Jacobian of the flattened joint positions, shape (63, 46).

    Rows are ``3 * joint + coord``; columns are the 26 pose entries followed
    by the 20 bone coefficients.
    """
    if kin is None:
        kin = kinematics(topo, theta, decode_bones(model, beta))
    P = kin.positions
    J = np.zeros((N_JOINTS, 3, N_PARAMS))

    for i in range(N_ARTIC):
        j = topo.dof_joint[i]
        below = topo.subtree[j].copy()
        below[j] = False
        J[below, :, i] = np.cross(kin.dof_axes[i], P[below] - P[j])

    rel = P - P[0]
    for r in range(3):
        J[:, :, 20 + r] = np.cross(kin.global_axes[r], rel)
    for r in range(3):
        J[:, r, 23 + r] = 1.0

    # d positions / d bone lengths, then chain through the PCA basis
    dP_db = np.zeros((N_JOINTS, 3, N_BONES))
    for k in range(N_BONES):
        dP_db[topo.subtree[k + 1], :, k] = kin.bone_world[k]
    J[:, :, N_POSE:] = dP_db @ model.m_pca
    return J.reshape(3 * N_JOINTS, N_PARAMS)
