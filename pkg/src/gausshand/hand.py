"""The complete hand model: skeleton, bone-length model, limits and blobs.

Skeleton definition files are JSON documents with these sections (lengths in
mm, angles in degrees)::

    joints            21 x {"name", "parent"}  (parent null for the wrist)
    bones             20 x {"child", "parent", "direction"}
                      direction is a unit 3-vector in the parent joint frame
    joint_frames      optional {"joint", "rest_euler_zxy_deg": [z, x, y]};
                      rest rotation Rz @ Rx @ Ry relative to the parent frame
    dofs              20 x {"name", "joint", "axis"}, in pose-vector order;
                      a joint's DOFs are applied in listed order
    bone_model        {"b_avg": 20 lengths, and either "m_pca": 20x20 rows
                      or "m_pca_diag": 20 per-bone standard deviations}
    joint_limits_deg  {"lo": 20, "hi": 20}
    blobs             N x {"bone_index", "t", "sigma_mm"}

The default model ships as ``data/default_hand.json``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np

from .errors import ValidationError
from .gauss import Blob3D, BlobLayout
from .skeleton import (
    N_ARTIC,
    N_BONES,
    N_JOINTS,
    BoneLengthModel,
    JointLimitTable,
    SkeletonTopology,
    rot_x,
    rot_y,
    rot_z,
)

DEFAULT_SKELETON = "default_hand.json"


@dataclass(frozen=True, eq=False)
class HandModel:
    topology: SkeletonTopology
    bone_model: BoneLengthModel
    limits: JointLimitTable
    layout: BlobLayout

    @property
    def blobs(self):
        return self.layout.blobs


def _get(doc, key, where="skeleton"):
    try:
        return doc[key]
    except (KeyError, TypeError):
        raise ValidationError(f"{where}.{key}", "missing") from None


def hand_model_from_dict(doc: dict) -> HandModel:
    """Build and validate a :class:`HandModel` from a parsed skeleton document."""
    joints = _get(doc, "joints")
    if not isinstance(joints, list) or len(joints) != N_JOINTS:
        raise ValidationError("joints", f"expected a list of {N_JOINTS} joints")
    names = [str(_get(j, "name", f"joints[{i}]")) for i, j in enumerate(joints)]
    parents = [-1 if j.get("parent") is None else int(j["parent"]) for j in joints]

    bones = _get(doc, "bones")
    if not isinstance(bones, list) or len(bones) != N_BONES:
        raise ValidationError("bones", f"expected a list of {N_BONES} bones")
    dirs = np.zeros((N_BONES, 3))
    for i, b in enumerate(bones):
        child = int(_get(b, "child", f"bones[{i}]"))
        if child != i + 1:
            raise ValidationError(f"bones[{i}].child", f"bone {i} must end at joint {i + 1}")
        if int(_get(b, "parent", f"bones[{i}]")) != parents[child]:
            raise ValidationError(f"bones[{i}].parent", "disagrees with the joint list")
        d = np.asarray(_get(b, "direction", f"bones[{i}]"), dtype=float)
        n = np.linalg.norm(d)
        if d.shape != (3,) or not n > 0:
            raise ValidationError(f"bones[{i}].direction", "must be a nonzero 3-vector")
        dirs[i] = d / n

    rest = np.repeat(np.eye(3)[None], N_JOINTS, axis=0)
    for i, jf in enumerate(doc.get("joint_frames", [])):
        j = int(_get(jf, "joint", f"joint_frames[{i}]"))
        if not 0 <= j < N_JOINTS:
            raise ValidationError(f"joint_frames[{i}].joint", f"{j} is not a joint index")
        z, x, y = np.radians(_get(jf, "rest_euler_zxy_deg", f"joint_frames[{i}]"))
        rest[j] = rot_z(z) @ rot_x(x) @ rot_y(y)

    dofs = _get(doc, "dofs")
    if not isinstance(dofs, list) or len(dofs) != N_ARTIC:
        raise ValidationError("dofs", f"expected {N_ARTIC} articulation DOFs")
    dof_joint = [int(_get(d, "joint", f"dofs[{i}]")) for i, d in enumerate(dofs)]
    dof_axis = np.array([_get(d, "axis", f"dofs[{i}]") for i, d in enumerate(dofs)], dtype=float)
    dof_axis /= np.linalg.norm(dof_axis, axis=1, keepdims=True)
    dof_names = tuple(d.get("name", f"dof{i}") for i, d in enumerate(dofs))

    topo = SkeletonTopology(tuple(names), np.array(parents), dirs, rest,
                            np.array(dof_joint), dof_axis, dof_names)

    bm = _get(doc, "bone_model")
    b_avg = _get(bm, "b_avg", "bone_model")
    if "m_pca" in bm:
        m_pca = np.asarray(bm["m_pca"], dtype=float)
    elif "m_pca_diag" in bm:
        diag = np.asarray(bm["m_pca_diag"], dtype=float)
        if diag.shape != (N_BONES,):
            raise ValidationError("bone_model.m_pca_diag", f"expected {N_BONES} entries")
        m_pca = np.diag(diag)
    else:
        raise ValidationError("bone_model.m_pca", "missing (give m_pca or m_pca_diag)")
    bone_model = BoneLengthModel(b_avg, m_pca)

    lim = _get(doc, "joint_limits_deg")
    limits = JointLimitTable(np.radians(_get(lim, "lo", "joint_limits_deg")),
                             np.radians(_get(lim, "hi", "joint_limits_deg")))

    blobs = [Blob3D(int(_get(b, "bone_index", f"blobs[{i}]")),
                    float(_get(b, "t", f"blobs[{i}]")),
                    float(_get(b, "sigma_mm", f"blobs[{i}]")))
             for i, b in enumerate(_get(doc, "blobs"))]
    return HandModel(topo, bone_model, limits, BlobLayout(blobs, topo))


def default_skeleton_text() -> str:
    return resources.files("gausshand").joinpath("data", DEFAULT_SKELETON).read_text()


@lru_cache(maxsize=1)
def default_hand_model() -> HandModel:
    return hand_model_from_dict(json.loads(default_skeleton_text()))
