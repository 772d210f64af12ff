"""Volumetric Gaussian hand surface and its projection to image Gaussians.

Each blob is an isotropic, unit-peak 3D Gaussian attached to a bone at a
fixed fraction ``t`` of the way from the bone's parent joint to its child
joint. Projection maps a blob to a 2D image Gaussian plus a depth value:

    mu_p    = (fx * x / z + cx, fy * y / z + cy)
    sigma_p = (fx + fy) / 2 * sigma_h / z
    z_p     = z - sigma_h          (camera-facing surface of the 1-sigma sphere)

Pixel coordinates put pixel ``(row, col)`` at image point ``(u=col, v=row)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BehindCamera, ValidationError
from .skeleton import (
    N_BONES,
    BoneLengthModel,
    Kinematics,
    SkeletonTopology,
    decode_bones,
    fk_jacobian,
    kinematics,
)


@dataclass(frozen=True)
class Blob3D:
    bone_index: int
    t: float
    sigma_h: float

    def __post_init__(self):
        if not 0 <= self.bone_index < N_BONES:
            raise ValidationError("bone_index", f"{self.bone_index} is not a bone index")
        if not 0.0 <= self.t <= 1.0:
            raise ValidationError("t", f"{self.t} outside [0, 1]")
        if not self.sigma_h > 0:
            raise ValidationError("sigma_mm", f"{self.sigma_h} must be positive")


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        for name in ("fx", "fy"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValidationError(name, f"focal length must be positive, got {v}")
        for name in ("cx", "cy"):
            if not np.isfinite(getattr(self, name)):
                raise ValidationError(name, "principal point must be finite")

    @property
    def f_mean(self) -> float:
        return 0.5 * (self.fx + self.fy)

    def project(self, points) -> np.ndarray:
        """Project (..., 3) camera-frame points to (..., 2) pixel coordinates."""
        p = np.asarray(points, dtype=float)
        z = p[..., 2]
        if np.any(z <= 0):
            raise BehindCamera("point at or behind the camera plane")
        return np.stack([self.fx * p[..., 0] / z + self.cx,
                         self.fy * p[..., 1] / z + self.cy], axis=-1)

    def unproject(self, uv, z) -> np.ndarray:
        """Camera-frame points at depth ``z`` under pixel coordinates ``uv``."""
        uv = np.asarray(uv, dtype=float)
        z = np.asarray(z, dtype=float)
        x = (uv[..., 0] - self.cx) / self.fx * z
        y = (uv[..., 1] - self.cy) / self.fy * z
        return np.stack([x, y, np.broadcast_to(z, x.shape)], axis=-1)

    def ray(self, uv) -> np.ndarray:
        """Unit viewing ray(s) through pixel coordinates ``uv``."""
        d = self.unproject(uv, 1.0)
        return d / np.linalg.norm(d, axis=-1, keepdims=True)


@dataclass(frozen=True)
class ProjectedBlob:
    mu_p: tuple
    sigma_p: float
    z_p: float
    source: int


class BlobLayout:
    """The model's blobs as parallel arrays, plus the blob pairs kept for collision."""

    def __init__(self, blobs, topo: SkeletonTopology):
        self.blobs = tuple(blobs)
        if not self.blobs:
            raise ValidationError("blobs", "the model needs at least one blob")
        self.bone = np.array([b.bone_index for b in self.blobs], dtype=int)
        self.t = np.array([b.t for b in self.blobs], dtype=float)
        self.sigma = np.array([b.sigma_h for b in self.blobs], dtype=float)
        self.child = self.bone + 1
        self.parent = topo.parents[self.child]
        self.pairs = collision_pairs(topo, self.bone)
        for a in (self.bone, self.t, self.sigma, self.child, self.parent, self.pairs):
            a.setflags(write=False)

    def __len__(self):
        return len(self.blobs)

    def centers(self, positions: np.ndarray) -> np.ndarray:
        """Blob centers (N, 3) from FK joint positions (21, 3)."""
        t = self.t[:, None]
        return (1.0 - t) * positions[self.parent] + t * positions[self.child]

    def center_jacobian(self, J_fk: np.ndarray) -> np.ndarray:
        """d(centers)/d(params), shape (N, 3, 46), from the (63, 46) FK Jacobian."""
        J = J_fk.reshape(-1, 3, J_fk.shape[-1])
        t = self.t[:, None, None]
        return (1.0 - t) * J[self.parent] + t * J[self.child]


def bones_adjacent(topo: SkeletonTopology, k1: int, k2: int) -> bool:
    """True if two bones share a joint."""
    ends1 = {k1 + 1, int(topo.parents[k1 + 1])}
    ends2 = {k2 + 1, int(topo.parents[k2 + 1])}
    return bool(ends1 & ends2)


def collision_pairs(topo: SkeletonTopology, bone_of_blob) -> np.ndarray:
    """Unordered blob pairs (j < k) that take part in the collision term.

    Pairs on the same bone or on bones sharing a joint are left out: those
    overlap at rest by construction.
    """
    bone_of_blob = np.asarray(bone_of_blob)
    pairs = []
    n = len(bone_of_blob)
    for j in range(n):
        for k in range(j + 1, n):
            if not bones_adjacent(topo, int(bone_of_blob[j]), int(bone_of_blob[k])):
                pairs.append((j, k))
    return np.array(pairs, dtype=int).reshape(-1, 2)


def place_blobs(topo: SkeletonTopology, theta, bones, blobs) -> list[tuple[np.ndarray, float]]:
    """3D center (mm) and sigma (mm) of every blob for the given pose."""
    P = kinematics(topo, theta, bones).positions
    out = []
    for b in blobs:
        child = b.bone_index + 1
        parent = topo.parents[child]
        center = (1.0 - b.t) * P[parent] + b.t * P[child]
        out.append((center, b.sigma_h))
    return out


def project_blob(cam: CameraIntrinsics, center3d, sigma_h: float, source: int = -1) -> ProjectedBlob:
    x, y, z = (float(v) for v in center3d)
    if z <= 0:
        raise BehindCamera(f"blob center at z = {z} mm")
    mu = (cam.fx * x / z + cam.cx, cam.fy * y / z + cam.cy)
    return ProjectedBlob(mu, cam.f_mean * sigma_h / z, z - sigma_h, source)


def project_blobs(cam: CameraIntrinsics, centers: np.ndarray, sigmas: np.ndarray):
    """Vectorized projection; returns ``(mu (N, 2), sigma_p (N,), z_p (N,))``."""
    z = centers[:, 2]
    if np.any(z <= 0):
        raise BehindCamera(f"blob {int(np.argmin(z))} at or behind the camera plane")
    mu = np.empty((len(z), 2))
    mu[:, 0] = cam.fx * centers[:, 0] / z + cam.cx
    mu[:, 1] = cam.fy * centers[:, 1] / z + cam.cy
    return mu, cam.f_mean * sigmas / z, z - sigmas


def projection_jacobian(cam: CameraIntrinsics, centers: np.ndarray, sigmas: np.ndarray) -> np.ndarray:
    """d(u, v, sigma_p, z_p)/d(x, y, z) per blob, shape (N, 4, 3)."""
    x, y, z = centers[:, 0], centers[:, 1], centers[:, 2]
    iz = 1.0 / z
    D = np.zeros((len(z), 4, 3))
    D[:, 0, 0] = cam.fx * iz
    D[:, 0, 2] = -cam.fx * x * iz * iz
    D[:, 1, 1] = cam.fy * iz
    D[:, 1, 2] = -cam.fy * y * iz * iz
    D[:, 2, 2] = -cam.f_mean * sigmas * iz * iz
    D[:, 3, 2] = 1.0
    return D


def blob_pairs_jacobian(topo: SkeletonTopology, theta, model: BoneLengthModel, beta,
                        layout: BlobLayout, cam: CameraIntrinsics,
                        kin: Kinematics | None = None) -> np.ndarray:
    """Jacobian of every projected blob's (u, v, sigma_p, z_p) w.r.t. (theta, beta).

    Shape (N, 4, 46), by the chain rule through blob placement and FK.
    """
    if kin is None:
        kin = kinematics(topo, theta, decode_bones(model, beta))
    J_fk = fk_jacobian(topo, theta, model, beta, kin=kin)
    centers = layout.centers(kin.positions)
    D = projection_jacobian(cam, centers, layout.sigma)
    return np.einsum("nij,njp->nip", D, layout.center_jacobian(J_fk))

