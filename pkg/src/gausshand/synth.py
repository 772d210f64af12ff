"""Synthetic depth rendering of the Gaussian hand model.

Each blob is drawn as a sphere of radius ``iso_level * sigma_h`` around its
center; every pixel takes the depth of the nearest ray-sphere hit.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .depth import DepthFrame, preprocess
from .errors import BehindCamera, ValidationError
from .gauss import CameraIntrinsics
from .hand import HandModel
from .skeleton import check_pose, check_shape, decode_bones, kinematics

# 640x480 sensor with a ~68 degree horizontal field of view
DEFAULT_CAMERA = CameraIntrinsics(475.0, 475.0, 319.5, 239.5)
DEFAULT_SIZE = (640, 480)


@dataclass(frozen=True)
class RenderSpec:
    cam: CameraIntrinsics = DEFAULT_CAMERA
    width: int = DEFAULT_SIZE[0]
    height: int = DEFAULT_SIZE[1]
    background: float = 0.0
    iso_level: float = 1.0
    noise_mm: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValidationError("image size", "must be at least 1x1")
        if not self.iso_level > 0:
            raise ValidationError("iso_level", "must be positive")
        if self.noise_mm < 0:
            raise ValidationError("noise_mm", "must be nonnegative")


@dataclass(frozen=True, eq=False)
class Rendering:
    depth: np.ndarray     # (height, width) mm, background where no hit
    valid: np.ndarray     # (height, width) bool
    joints: np.ndarray    # (21, 3) ground-truth keypoints, mm
    theta: np.ndarray
    beta: np.ndarray


def ray_sphere_depth(cam: CameraIntrinsics, uv, center, radius) -> np.ndarray:
    """Depth of the first hit of pixel rays with one sphere; inf where missed.

    The ray through ``(u, v)`` is ``s * d`` with ``d = ((u-cx)/fx, (v-cy)/fy, 1)``,
    so the ray parameter at a hit is its depth.
    """
    uv = np.asarray(uv, dtype=float)
    dx = (uv[..., 0] - cam.cx) / cam.fx
    dy = (uv[..., 1] - cam.cy) / cam.fy
    cx, cy, cz = center
    a = dx * dx + dy * dy + 1.0
    b = dx * cx + dy * cy + cz
    cc = cx * cx + cy * cy + cz * cz - radius * radius
    disc = b * b - a * cc
    hit = disc >= 0
    root = np.sqrt(np.where(hit, disc, 0.0))
    s = (b - root) / a
    # camera inside the sphere: take the exit point
    s = np.where(s > 0, s, (b + root) / a)
    return np.where(hit & (s > 0), s, np.inf)


def render_centers(centers: np.ndarray, radii: np.ndarray, spec: RenderSpec) -> np.ndarray:
    """Nearest-hit depth image of a set of spheres; ``inf`` marks background."""
    if len(centers) and np.any(centers[:, 2] <= 0):
        raise BehindCamera("a blob center lies at or behind the camera plane")
    depth = np.full((spec.height, spec.width), np.inf)
    cam = spec.cam
    for c, r in zip(centers, radii):
        if c[2] - r <= 0:
            cols = np.arange(spec.width)
            rows = np.arange(spec.height)
        else:
            # the sphere's image lies inside the image of its bounding cube
            zs = np.array([c[2] - r, c[2] + r])
            us = cam.fx * np.array([c[0] - r, c[0] + r])[:, None] / zs + cam.cx
            vs = cam.fy * np.array([c[1] - r, c[1] + r])[:, None] / zs + cam.cy
            cols = np.arange(max(int(np.floor(us.min())), 0), min(int(np.ceil(us.max())) + 1, spec.width))
            rows = np.arange(max(int(np.floor(vs.min())), 0), min(int(np.ceil(vs.max())) + 1, spec.height))
        if len(cols) == 0 or len(rows) == 0:
            continue
        uu, vv = np.meshgrid(cols.astype(float), rows.astype(float))
        d = ray_sphere_depth(cam, np.stack([uu, vv], axis=-1), c, r)
        block = depth[rows[0]:rows[-1] + 1, cols[0]:cols[-1] + 1]
        np.minimum(block, d, out=block)
    return depth


def render_depth(model: HandModel, theta, beta, spec: RenderSpec = RenderSpec()) -> Rendering:
    """Render the hand at pose ``theta`` and shape ``beta``."""
    theta = check_pose(theta)
    beta = check_shape(beta)
    kin = kinematics(model.topology, theta, decode_bones(model.bone_model, beta))
    centers = model.layout.centers(kin.positions)
    depth = render_centers(centers, spec.iso_level * model.layout.sigma, spec)
    valid = np.isfinite(depth)
    if spec.noise_mm > 0:
        rng = np.random.default_rng(spec.seed)
        depth[valid] += rng.normal(0.0, spec.noise_mm, size=int(valid.sum()))
    depth[~valid] = spec.background
    return Rendering(depth, valid, kin.positions.copy(), theta.copy(), beta.copy())


def hand_center(joints: np.ndarray) -> np.ndarray:
    """Crop center used for synthetic frames: the centroid of the keypoints."""
    return np.asarray(joints, dtype=float).mean(axis=0)


def synthetic_frame(model: HandModel, theta, beta, spec: RenderSpec = RenderSpec(),
                    crop_side: float = 300.0, size: int = 128) -> tuple[DepthFrame, Rendering]:
    """Render, then crop and resample around the ground-truth keypoint centroid."""
    r = render_depth(model, theta, beta, spec)
    raw = np.where(r.valid, r.depth, 0.0)
    frame = preprocess(raw, spec.cam, hand_center(r.joints), crop_side, size)
    return frame, r


def random_pose(model: HandModel, rng: np.random.Generator, depth_mm=(400.0, 500.0),
                lateral_mm: float = 30.0, max_rotation: float = 0.3, curl: float = 0.6) -> np.ndarray:
    """A plausible pose in front of the default camera.

    Each articulation angle is uniform between its lower limit (or -0.2 rad
    if that is tighter) and ``curl`` of the way to its upper limit.
    """
    lo, hi = model.limits.lo, model.limits.hi
    theta = np.zeros(26)
    theta[:20] = rng.uniform(np.maximum(lo, -0.2), lo + curl * (hi - lo))
    theta[20:23] = rng.uniform(-max_rotation, max_rotation, 3)
    theta[23:25] = rng.uniform(-lateral_mm, lateral_mm, 2)
    theta[25] = rng.uniform(*depth_mm)
    return theta
