"""Generative fitting energy and its analytic gradient.

    E = l_dissim * E_dissim + l_collision * E_collision + l_bone * E_bone
        + l_lim * E_lim + l_joint * E_joint

accumulated left to right in exactly this order. All Gaussians are
unit-peak, ``g(x) = exp(-|x - mu|^2 / (2 sigma^2))``, so 2D overlaps are in
px^2 and 3D overlaps in mm^3.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .depth import blob_arrays
from .errors import EmptyImage, MissingIntrinsics, ValidationError
from .gauss import CameraIntrinsics, project_blobs, projection_jacobian
from .hand import HandModel
from .skeleton import (
    N_ARTIC,
    N_JOINTS,
    N_POSE,
    JointLimitTable,
    check_pose,
    check_shape,
    decode_bones,
    fk_jacobian,
    kinematics,
)

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class EnergyWeights:
    lambda_dissim: float = 1.0
    lambda_collision: float = 1e-5
    lambda_bone: float = 1e-2
    lambda_lim: float = 1.0
    lambda_joint: float = 1e-4
    slack_s: float = 0.0

    def __post_init__(self):
        for name in ("lambda_dissim", "lambda_collision", "lambda_bone",
                     "lambda_lim", "lambda_joint", "slack_s"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise ValidationError(name, f"must be finite and nonnegative, got {v}")

    def replace(self, **kw) -> "EnergyWeights":
        return EnergyWeights(**{**self.__dict__, **kw})


@dataclass(frozen=True)
class JointTarget:
    """Supervision for one keypoint: a 3D point (mm) or a 2D pixel."""

    joint_index: int
    kind: str
    value: tuple
    visible: bool = True

    def __post_init__(self):
        if not 0 <= self.joint_index < N_JOINTS:
            raise ValidationError("joint_index", f"{self.joint_index} is not a keypoint index")
        kind = str(self.kind).lower()
        if kind not in ("2d", "3d"):
            raise ValidationError("kind", f"must be '2d' or '3d', got {self.kind!r}")
        value = tuple(float(v) for v in self.value)
        if len(value) != int(kind[0]) or not np.all(np.isfinite(value)):
            raise ValidationError("value", f"a {kind} target needs {kind[0]} finite numbers")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "value", value)


@dataclass
class EnergyReport:
    e_total: float
    e_dissim: float
    e_collision: float
    e_bone: float
    e_lim: float
    e_joint: float
    grad: np.ndarray | None = field(default=None, repr=False)

    def terms(self) -> dict:
        return {"e_total": self.e_total, "e_dissim": self.e_dissim,
                "e_collision": self.e_collision, "e_bone": self.e_bone,
                "e_lim": self.e_lim, "e_joint": self.e_joint}


# -- pairwise Gaussian overlaps ----------------------------------------------

def overlap_2d(mu_a, sigma_a: float, mu_b, sigma_b: float) -> float:
    """Integral over the plane of the product of two unit-peak 2D Gaussians."""
    d = np.asarray(mu_a, dtype=float) - np.asarray(mu_b, dtype=float)
    sa2, sb2 = sigma_a * sigma_a, sigma_b * sigma_b
    s2 = sa2 + sb2
    return float(TWO_PI * sa2 * sb2 / s2 * np.exp(-(d @ d) / (2.0 * s2)))


def overlap_3d(mu_a, sigma_a: float, mu_b, sigma_b: float) -> float:
    """Integral over space of the product of two unit-peak 3D Gaussians."""
    d = np.asarray(mu_a, dtype=float) - np.asarray(mu_b, dtype=float)
    sa2, sb2 = sigma_a * sigma_a, sigma_b * sigma_b
    s2 = sa2 + sb2
    return float((TWO_PI * sa2 * sb2 / s2) ** 1.5 * np.exp(-(d @ d) / (2.0 * s2)))


def depth_weight(z_i, z_p, sigma_h):
    """Linear fall-off of pair weight with depth gap, zero from ``2 * sigma_h`` on."""
    gap = np.abs(np.asarray(z_i, dtype=float) - np.asarray(z_p, dtype=float))
    w = 1.0 - gap / (2.0 * np.asarray(sigma_h, dtype=float))
    w = np.where(gap >= 2.0 * np.asarray(sigma_h), 0.0, w)
    return w if w.ndim else float(w)


def image_self_similarity(mu, sigma, chunk: int = 2048) -> float:
    """Sum of 2D overlaps over all ordered pairs of image blobs, self pairs included."""
    mu = np.asarray(mu, dtype=float)
    s2 = np.asarray(sigma, dtype=float) ** 2
    total = 0.0
    for a in range(0, len(s2), chunk):
        d = mu[a:a + chunk, None, :] - mu[None, :, :]
        d2 = np.einsum("ijk,ijk->ij", d, d)
        ss = s2[a:a + chunk, None] + s2[None, :]
        total += float(np.sum(TWO_PI * s2[a:a + chunk, None] * s2[None, :] / ss * np.exp(-d2 / (2.0 * ss))))
    return total


def _similarity(mu_i, s_i, z_i, mu_p, s_p, z_p, sigma_h, with_grad: bool):
    """Depth-weighted overlap sum and its gradient w.r.t. the model blobs.

    Returns ``(num, g)`` with ``g`` of shape (P, 4): d num / d(u, v, sigma_p, z_p).
    """
    d = mu_i[:, None, :] - mu_p[None, :, :]
    d2 = d[..., 0] ** 2 + d[..., 1] ** 2
    si2 = (s_i * s_i)[:, None]
    sp2 = (s_p * s_p)[None, :]
    ss = si2 + sp2
    S = TWO_PI * si2 * sp2 / ss * np.exp(-d2 / (2.0 * ss))
    dz = z_i[:, None] - z_p[None, :]
    two_sh = (2.0 * sigma_h)[None, :]
    inside = np.abs(dz) < two_sh
    W = np.where(inside, 1.0 - np.abs(dz) / two_sh, 0.0)
    WS = W * S
    num = float(WS.sum())
    if not with_grad:
        return num, None
    g = np.empty((len(s_p), 4))
    r = WS / ss
    g[:, 0] = np.einsum("ip,ip->p", r, d[..., 0])
    g[:, 1] = np.einsum("ip,ip->p", r, d[..., 1])
    g[:, 2] = (WS * (2.0 / s_p[None, :] - 2.0 * s_p[None, :] / ss + d2 * s_p[None, :] / (ss * ss))).sum(axis=0)
    g[:, 3] = (np.where(inside, np.sign(dz) / two_sh, 0.0) * S).sum(axis=0)
    return num, g


def dissimilarity(image_blobs, projected_blobs) -> float:
    """Negative normalized similarity between image blobs and projected model blobs.

    ``image_blobs``: iterable of ``ImageBlob``. ``projected_blobs``: iterable
    of ``(ProjectedBlob, sigma_h)`` pairs.
    """
    image_blobs = list(image_blobs)
    if not image_blobs:
        raise EmptyImage("no image blobs to compare against")
    mu_i = np.array([b.mu_i for b in image_blobs], dtype=float)
    s_i = np.array([b.sigma_i for b in image_blobs], dtype=float)
    z_i = np.array([b.z_i for b in image_blobs], dtype=float)
    projected_blobs = list(projected_blobs)
    if not projected_blobs:
        return 0.0
    mu_p = np.array([p.mu_p for p, _ in projected_blobs], dtype=float)
    s_p = np.array([p.sigma_p for p, _ in projected_blobs], dtype=float)
    z_p = np.array([p.z_p for p, _ in projected_blobs], dtype=float)
    sh = np.array([s for _, s in projected_blobs], dtype=float)
    num, _ = _similarity(mu_i, s_i, z_i, mu_p, s_p, z_p, sh, False)
    return -num / image_self_similarity(mu_i, s_i)


def collision_energy(centers, sigmas, pairs, with_grad: bool = False):
    """Sum of 3D overlaps over the given blob pairs; optionally d/d(centers)."""
    centers = np.asarray(centers, dtype=float)
    sigmas = np.asarray(sigmas, dtype=float)
    pairs = np.asarray(pairs, dtype=int).reshape(-1, 2)
    if len(pairs) == 0:
        return (0.0, np.zeros_like(centers)) if with_grad else 0.0
    j, k = pairs[:, 0], pairs[:, 1]
    diff = centers[j] - centers[k]
    sj2, sk2 = sigmas[j] ** 2, sigmas[k] ** 2
    ss = sj2 + sk2
    val = (TWO_PI * sj2 * sk2 / ss) ** 1.5 * np.exp(-np.einsum("ij,ij->i", diff, diff) / (2.0 * ss))
    e = float(val.sum())
    if not with_grad:
        return e
    gj = -(val / ss)[:, None] * diff
    grad = np.zeros_like(centers)
    np.add.at(grad, j, gj)
    np.add.at(grad, k, -gj)
    return e, grad


def collision(model_blobs_3d, exclusion_pairs=()) -> float:
    """Collision energy over all unordered pairs of ``(center, sigma)`` blobs not excluded."""
    blobs = list(model_blobs_3d)
    excluded = {tuple(sorted(p)) for p in exclusion_pairs}
    pairs = [(j, k) for j in range(len(blobs)) for k in range(j + 1, len(blobs))
             if (j, k) not in excluded]
    if not blobs:
        return 0.0
    centers = np.array([c for c, _ in blobs], dtype=float)
    sigmas = np.array([s for _, s in blobs], dtype=float)
    return collision_energy(centers, sigmas, pairs)


def bone_prior(beta) -> float:
    beta = np.asarray(beta, dtype=float)
    return float(beta @ beta)


def joint_limits(theta, limits: JointLimitTable, with_grad: bool = False):
    a = np.asarray(theta, dtype=float)[:N_ARTIC]
    below = np.minimum(a - limits.lo, 0.0)
    above = np.maximum(a - limits.hi, 0.0)
    e = float(below @ below + above @ above)
    if not with_grad:
        return e
    g = np.zeros(N_POSE)
    g[:N_ARTIC] = 2.0 * (below + above)
    return e, g


def _target_residual(F, target: JointTarget, cam):
    """Vector whose norm is the target's distance, and whose direction is its gradient."""
    if target.kind == "3d":
        return F - np.asarray(target.value)
    if cam is None:
        raise MissingIntrinsics(f"2D target on joint {target.joint_index} needs camera intrinsics")
    r = cam.ray(np.asarray(target.value))
    return F - (F @ r) * r


def joint_supervision(fk_positions, targets, cam: CameraIntrinsics | None = None,
                      slack_s: float = 0.0, with_grad: bool = False):
    """Slack-tolerant squared distances of keypoints to their 2D/3D targets.

    The 2D distance is to the viewing ray through the annotated pixel. With
    ``with_grad`` also returns d/d(positions), shape (21, 3).
    """
    P = np.asarray(fk_positions, dtype=float)
    e = 0.0
    grad = np.zeros_like(P) if with_grad else None
    for t in targets:
        if not t.visible:
            continue
        res = _target_residual(P[t.joint_index], t, cam)
        phi = float(np.sqrt(res @ res))
        if phi <= slack_s:
            continue
        e += (phi - slack_s) ** 2
        if with_grad:
            # d(phi)/dF = res / phi (the ray projector leaves res unchanged)
            grad[t.joint_index] += 2.0 * (1.0 - slack_s / phi) * res
    return (e, grad) if with_grad else e


# -- full energy --------------------------------------------------------------

class Observation:
    """Per-frame inputs to the energy: image blobs, targets and camera.

    The image self-similarity is computed once here.
    """

    def __init__(self, image_blobs=(), targets=(), cam: CameraIntrinsics | None = None):
        self.image_blobs = list(image_blobs)
        self.mu, self.sigma, self.z = blob_arrays(self.image_blobs)
        self.targets = [t for t in targets]
        self.cam = cam
        self.denominator = image_self_similarity(self.mu, self.sigma) if self.image_blobs else 0.0
        if self.image_blobs and cam is None:
            raise MissingIntrinsics("image blobs need the camera that produced them")

    @property
    def has_image(self) -> bool:
        return len(self.image_blobs) > 0


def total_energy(model: HandModel, theta, beta, obs: Observation,
                 weights: EnergyWeights = EnergyWeights(), with_grad: bool = True) -> EnergyReport:
    """Evaluate every term and, optionally, the gradient w.r.t. (theta, beta)."""
    theta = check_pose(theta)
    beta = check_shape(beta)
    w = weights
    topo, layout = model.topology, model.layout
    kin = kinematics(topo, theta, decode_bones(model.bone_model, beta))
    P = kin.positions
    centers = layout.centers(P)

    g_centers = np.zeros_like(centers) if with_grad else None
    g_joints = np.zeros_like(P) if with_grad else None

    e_dissim = 0.0
    if w.lambda_dissim > 0:
        if not obs.has_image:
            raise EmptyImage("dissimilarity term enabled but the frame has no image blobs")
        mu_p, s_p, z_p = project_blobs(obs.cam, centers, layout.sigma)
        num, g = _similarity(obs.mu, obs.sigma, obs.z, mu_p, s_p, z_p, layout.sigma, with_grad)
        e_dissim = -num / obs.denominator
        if with_grad:
            D = projection_jacobian(obs.cam, centers, layout.sigma)
            g_centers += (-w.lambda_dissim / obs.denominator) * np.einsum("nk,nkj->nj", g, D)

    if with_grad:
        e_collision, gc = collision_energy(centers, layout.sigma, layout.pairs, True)
        g_centers += w.lambda_collision * gc
        e_lim, g_lim = joint_limits(theta, model.limits, True)
        e_joint, gj = joint_supervision(P, obs.targets, obs.cam, w.slack_s, True)
        g_joints += w.lambda_joint * gj
    else:
        e_collision = collision_energy(centers, layout.sigma, layout.pairs)
        e_lim = joint_limits(theta, model.limits)
        e_joint = joint_supervision(P, obs.targets, obs.cam, w.slack_s)
    e_bone = bone_prior(beta)

    e_total = 0.0
    e_total += w.lambda_dissim * e_dissim
    e_total += w.lambda_collision * e_collision
    e_total += w.lambda_bone * e_bone
    e_total += w.lambda_lim * e_lim
    e_total += w.lambda_joint * e_joint

    grad = None
    if with_grad:
        # blob centers are fixed blends of their bone's two end joints
        t = layout.t[:, None]
        np.add.at(g_joints, layout.parent, (1.0 - t) * g_centers)
        np.add.at(g_joints, layout.child, t * g_centers)
        J = fk_jacobian(topo, theta, model.bone_model, beta, kin=kin)
        grad = g_joints.reshape(-1) @ J
        grad[:N_POSE] += w.lambda_lim * g_lim
        grad[N_POSE:] += w.lambda_bone * 2.0 * beta
    return EnergyReport(e_total, e_dissim, e_collision, e_bone, e_lim, e_joint, grad)

