"""Shared helpers: random energy states and the quadtree leaf check."""
import numpy as np
import pytest

from gausshand.depth import quadtree_encode, quadtree_leaves
from gausshand.energy import JointTarget, Observation
from gausshand.gauss import project_blobs
from gausshand.skeleton import LABELED_6, decode_bones, forward_kinematics
from gausshand.synth import random_pose, synthetic_frame


def frame_observation(model, rng, theta=None, beta=None, targets=True):
    theta = random_pose(model, rng) if theta is None else theta
    beta = rng.normal(0, 0.5, 20) if beta is None else beta
    frame, r = synthetic_frame(model, theta, beta)
    tg = [JointTarget(j, "3d", r.joints[j] + rng.normal(0, 5, 3)) for j in LABELED_6] if targets else []
    tg.append(JointTarget(12, "2d", frame.cam.project(r.joints[12]) + rng.normal(0, 3, 2)))
    return Observation(quadtree_encode(frame), tg, frame.cam), r


def away_from_kinks(model, obs, theta, beta, h=1e-5, margin=1e-3):
    """True unless a finite-difference stencil of half-width ``h`` would
    straddle one of the energy's nondifferentiable boundaries.

    Checked: the depth-weight cutoff (kept ``margin * sigma_h`` clear) and
    its peak at zero gap, for every pair with non-negligible 2D overlap,
    and the joint limits.
    """
    topo, bm, layout = model.topology, model.bone_model, model.layout
    x0 = np.concatenate([theta, beta])

    def depth_gaps(x):
        P = forward_kinematics(topo, x[:26], decode_bones(bm, x[26:]))
        mu, sp, zp = project_blobs(obs.cam, layout.centers(P), layout.sigma)
        return mu, sp, obs.z[:, None] - zp[None, :]

    mu, sp, dz = depth_gaps(x0)
    d2 = ((obs.mu[:, None, :] - mu[None, :, :]) ** 2).sum(axis=-1)
    ss = obs.sigma[:, None] ** 2 + sp[None, :] ** 2
    S = obs.sigma[:, None] ** 2 * sp[None, :] ** 2 / ss * np.exp(-d2 / (2 * ss))
    matters = S > 1e-9 * S.max()
    two_sh = 2 * layout.sigma[None, :]
    if np.any(matters & (np.abs(np.abs(dz) - two_sh) < margin * two_sh / 2)):
        return False
    for i in range(len(x0)):
        for step in (-h, h):
            x = x0.copy()
            x[i] += step
            _, _, dz2 = depth_gaps(x)
            crossed = (np.sign(dz2) != np.sign(dz)) | (np.sign(np.abs(dz2) - two_sh) != np.sign(np.abs(dz) - two_sh))
            if np.any(matters & crossed):
                return False
    lim = model.limits
    a = theta[:20]
    if np.any(np.abs(a - lim.lo) < 1e-3) or np.any(np.abs(a - lim.hi) < 1e-3):
        return False
    return True


def perturbed_state(model, rng):
    """A rendered frame with its observation, and a pose/shape near the generating one."""
    obs, r = frame_observation(model, rng)
    theta = r.theta + rng.uniform(-0.05, 0.05, 26) * np.r_[np.ones(23), 100 * np.ones(3)]
    beta = r.beta + rng.normal(0, 0.2, 20)
    return obs, theta, beta


def check_leaves(frame, c):
    leaves = quadtree_leaves(frame, c)
    cover = np.zeros(frame.depth.shape, dtype=int)
    for leaf in leaves:
        cover[leaf.r0:leaf.r1, leaf.c0:leaf.c1] += 1
        vals = [frame.depth[r, q] for r in range(leaf.r0, leaf.r1) for q in range(leaf.c0, leaf.c1)
                if frame.valid_mask[r, q]]
        assert len(vals) == leaf.n_valid
        one_px = (leaf.r1 - leaf.r0) == 1 and (leaf.c1 - leaf.c0) == 1
        if vals:
            assert max(vals) - min(vals) < c or one_px
            assert leaf.blob.z_i == pytest.approx(np.mean(vals), rel=1e-12)
            assert leaf.blob.sigma_i > 0
        else:
            assert leaf.blob is None
    assert np.all(cover == 1)
    assert sum(leaf.n_valid for leaf in leaves) == frame.n_valid
    return leaves
