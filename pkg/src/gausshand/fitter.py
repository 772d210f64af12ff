"""Per-frame recovery of pose and bone shape by direct energy minimization.

Each run is adaptive-moment descent with step halving: a proposed step that
raises the energy is halved until it does not, so accepted energies never
increase. Runs start from every seed and go through the stage schedule; the
run ending at the lowest full energy wins, ties broken by seed index.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .energy import EnergyReport, EnergyWeights, Observation, total_energy
from .errors import NoSignal, NonPositiveBoneLength, ValidationError
from .hand import HandModel
from .skeleton import (
    GLOBAL_ROT,
    GLOBAL_TRANS,
    N_ARTIC,
    N_PARAMS,
    N_POSE,
    N_SHAPE,
    check_pose,
    decode_bones,
    euler_zyx_from_matrix,
    forward_kinematics,
)

log = logging.getLogger(__name__)

TERMS = ("dissim", "collision", "bone", "lim", "joint")
GROUPS = ("global", "articulation", "shape")


@dataclass(frozen=True)
class FitStage:
    terms: tuple = TERMS
    free: tuple = GROUPS
    max_iters: int | None = None   # None: FitConfig.max_iters

    def __post_init__(self):
        bad = [t for t in self.terms if t not in TERMS] + [g for g in self.free if g not in GROUPS]
        if bad:
            raise ValidationError("stages", f"unknown term or group {bad}")


DEFAULT_STAGES = (
    FitStage(terms=("dissim", "joint"), free=("global",), max_iters=100),
    FitStage(),
)


@dataclass(frozen=True)
class FitConfig:
    max_iters: int = 400
    step_size: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    tolerance: float = 1e-7
    patience: int = 10
    max_halvings: int = 30
    # step units per parameter group: one unit step moves this much
    rotation_unit: float = 1.0
    translation_unit_mm: float = 100.0
    shape_unit: float = 5.0
    seeds: tuple | None = None       # explicit seed poses (26-vectors); None: canonical poses
    seed_beta: tuple | None = None
    align_seeds: bool = True         # rigidly align canonical seeds to 3D targets when possible
    stages: tuple = DEFAULT_STAGES

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValidationError("max_iters", "must be at least 1")
        if not self.step_size > 0:
            raise ValidationError("step_size", "must be positive")
        for name in ("beta1", "beta2"):
            if not 0 <= getattr(self, name) < 1:
                raise ValidationError(name, "must lie in [0, 1)")
        if self.tolerance < 0:
            raise ValidationError("tolerance", "must be nonnegative")
        if not self.stages:
            raise ValidationError("stages", "need at least one stage")

    def replace(self, **kw) -> "FitConfig":
        return FitConfig(**{**self.__dict__, **kw})

    def units(self) -> np.ndarray:
        u = np.empty(N_PARAMS)
        u[:N_ARTIC] = self.rotation_unit
        u[GLOBAL_ROT] = self.rotation_unit
        u[GLOBAL_TRANS] = self.translation_unit_mm
        u[N_POSE:] = self.shape_unit
        return u


@dataclass
class FitResult:
    theta: np.ndarray
    beta: np.ndarray
    report: EnergyReport
    iterations: int
    seed_index: int
    joints: np.ndarray = field(repr=False)
    seed_energy: float = float("nan")
    energies: list = field(default_factory=list, repr=False)


def canonical_poses(model: HandModel) -> list[np.ndarray]:
    """Flat hand, half curl, fist, pinch and spread, articulation only (26-vectors)."""
    def pose(values):
        th = np.zeros(N_POSE)
        th[:N_ARTIC] = np.radians(values)
        return np.clip(th, np.r_[model.limits.lo, [-np.inf] * 6], np.r_[model.limits.hi, [np.inf] * 6])

    finger = lambda abd, a, b, c: [abd, a, b, c]
    flat = [0.0] * 20
    half = finger(0, 20, 25, 25) + finger(0, 45, 45, 30) * 4
    fist = finger(10, 40, 50, 60) + finger(0, 80, 95, 70) * 4
    pinch = finger(25, 35, 40, 40) + finger(0, 45, 50, 30) + finger(0, 10, 10, 5) * 3
    spread = finger(35, 0, 0, 0) + finger(15, 0, 0, 0) + finger(3, 0, 0, 0) + finger(-10, 0, 0, 0) + finger(-20, 0, 0, 0)
    return [pose(p) for p in (flat, half, fist, pinch, spread)]


def rigid_align(src: np.ndarray, dst: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Least-squares rotation R and translation t with ``R @ src + t ~ dst``."""
    cs, cd = src.mean(axis=0), dst.mean(axis=0)
    U, _, Vt = np.linalg.svd((src - cs).T @ (dst - cd))
    d = np.sign(np.linalg.det(Vt.T @ U.T))
    R = Vt.T @ np.diag([1.0, 1.0, d]) @ U.T
    return R, cd - R @ cs


def place_seed(model: HandModel, theta, beta, obs: Observation, center, align: bool) -> np.ndarray:
    """Put an articulation-only seed into the scene: aligned to 3D targets if possible, else at ``center``."""
    theta = np.array(theta, dtype=float)
    bones = decode_bones(model.bone_model, beta)
    local = theta.copy()
    local[20:] = 0.0
    P = forward_kinematics(model.topology, local, bones)
    pts = [(t.joint_index, t.value) for t in obs.targets if t.visible and t.kind == "3d"]
    if align and len(pts) >= 3:
        idx = [j for j, _ in pts]
        dst = np.array([v for _, v in pts])
        if np.linalg.matrix_rank(dst - dst.mean(axis=0), tol=1e-6) >= 2:
            R, t = rigid_align(P[idx], dst)
            theta[GLOBAL_ROT] = euler_zyx_from_matrix(R)
            theta[GLOBAL_TRANS] = t
            return theta
    theta[GLOBAL_TRANS] = np.asarray(center, dtype=float) - P.mean(axis=0)
    return theta


def default_center(obs: Observation) -> np.ndarray:
    pts = [t.value for t in obs.targets if t.visible and t.kind == "3d"]
    if pts:
        return np.mean(pts, axis=0)
    if obs.has_image:
        area = obs.sigma ** 2
        uv = (obs.mu * area[:, None]).sum(axis=0) / area.sum()
        z = float((obs.z * area).sum() / area.sum())
        return obs.cam.unproject(uv, z)
    raise NoSignal("no image blobs and no 3D targets to place a seed")


def stage_weights(weights: EnergyWeights, terms) -> EnergyWeights:
    off = {f"lambda_{t}": 0.0 for t in TERMS if t not in terms}
    return weights.replace(**off)


def free_mask(groups) -> np.ndarray:
    mask = np.zeros(N_PARAMS)
    if "articulation" in groups:
        mask[:N_ARTIC] = 1.0
    if "global" in groups:
        mask[20:N_POSE] = 1.0
    if "shape" in groups:
        mask[N_POSE:] = 1.0
    return mask


class _Objective:
    """Energy over the stacked (theta, beta) vector; invalid shapes evaluate to +inf."""

    def __init__(self, model, obs, weights):
        self.model, self.obs, self.weights = model, obs, weights
        self.evaluations = 0

    def __call__(self, x, with_grad=True):
        self.evaluations += 1
        try:
            return total_energy(self.model, x[:N_POSE], x[N_POSE:], self.obs, self.weights, with_grad)
        except NonPositiveBoneLength:
            return None


def descend(objective: _Objective, x0: np.ndarray, mask: np.ndarray, config: FitConfig,
            max_iters: int) -> tuple[np.ndarray, float, int, list]:
    """One adaptive-moment run with step halving. Returns (x, energy, iterations, energies)."""
    x = x0.copy()
    rep = objective(x)
    if rep is None:
        raise NonPositiveBoneLength("seed shape decodes to non-positive bone lengths")
    E, g = rep.e_total, rep.grad * mask
    energies = [E]
    lr = config.step_size * config.units() * mask
    m = np.zeros(N_PARAMS)
    v = np.zeros(N_PARAMS)
    scale = 1.0
    quiet = 0
    it = 0
    for it in range(1, max_iters + 1):
        m = config.beta1 * m + (1.0 - config.beta1) * g
        v = config.beta2 * v + (1.0 - config.beta2) * g * g
        mhat = m / (1.0 - config.beta1 ** it)
        vhat = v / (1.0 - config.beta2 ** it)
        step = lr * mhat / (np.sqrt(vhat) + config.eps)
        if not np.any(step):
            break
        accepted = None
        for _ in range(config.max_halvings):
            trial = x - scale * step
            r = objective(trial, with_grad=False)
            if r is not None and r.e_total <= E:
                accepted = trial, r.e_total
                break
            scale *= 0.5
        if accepted is None:
            break
        x, E_new = accepted
        decrease = E - E_new
        E = E_new
        energies.append(E)
        scale = min(1.0, 2.0 * scale)
        quiet = quiet + 1 if decrease <= config.tolerance * max(abs(E), 1e-12) else 0
        if quiet >= config.patience:
            break
        g = objective(x).grad * mask
    return x, E, it, energies


def fit_frame(model: HandModel, obs: Observation, weights: EnergyWeights = EnergyWeights(),
              config: FitConfig = FitConfig(), center=None) -> FitResult:
    """Fit pose and bone coefficients to one frame's image blobs and targets."""
    visible = [t for t in obs.targets if t.visible]
    if not obs.has_image and not visible:
        raise NoSignal("frame has neither image blobs nor visible targets")
    if not obs.has_image:
        weights = weights.replace(lambda_dissim=0.0)

    beta0 = np.zeros(N_SHAPE) if config.seed_beta is None else np.asarray(config.seed_beta, dtype=float)
    if config.seeds is None:
        c = default_center(obs) if center is None else center
        seeds = [place_seed(model, p, beta0, obs, c, config.align_seeds) for p in canonical_poses(model)]
    else:
        seeds = [check_pose(s) for s in config.seeds]

    full = _Objective(model, obs, weights)
    best = None
    for k, theta0 in enumerate(seeds):
        x = np.concatenate([theta0, beta0])
        seed_rep = full(x, with_grad=False)
        if seed_rep is None:
            log.warning("seed %d has an invalid shape; skipped", k)
            continue
        total_iters = 0
        trace = []
        for stage in config.stages:
            obj = _Objective(model, obs, stage_weights(weights, stage.terms))
            iters = stage.max_iters or config.max_iters
            x, _, n, energies = descend(obj, x, free_mask(stage.free), config, iters)
            total_iters += n
            trace += energies
        rep = full(x)
        if rep is None or rep.e_total > seed_rep.e_total:
            # keep the seed itself if the schedule ended above it
            x = np.concatenate([theta0, beta0])
            rep = full(x)
        log.debug("seed %d: %.6g -> %.6g in %d iterations", k, seed_rep.e_total, rep.e_total, total_iters)
        if best is None or rep.e_total < best[1].e_total:
            best = (x, rep, total_iters, k, seed_rep.e_total, trace)
    if best is None:
        raise NonPositiveBoneLength("no seed produced valid bone lengths")
    x, rep, iters, k, e0, trace = best
    theta, beta = x[:N_POSE].copy(), x[N_POSE:].copy()
    joints = forward_kinematics(model.topology, theta, decode_bones(model.bone_model, beta))
    return FitResult(theta, beta, rep, iters, k, joints, e0, trace)
