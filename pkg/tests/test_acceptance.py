"""Acceptance suite: one test per primary criterion, each printing a
PASS/FAIL line. Run directly with ``pytest tests/test_acceptance.py -v``."""
import time

import numpy as np

from gausshand.depth import ImageBlob, point_cloud, quadtree_encode
from gausshand.energy import (
    EnergyWeights,
    JointTarget,
    Observation,
    collision_energy,
    dissimilarity,
    overlap_2d,
    total_energy,
)
from gausshand.fitter import FitConfig, fit_frame
from gausshand.gauss import ProjectedBlob
from gausshand.metrics import bone_cluster_f1, mdpc
from gausshand.skeleton import LABELED_6, decode_bones
from gausshand.synth import random_pose, synthetic_frame

from oracles import central_diff, normwise_rel_error, quadrature_overlap
from states import away_from_kinks, check_leaves, frame_observation, perturbed_state


def report(capsys, n, name, ok, detail):
    with capsys.disabled():
        print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {n} ({name}): {detail}")
    assert ok, detail


def rendered_observation(model, theta, beta, targets=None):
    frame, r = synthetic_frame(model, theta, beta)
    pts = r.joints[list(LABELED_6)] if targets is None else targets
    tg = [JointTarget(j, "3d", p) for j, p in zip(LABELED_6, pts)]
    return frame, r, Observation(quadtree_encode(frame), tg, frame.cam)


def perturbed_seed(r, rng):
    seed = r.theta.copy()
    seed[:23] += rng.uniform(-0.1, 0.1, 23)
    seed[23:] += rng.uniform(-20, 20, 3)
    return seed


def test_1_gradient_correctness(model, rng, capsys):
    w = EnergyWeights(lambda_collision=1e-5, slack_s=3.0)
    t0 = time.perf_counter()
    checked, worst = 0, 0.0
    while checked < 100:
        obs, theta, beta = perturbed_state(model, rng)
        if not away_from_kinks(model, obs, theta, beta):
            continue
        x0 = np.concatenate([theta, beta])
        g = total_energy(model, theta, beta, obs, w).grad
        ref = central_diff(lambda x: total_energy(model, x[:26], x[26:], obs, w, False).e_total, x0, h=1e-5)
        worst = max(worst, normwise_rel_error(g, ref))
        checked += 1
    dt = time.perf_counter() - t0
    report(capsys, 1, "gradient correctness", worst < 1e-4 and dt < 60,
           f"max relative error {worst:.2e} over {checked} states in {dt:.1f} s")


def test_2_overlap_integrals(rng, capsys):
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(50):
        sa, sb = rng.uniform(2.0, 20.0, 2)
        spread = np.hypot(sa, sb) * rng.uniform(0.0, 2.5)
        a2 = rng.uniform(0, 128, 2)
        b2 = a2 + spread * rng.normal(size=2) / np.sqrt(2)
        ref = quadrature_overlap(a2, sa, b2, sb, dim=2)
        worst = max(worst, abs(overlap_2d(a2, sa, b2, sb) - ref) / ref)
        a3 = rng.uniform(-50, 50, 3)
        b3 = a3 + spread * rng.normal(size=3) / np.sqrt(3)
        ref = quadrature_overlap(a3, sa, b3, sb, dim=3)
        got = collision_energy(np.array([a3, b3]), np.array([sa, sb]), [(0, 1)])
        worst = max(worst, abs(got - ref) / ref)
    dt = time.perf_counter() - t0
    report(capsys, 2, "overlap integrals", worst < 1e-6 and dt < 60,
           f"max relative error {worst:.2e} over 50 pairs in 2D and 3D in {dt:.1f} s")


def test_3_quadtree_contract(model, rng, capsys):
    leaves, failure = 0, None
    for k in range(200):
        frame, _ = synthetic_frame(model, random_pose(model, rng), rng.normal(0, 1, 20))
        try:
            leaves += len(check_leaves(frame, 20.0))
        except AssertionError as exc:
            failure = f"frame {k}: {exc}"
            break
    report(capsys, 3, "quadtree contract", failure is None,
           failure or f"200 frames, {leaves} leaves, all within range or 1 px, exact tiling")


def test_4_dissimilarity_normalization(capsys):
    img = [ImageBlob((40.0, 50.0), 6.0, 480.0)]
    matched = -dissimilarity(img, [(ProjectedBlob((40.0, 50.0), 6.0, 480.0, 0), 9.0)])
    beyond = -dissimilarity(img, [(ProjectedBlob((40.0, 50.0), 6.0, 480.0 + 18.0 + 1e-9, 0), 9.0)])
    report(capsys, 4, "dissimilarity normalization", matched == 1.0 and beyond == 0.0,
           f"matched S_sim = {matched!r}, beyond cutoff S_sim = {beyond!r}")


def test_5_round_trip_fitting(model, rng, capsys):
    errors, times = [], []
    for _ in range(50):
        _, r, obs = rendered_observation(model, random_pose(model, rng), rng.normal(0, 0.5, 20))
        seed = perturbed_seed(r, rng)
        t0 = time.perf_counter()
        res = fit_frame(model, obs, config=FitConfig(seeds=(seed,)))
        times.append(time.perf_counter() - t0)
        errors.append(np.linalg.norm(res.joints - r.joints, axis=1).mean())
    frac = float(np.mean(np.array(errors) < 5.0))
    med = float(np.median(times))
    report(capsys, 5, "round-trip fitting", frac >= 0.9 and med < 2.0,
           f"{frac:.0%} of 50 trials under 5 mm (median error {np.median(errors):.2f} mm), "
           f"median time {med:.2f} s")


def test_6_bone_shape_identifiability(model, rng, capsys):
    lengths, subjects = [], []
    for name, sign in (("A", 1.0), ("B", -1.0)):
        beta = np.zeros(20)
        beta[0] = 2.0 * sign
        for _ in range(30):
            _, r, obs = rendered_observation(model, random_pose(model, rng), beta)
            res = fit_frame(model, obs, config=FitConfig(seeds=(perturbed_seed(r, rng),)))
            lengths.append(decode_bones(model.bone_model, res.beta))
            subjects.append(name)
    f1 = bone_cluster_f1(lengths, subjects)
    report(capsys, 6, "bone-shape identifiability", min(f1.values()) >= 0.9,
           f"F1 A = {f1['A']:.3f}, B = {f1['B']:.3f}")


def test_7_slack_behavior(model, rng, capsys):
    w = EnergyWeights(slack_s=25.0)
    rows, ok = [], True
    for _ in range(5):
        theta, beta = random_pose(model, rng), np.zeros(20)
        frame, r, _ = rendered_observation(model, theta, beta)
        d = rng.normal(size=(6, 3))
        targets = r.joints[list(LABELED_6)] + 20.0 * d / np.linalg.norm(d, axis=1, keepdims=True)
        _, _, obs = rendered_observation(model, theta, beta, targets)
        res = fit_frame(model, obs, w)
        cloud = point_cloud(frame)
        fitted = mdpc(res.joints[list(LABELED_6)], cloud).mean
        displaced = mdpc(targets, cloud).mean
        ok &= fitted < displaced
        rows.append(f"{fitted:.1f}<{displaced:.1f}" if fitted < displaced else f"{fitted:.1f}>={displaced:.1f}")
    report(capsys, 7, "slack behavior", ok, "fitted vs displaced-target MDPC (mm): " + ", ".join(rows))


def test_8_rigid_invariance(model, rng, capsys):
    worst = 0.0
    for _ in range(20):
        obs, r = frame_observation(model, rng)
        theta = r.theta.copy()
        theta[:20] += rng.uniform(-0.3, 0.3, 20)  # some angles leave their limits
        w = EnergyWeights(lambda_dissim=0.0)
        base = total_energy(model, theta, r.beta, obs, w, False)
        for _ in range(5):
            th = theta.copy()
            th[20:23] = rng.uniform(-np.pi, np.pi, 3)
            th[23:] += rng.uniform(-200, 200, 3)
            moved = total_energy(model, th, r.beta, obs, w, False)
            for a, b in ((moved.e_collision, base.e_collision), (moved.e_bone, base.e_bone),
                         (moved.e_lim, base.e_lim)):
                worst = max(worst, abs(a - b) / max(abs(b), 1e-300) if b else abs(a))
    report(capsys, 8, "rigid invariance", worst < 1e-9,
           f"max relative change {worst:.2e} over 100 rigid motions")
