import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gausshand.errors import DegenerateClusters, EmptyCloud
from gausshand.metrics import bone_cluster_f1, kmeans, mdpc, mean_per_joint_error, pcf_curve
from gausshand.skeleton import euler_zyx

from oracles import nearest_distance


def test_mean_per_joint_error_examples(rng):
    gt = rng.normal(0, 50, (21, 3))
    assert mean_per_joint_error(gt, gt) == 0.0
    pred = gt.copy()
    pred[7] += (3.0, 4.0, 0.0)
    assert mean_per_joint_error(pred, gt, subset=[7]) == 5.0
    assert mean_per_joint_error(pred, gt) == pytest.approx(5.0 / 21)


def test_mean_per_joint_error_matches_double_loop(rng):
    pred = rng.normal(0, 50, (4, 21, 3))
    gt = rng.normal(0, 50, (4, 21, 3))
    subset = [0, 4, 8, 12, 16, 20]
    total, n = 0.0, 0
    for f in range(4):
        for j in subset:
            total += math.dist(pred[f, j], gt[f, j])
            n += 1
    assert mean_per_joint_error(pred, gt, subset) == pytest.approx(total / n, rel=1e-12)
    # ground truth given only for the subset
    assert mean_per_joint_error(pred, gt[:, subset], subset) == pytest.approx(total / n, rel=1e-12)


def test_pcf_examples(rng):
    assert np.all(pcf_curve(np.zeros(10), [0, 5, 10]) == 1.0)
    assert pcf_curve([10.0, 30.0], [20.0])[0] == 0.5
    errs = rng.uniform(0, 80, 37)
    thr = np.linspace(0, 80, 17)
    counted = [sum(1 for e in errs if e <= t) / len(errs) for t in thr]
    assert pcf_curve(errs, thr).tolist() == counted


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1e3), min_size=1, max_size=40),
       st.lists(st.floats(0, 1e3), min_size=1, max_size=20))
def test_pcf_is_monotone_and_bounded(errs, thr):
    curve = pcf_curve(errs, sorted(thr))
    assert np.all(np.diff(curve) >= 0)
    assert np.all((curve >= 0) & (curve <= 1))


def test_mdpc_examples(rng):
    cloud = rng.normal(0, 30, (50, 3))
    joints = np.repeat(cloud[3][None], 21, axis=0)
    assert np.all(mdpc(joints, cloud).per_joint == 0.0)
    single = mdpc(np.full((21, 3), (0.0, 0.0, 510.0)), [(0.0, 0.0, 500.0)])
    assert np.all(single.per_joint == 10.0)
    with pytest.raises(EmptyCloud):
        mdpc(joints, np.zeros((0, 3)))


def test_mdpc_matches_brute_force(rng):
    for _ in range(5):
        cloud = rng.normal(0, 40, (300, 3)) + [0, 0, 500]
        joints = rng.normal(0, 40, (21, 3)) + [0, 0, 500]
        ref = [nearest_distance(j, cloud) for j in joints]
        got = mdpc(joints, cloud)
        assert np.allclose(got.per_joint, ref, rtol=1e-12, atol=1e-12)
        assert got.median == pytest.approx(float(np.median(ref)), rel=1e-12)
        assert got.mean == pytest.approx(sum(ref) / 21, rel=1e-12)


def test_mdpc_rigid_invariance(rng):
    cloud = rng.normal(0, 40, (200, 3))
    joints = rng.normal(0, 40, (21, 3))
    R, t = euler_zyx(rng.uniform(-3, 3, 3)), rng.normal(0, 100, 3)
    a = mdpc(joints, cloud).per_joint
    b = mdpc(joints @ R.T + t, cloud @ R.T + t).per_joint
    assert np.allclose(a, b, rtol=1e-9, atol=1e-9)


def shape_groups(rng, n=30, spread=1.0):
    base = np.linspace(20, 80, 20)
    plus = base + 12.0 + rng.normal(0, spread, (n, 20))
    minus = base - 12.0 + rng.normal(0, spread, (n, 20))
    return np.vstack([plus, minus]), ["plus"] * n + ["minus"] * n


def test_cluster_f1_separable_groups(rng):
    X, labels = shape_groups(rng)
    assert bone_cluster_f1(X, labels) == {"plus": 1.0, "minus": 1.0}


def test_cluster_f1_identical_within_subject(rng):
    labels = rng.permutation(["a"] * 7 + ["b"] * 5)
    X = np.where((labels == "a")[:, None], np.full(20, 30.0), np.full(20, 31.0))
    assert bone_cluster_f1(X, labels) == {labels[0]: 1.0, [s for s in labels if s != labels[0]][0]: 1.0}


def test_cluster_f1_degenerate_and_invariant(rng):
    with pytest.raises(DegenerateClusters):
        bone_cluster_f1(np.ones((6, 20)), ["a"] * 3 + ["b"] * 3)
    X, labels = shape_groups(rng, spread=15.0)
    f = bone_cluster_f1(X, labels)
    assert all(0.0 <= v <= 1.0 for v in f.values())
    swapped = ["minus" if s == "plus" else "plus" for s in labels]
    g = bone_cluster_f1(X, swapped)
    assert g["plus"] == pytest.approx(f["minus"]) and g["minus"] == pytest.approx(f["plus"])


def test_kmeans_deterministic(rng):
    X, _ = shape_groups(rng, spread=10.0)
    a, ia = kmeans(X)
    b, ib = kmeans(X)
    assert np.array_equal(a, b) and ia == ib
