import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from gausshand.errors import NonPositiveBoneLength, ValidationError
from gausshand.hand import default_skeleton_text, hand_model_from_dict
from gausshand.skeleton import (
    N_BONES,
    N_JOINTS,
    BoneLengthModel,
    JointLimitTable,
    SkeletonTopology,
    decode_bones,
    euler_zyx,
    euler_zyx_from_matrix,
    finger_joints,
    fk_jacobian,
    forward_kinematics,
    kinematics,
)
from gausshand.synth import random_pose

from oracles import central_diff, normwise_rel_error

finite = st.floats(-3.0, 3.0, allow_nan=False)


def test_default_topology_shape(model):
    topo = model.topology
    assert len(topo.joint_names) == N_JOINTS
    assert topo.n_dof == 26 and len(topo.dof_joint) == 20 and len(topo.bones()) == N_BONES
    assert topo.parents[0] == -1
    assert all(0 <= topo.parents[j] < j for j in range(1, N_JOINTS))
    # every articulation DOF sits on exactly one joint with a unit axis
    assert np.allclose(np.linalg.norm(topo.dof_axis, axis=1), 1.0)
    counts = np.bincount(topo.dof_joint, minlength=N_JOINTS)
    assert set(counts[counts > 0]) <= {1, 2}
    assert (counts == 2).sum() == 5 and (counts == 1).sum() == 10


def test_topology_rejects_cycle(model):
    topo = model.topology
    parents = topo.parents.copy()
    parents[5] = 7
    with pytest.raises(ValidationError):
        SkeletonTopology(topo.joint_names, parents, topo.bone_dirs, topo.joint_rest,
                         topo.dof_joint, topo.dof_axis)


def test_decode_bones_zero_and_unit(model):
    bm = model.bone_model
    assert np.array_equal(decode_bones(bm, np.zeros(20)), bm.b_avg)
    unit = BoneLengthModel(bm.b_avg, np.eye(20))
    for k in (0, 7, 19):
        e = np.zeros(20)
        e[k] = 1.0
        diff = decode_bones(unit, e) - bm.b_avg
        assert diff[k] == pytest.approx(1.0)
        assert np.count_nonzero(diff) == 1


def test_decode_bones_matches_scalar_matvec(rng):
    b_avg = rng.uniform(20, 80, 20)
    m = rng.normal(0, 2, (20, 20))
    beta = rng.normal(0, 1, 20)
    expected = []
    for i in range(20):
        s = b_avg[i]
        for j in range(20):
            s += m[i, j] * beta[j]
        expected.append(s)
    got = decode_bones(BoneLengthModel(b_avg, m), beta)
    assert np.allclose(got, expected, rtol=1e-12, atol=0)


def test_decode_bones_rejects_nonpositive(model):
    beta = np.zeros(20)
    beta[3] = -100.0
    with pytest.raises(NonPositiveBoneLength):
        decode_bones(model.bone_model, beta)


@settings(max_examples=50, deadline=None)
@given(st.lists(finite, min_size=20, max_size=20), st.lists(finite, min_size=20, max_size=20))
def test_decode_bones_is_affine(model, b1, b2):
    bm = model.bone_model
    b1, b2 = np.array(b1), np.array(b2)
    lhs = decode_bones(bm, b1) + decode_bones(bm, b2) - decode_bones(bm, np.zeros(20))
    assert np.allclose(lhs, decode_bones(bm, b1 + b2), rtol=1e-12, atol=1e-12)


def test_limit_table_needs_lo_below_hi():
    with pytest.raises(ValidationError):
        JointLimitTable(np.zeros(20), np.zeros(20))


def test_rest_pose_is_translated_layout(model):
    bones = model.bone_model.b_avg
    rest = forward_kinematics(model.topology, np.zeros(26), bones)
    theta = np.zeros(26)
    theta[23:] = [12.5, -3.0, 410.0]
    assert np.allclose(forward_kinematics(model.topology, theta, bones), rest + theta[23:], atol=1e-12)


def test_bone_lengths_preserved(model, rng):
    for _ in range(20):
        beta = rng.normal(0, 1, 20)
        bones = decode_bones(model.bone_model, beta)
        P = forward_kinematics(model.topology, random_pose(model, rng), bones)
        for k in range(N_BONES):
            child = k + 1
            d = np.linalg.norm(P[child] - P[model.topology.parents[child]])
            assert d == pytest.approx(bones[k], rel=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=3, max_size=3))
def test_translation_moves_every_joint(model, shift):
    rng = np.random.default_rng(0)
    theta = random_pose(model, rng)
    bones = model.bone_model.b_avg
    moved = theta.copy()
    moved[23:] += shift
    a = forward_kinematics(model.topology, theta, bones)
    b = forward_kinematics(model.topology, moved, bones)
    assert np.allclose(b - a, shift, atol=1e-9)


@pytest.mark.parametrize("dof", range(20))
def test_single_dof_rotates_descendants_about_knuckle(model, rng, dof):
    topo = model.topology
    bones = model.bone_model.b_avg
    theta = random_pose(model, rng)
    delta = 0.2
    kin = kinematics(topo, theta, bones)
    bumped = theta.copy()
    bumped[dof] += delta
    after = forward_kinematics(topo, bumped, bones)

    j = topo.dof_joint[dof]
    below = topo.subtree[j].copy()
    below[j] = False
    # explicit rotation about the knuckle, built independently of the FK code
    R = Rotation.from_rotvec(delta * kin.dof_axes[dof]).as_matrix()
    expected = kin.positions.copy()
    expected[below] = kin.positions[j] + (kin.positions[below] - kin.positions[j]) @ R.T
    assert np.allclose(after, expected, atol=1e-9)


def test_euler_round_trip(rng):
    for _ in range(50):
        a = rng.uniform([-np.pi, -1.5, -np.pi], [np.pi, 1.5, np.pi])
        assert np.allclose(euler_zyx_from_matrix(euler_zyx(a)), a, atol=1e-12)
        ref = Rotation.from_euler("ZYX", a).as_matrix()
        assert np.allclose(euler_zyx(a), ref, atol=1e-12)


def test_jacobian_matches_finite_differences(model, rng):
    topo, bm = model.topology, model.bone_model
    worst = 0.0
    for _ in range(100):
        theta = random_pose(model, rng)
        beta = rng.normal(0, 1, 20)
        x0 = np.concatenate([theta, beta])
        J = fk_jacobian(topo, theta, bm, beta)

        def fk(x):
            return forward_kinematics(topo, x[:26], decode_bones(bm, x[26:])).reshape(-1)

        ref = central_diff(fk, x0)
        worst = max(worst, normwise_rel_error(J, ref))
    assert worst < 1e-4


def test_jacobian_translation_columns(model, rng):
    J = fk_jacobian(model.topology, random_pose(model, rng), model.bone_model, np.zeros(20))
    J = J.reshape(21, 3, 46)
    for axis in range(3):
        block = J[:, :, 23 + axis]
        expected = np.zeros((21, 3))
        expected[:, axis] = 1.0
        assert np.array_equal(block, expected)


def test_jacobian_finger_independence(model, rng):
    topo = model.topology
    J = fk_jacobian(topo, random_pose(model, rng), model.bone_model, np.zeros(20)).reshape(21, 3, 46)
    for dof in range(20):
        f = topo.finger_of_dof(dof)
        for g in range(5):
            if g != f:
                assert not np.any(J[list(finger_joints(g)), :, dof])


def test_shipped_skeleton_round_trips_through_json(model):
    doc = json.loads(default_skeleton_text())
    again = hand_model_from_dict(doc)
    assert np.array_equal(again.bone_model.b_avg, model.bone_model.b_avg)
    assert len(again.blobs) == 26
