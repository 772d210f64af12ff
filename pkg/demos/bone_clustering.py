"""Two synthetic subjects with different hand proportions: fit each frame
independently, then check whether k-means on the fitted bone lengths
separates the subjects again.

    python demos/bone_clustering.py [frames-per-subject]
"""
import sys

import numpy as np

from gausshand.depth import quadtree_encode
from gausshand.energy import JointTarget, Observation
from gausshand.fitter import FitConfig, fit_frame
from gausshand.hand import default_hand_model
from gausshand.metrics import bone_cluster_f1
from gausshand.skeleton import LABELED_6, decode_bones
from gausshand.synth import random_pose, synthetic_frame


def fit_subject(model, beta, n, rng):
    lengths = []
    for _ in range(n):
        frame, truth = synthetic_frame(model, random_pose(model, rng), beta)
        obs = Observation(quadtree_encode(frame),
                          [JointTarget(j, "3d", truth.joints[j]) for j in LABELED_6], frame.cam)
        seed = truth.theta.copy()
        seed[:23] += rng.uniform(-0.1, 0.1, 23)
        seed[23:] += rng.uniform(-20, 20, 3)
        res = fit_frame(model, obs, config=FitConfig(seeds=(seed,)))
        lengths.append(decode_bones(model.bone_model, res.beta))
    return np.array(lengths)


def main(n=10):
    rng = np.random.default_rng(3)
    model = default_hand_model()
    big, small = np.zeros(20), np.zeros(20)
    big[0], small[0] = 2.0, -2.0
    a, b = fit_subject(model, big, n, rng), fit_subject(model, small, n, rng)
    print(f"true total bone length:   A {decode_bones(model.bone_model, big).sum():.1f} mm, "
          f"B {decode_bones(model.bone_model, small).sum():.1f} mm")
    print(f"fitted total (mean ± sd): A {a.sum(1).mean():.1f} ± {a.sum(1).std():.1f} mm, "
          f"B {b.sum(1).mean():.1f} ± {b.sum(1).std():.1f} mm")
    f1 = bone_cluster_f1(np.vstack([a, b]), ["A"] * n + ["B"] * n)
    print(f"cluster F1: A {f1['A']:.2f}, B {f1['B']:.2f}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 10)
