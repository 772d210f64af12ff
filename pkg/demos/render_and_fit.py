"""Render a synthetic hand, fit it back from depth and six 3D keypoints,
and print how far the fitted joints landed from the truth.

    python demos/render_and_fit.py [seed]
"""
import sys
import time

import numpy as np

from gausshand.depth import quadtree_encode
from gausshand.energy import JointTarget, Observation
from gausshand.fitter import fit_frame
from gausshand.hand import default_hand_model
from gausshand.skeleton import LABELED_6
from gausshand.synth import random_pose, synthetic_frame


def main(seed=0):
    rng = np.random.default_rng(seed)
    model = default_hand_model()
    theta, beta = random_pose(model, rng), rng.normal(0, 0.5, 20)
    frame, truth = synthetic_frame(model, theta, beta)
    blobs = quadtree_encode(frame)
    print(f"rendered {frame.n_valid} foreground pixels, summarized by {len(blobs)} image Gaussians")

    targets = [JointTarget(j, "3d", truth.joints[j]) for j in LABELED_6]
    obs = Observation(blobs, targets, frame.cam)
    t0 = time.perf_counter()
    res = fit_frame(model, obs)  # canonical seeds, aligned to the targets
    dt = time.perf_counter() - t0

    err = np.linalg.norm(res.joints - truth.joints, axis=1)
    print(f"fit took {dt:.1f} s, best seed {res.seed_index}, {res.iterations} iterations")
    print(f"mean joint error {err.mean():.2f} mm, worst {err.max():.2f} mm (joint {err.argmax()})")
    r = res.report
    print(f"energies: dissim {r.e_dissim:.4f}  collision {r.e_collision:.1f}  "
          f"bone {r.e_bone:.3f}  lim {r.e_lim:.4f}  joint {r.e_joint:.2f}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 0)
