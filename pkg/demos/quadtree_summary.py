"""Show how the quadtree threshold trades blob count against fidelity on
one synthetic frame.

    python demos/quadtree_summary.py
"""
import numpy as np

from gausshand.depth import quadtree_leaves
from gausshand.hand import default_hand_model
from gausshand.synth import random_pose, synthetic_frame


def main():
    rng = np.random.default_rng(7)
    model = default_hand_model()
    frame, _ = synthetic_frame(model, random_pose(model, rng), np.zeros(20))
    print(f"{frame.n_valid} foreground pixels in a {frame.width}x{frame.height} crop")
    print("   c(mm)  blobs  1px-leaves  largest-blob-side(px)")
    for c in (5.0, 10.0, 20.0, 40.0, 80.0):
        leaves = [lf for lf in quadtree_leaves(frame, c) if lf.blob is not None]
        sides = np.array([max(lf.r1 - lf.r0, lf.c1 - lf.c0) for lf in leaves])
        print(f"{c:8.0f} {len(leaves):6d} {int(np.sum(sides == 1)):11d} {sides.max():14d}")


if __name__ == "__main__":
    main()
